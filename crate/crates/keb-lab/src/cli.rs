//! The `keb-lab` binary: subcommands, flags, exit codes, and replay.
//!
//! Every command emits one report (JSON by default) on stdout. Exit codes:
//! 0 the command completed (verdicts may still say FAILS), 1 an internal
//! numeric gate or a replay comparison failed, 2 the input was unusable,
//! 3 a dimension exceeded `--max-dim`.
//!
//! `--verify <REPORT>` replays a stored report: input digests are
//! rechecked, the stored invocation is re-run and compared entry by
//! entry, and every stored FAILS verdict is recomputed from its stored
//! witness rather than trusted.

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::channels::{compose, family_make, ChannelRep, Family};
use crate::core_linalg::{
    kron, partial_transpose, re, BipartiteOperator, CMatrix, CVector, Side, ToleranceProfile,
};
use crate::keb::{keb_certify, keb_refute, keb_threshold, power_to_eb, ThresholdReport};
use crate::majorization::{conditional_majorization_check, keb_majorization_check};
use crate::positivity::{is_cp, is_positive_map, is_ppt_map, Verdict};
use crate::report::{
    self, entry_from_certificate, entry_from_keb, json_real, EvidenceJson, InputRecord, Report,
    ReportEntry, TimingRecord,
};
use crate::separability::{self, sep_certify, sep_necessary_inequality, sep_refute};
use crate::twirl::{
    twirl_cone_membership, twirl_monte_carlo, twirl_product_coeffs, twirl_project,
    COEFF_CONVENTION_NOTE, DEFAULT_SAMPLE_POINTS,
};
use crate::{Error, Result};

const MC_AGREEMENT_TOL: f64 = 5e-3;
const CROSS_CHECK_TOL: f64 = 1e-10;
const PROBE_STEP: f64 = 0.05;
const REPLAY_TOL: f64 = 1e-8;
const COMPARE_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "keb-lab", about = "analysis toolkit for k-entanglement-breaking maps")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Replay a stored report and recompute its violations.
    #[arg(long, global = true, value_name = "REPORT")]
    verify: Option<PathBuf>,
    /// PSD eigenvalue tolerance.
    #[arg(long, global = true, env = "KEB_LAB_TOL_PSD")]
    tol_psd: Option<f64>,
    /// Separable decomposition residual tolerance.
    #[arg(long, global = true, env = "KEB_LAB_TOL_SEP")]
    tol_sep: Option<f64>,
    /// Restarts for randomized searches.
    #[arg(long, global = true, env = "KEB_LAB_RESTARTS")]
    restarts: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long, global = true, env = "KEB_LAB_SAMPLES")]
    samples: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "KEB_LAB_SEED")]
    seed: Option<u64>,
    /// Largest allowed factor dimension.
    #[arg(long, global = true, env = "KEB_LAB_MAX_DIM", default_value_t = 6)]
    max_dim: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Record wall-clock step timings (breaks byte determinism).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Positivity, complete positivity, ppt, and the full order ladder.
    Analyze { spec: PathBuf },
    /// Certified and necessary lambda intervals for a parametric family.
    Threshold {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        d: usize,
        /// Orders to tabulate (comma separated); defaults to 1..=d.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        /// Probe endpoint sharpness with certify and refute runs.
        #[arg(long)]
        probe: bool,
    },
    /// Separability classification of a bipartite state file.
    Sep { state: PathBuf },
    /// Twirl a state file, or a pure product given by basis labels.
    Twirl {
        state: Option<PathBuf>,
        /// Two computational basis labels, e.g. --product e1 e2.
        #[arg(long, num_args = 2, value_name = "LABEL")]
        product: Option<Vec<String>>,
        /// Local dimension for --product mode.
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Spectral domination checks for a certified order.
    Majorize {
        spec: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Smallest verified power of the map that is entanglement breaking.
    Power {
        spec: PathBuf,
        #[arg(long)]
        k: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FamilyArg {
    #[value(name = "werner_holevo", alias = "werner-holevo")]
    WernerHolevo,
    #[value(name = "phi_lambda", alias = "phi-lambda")]
    PhiLambda,
}

impl FamilyArg {
    fn as_str(self) -> &'static str {
        match self {
            Self::WernerHolevo => "werner_holevo",
            Self::PhiLambda => "phi_lambda",
        }
    }

    fn instance(self, lambda: f64, d: usize) -> Family {
        match self {
            Self::WernerHolevo => Family::WernerHolevo { lambda, d },
            Self::PhiLambda => Family::PhiLambda { lambda, d },
        }
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run() -> i32 {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (code, out, err) = run_from(&args);
    print!("{out}");
    eprint!("{err}");
    code
}

/// Runs one invocation and returns (exit code, stdout, stderr).
pub fn run_from(args: &[String]) -> (i32, String, String) {
    let full = std::iter::once("keb-lab".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(full) {
        Ok(cli) => cli,
        Err(e) => {
            let msg = e.render().to_string();
            return if e.use_stderr() {
                (2, String::new(), msg)
            } else {
                (0, msg, String::new())
            };
        }
    };
    match execute(cli, args) {
        Ok(out) => (0, out, String::new()),
        Err(e) => (exit_code_for(&e), String::new(), format!("error: {e}\n")),
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::ResidualGate(_) => 1,
        Error::DimensionCap(..) => 3,
        _ => 2,
    }
}

fn execute(cli: Cli, raw: &[String]) -> Result<String> {
    if let Some(path) = &cli.verify {
        return run_verify(path);
    }
    let Some(command) = &cli.command else {
        return Err(Error::InvalidInput(
            "a subcommand or --verify <REPORT> is required".into(),
        ));
    };
    let tol = profile_from(&cli);
    let report = build_report(command, raw, &tol, cli.max_dim, cli.timings)?;
    match cli.format {
        Format::Json => Ok(report::render_report(&report)),
        Format::Csv => render_csv(&report),
        Format::Text => Ok(render_text(&report)),
    }
}

fn profile_from(cli: &Cli) -> ToleranceProfile {
    let mut tol = ToleranceProfile::default();
    if let Some(x) = cli.tol_psd {
        tol.eps_psd = x;
    }
    if let Some(x) = cli.tol_sep {
        tol.eps_sep = x;
    }
    if let Some(x) = cli.restarts {
        tol.restarts = x;
    }
    if let Some(x) = cli.samples {
        tol.samples = x;
    }
    if let Some(x) = cli.seed {
        tol.seed = x;
    }
    tol
}

fn build_report(
    cmd: &Command,
    raw: &[String],
    tol: &ToleranceProfile,
    max_dim: usize,
    timings: bool,
) -> Result<Report> {
    let mut steps = Steps::new(timings);
    let mut rep = match cmd {
        Command::Analyze { spec } => cmd_analyze(spec, tol, max_dim, &mut steps)?,
        Command::Threshold {
            family,
            d,
            k,
            probe,
        } => cmd_threshold(*family, *d, k, *probe, tol, max_dim, &mut steps)?,
        Command::Sep { state } => cmd_sep(state, tol, max_dim, &mut steps)?,
        Command::Twirl {
            state,
            product,
            dim,
        } => cmd_twirl(state.as_deref(), product.as_deref(), *dim, tol, max_dim, &mut steps)?,
        Command::Majorize { spec, k } => cmd_majorize(spec, *k, max_dim, &mut steps)?,
        Command::Power { spec, k } => cmd_power(spec, *k, tol, max_dim, &mut steps)?,
    };
    rep.invocation = raw.to_vec();
    rep.timings_ms = steps.finish();
    Ok(rep)
}

struct Steps {
    enabled: bool,
    last: Instant,
    records: Vec<TimingRecord>,
}

impl Steps {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            last: Instant::now(),
            records: Vec::new(),
        }
    }

    fn mark(&mut self, step: &str) {
        if self.enabled {
            let now = Instant::now();
            self.records.push(TimingRecord {
                step: step.to_string(),
                ms: now.duration_since(self.last).as_secs_f64() * 1e3,
            });
            self.last = now;
        }
    }

    fn finish(self) -> Option<Vec<TimingRecord>> {
        self.enabled.then_some(self.records)
    }
}

fn check_dims(dims: &[usize], max_dim: usize) -> Result<()> {
    for &d in dims {
        if d > max_dim {
            return Err(Error::DimensionCap(d, max_dim));
        }
    }
    Ok(())
}

fn file_input(path: &Path, label: &str) -> Result<(String, InputRecord)> {
    let text = std::fs::read_to_string(path)?;
    let record = InputRecord {
        label: label.to_string(),
        source: format!("file:{}", path.display()),
        sha256: report::sha256_hex(text.as_bytes()),
    };
    Ok((text, record))
}

fn inline_input(label: &str, desc: &str) -> InputRecord {
    InputRecord {
        label: label.to_string(),
        source: format!("inline:{desc}"),
        sha256: report::sha256_hex(desc.as_bytes()),
    }
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_analyze(
    spec: &Path,
    tol: &ToleranceProfile,
    max_dim: usize,
    steps: &mut Steps,
) -> Result<Report> {
    let (text, record) = file_input(spec, "channel")?;
    let phi = report::parse_channel(&text)?;
    check_dims(&[phi.dim_in, phi.dim_out], max_dim)?;
    let mut rep = Report::new("analyze", Vec::new(), tol);
    rep.inputs.push(record);
    rep.verdicts
        .push(entry_from_certificate("positivity", &is_positive_map(&phi, tol)?));
    steps.mark("positivity");
    rep.verdicts
        .push(entry_from_certificate("complete positivity", &is_cp(&phi, tol)?));
    steps.mark("complete positivity");
    rep.verdicts
        .push(entry_from_certificate("ppt", &is_ppt_map(&phi, tol)?));
    steps.mark("ppt");
    let mut highest: Option<usize> = None;
    let mut lowest_refuted: Option<usize> = None;
    for k in 1..=phi.dim_in {
        let cert = keb_certify(&phi, k, tol)?;
        match cert.verdict.verdict {
            Verdict::Holds => highest = Some(k),
            Verdict::Fails => {
                lowest_refuted.get_or_insert(k);
            }
            Verdict::Unknown => {}
        }
        let unresolved = cert.verdict.verdict == Verdict::Unknown;
        rep.verdicts.push(entry_from_keb(format!("order {k}"), &cert));
        if unresolved {
            let probe = keb_refute(&phi, k, tol)?;
            if probe.verdict.verdict == Verdict::Fails {
                lowest_refuted.get_or_insert(k);
            }
            rep.verdicts
                .push(entry_from_keb(format!("order {k} refutation probe"), &probe));
        }
        steps.mark(&format!("order {k}"));
    }
    rep.data = Some(json!({
        "highest_certified_order": highest.map_or(Value::Null, |k| json!(k)),
        "lowest_refuted_order": lowest_refuted.map_or(Value::Null, |k| json!(k)),
    }));
    Ok(rep)
}

fn cmd_threshold(
    family: FamilyArg,
    d: usize,
    ks: &[usize],
    probe: bool,
    tol: &ToleranceProfile,
    max_dim: usize,
    steps: &mut Steps,
) -> Result<Report> {
    check_dims(&[d], max_dim)?;
    let orders: Vec<usize> = if ks.is_empty() {
        (1..=d).collect()
    } else {
        ks.to_vec()
    };
    let name = family.as_str();
    let desc = format!("threshold family = {name}, d = {d}, k = {orders:?}");
    let mut rep = Report::new("threshold", Vec::new(), tol);
    rep.inputs.push(inline_input("parameters", &desc));
    let mut rows = Vec::new();
    for &k in &orders {
        let t = keb_threshold(&family.instance(0.0, d), k)?;
        rows.push(json!({
            "family": name,
            "d": d,
            "k": k,
            "certified": [json_real(t.certified[0]), json_real(t.certified[1])],
            "necessary": [json_real(t.necessary[0]), json_real(t.necessary[1])],
            "gap": t.gap.map_or(Value::Null, |g| json!([json_real(g[0]), json_real(g[1])])),
            "exact": t.exact,
            "details": t.details,
        }));
        if probe {
            probe_endpoints(&mut rep, family, d, k, &t, tol)?;
        }
        steps.mark(&format!("order {k}"));
    }
    rep.data = Some(json!({ "rows": rows }));
    Ok(rep)
}

fn probe_endpoints(
    rep: &mut Report,
    family: FamilyArg,
    d: usize,
    k: usize,
    t: &ThresholdReport,
    tol: &ToleranceProfile,
) -> Result<()> {
    for lambda in [t.certified[0], t.certified[1]] {
        if !lambda.is_finite() {
            continue;
        }
        let phi = family_make(family.instance(lambda, d))?;
        let r = keb_certify(&phi, k, tol)?;
        rep.verdicts
            .push(entry_from_keb(format!("order {k} certify at lambda = {lambda}"), &r));
    }
    for lambda in [t.necessary[0] - PROBE_STEP, t.necessary[1] + PROBE_STEP] {
        if !lambda.is_finite() {
            continue;
        }
        let phi = family_make(family.instance(lambda, d))?;
        let r = keb_refute(&phi, k, tol)?;
        rep.verdicts
            .push(entry_from_keb(format!("order {k} refute at lambda = {lambda}"), &r));
    }
    Ok(())
}

fn cmd_sep(
    state: &Path,
    tol: &ToleranceProfile,
    max_dim: usize,
    steps: &mut Steps,
) -> Result<Report> {
    let (text, record) = file_input(state, "state")?;
    let x = separability::parse_state(&text)?;
    check_dims(&[x.dim_a, x.dim_b], max_dim)?;
    let mut rep = Report::new("sep", Vec::new(), tol);
    rep.inputs.push(record);
    let refuter = sep_refute(&x, tol)?;
    steps.mark("entanglement refuter");
    let (certifier, _) = sep_certify(&x, tol)?;
    steps.mark("separability certifier");
    let classification = match (refuter.fails(), certifier.holds()) {
        (true, true) => {
            return Err(Error::ResidualGate(
                "the refuter found entanglement yet the certifier produced a separable decomposition"
                    .into(),
            ))
        }
        (true, false) => "ENTANGLED",
        (false, true) => "SEPARABLE",
        (false, false) => "UNDECIDED",
    };
    rep.verdicts
        .push(entry_from_certificate("entanglement refuter", &refuter));
    rep.verdicts
        .push(entry_from_certificate("separability certifier", &certifier));
    rep.data = Some(json!({ "classification": classification }));
    Ok(rep)
}

fn basis_vector(label: &str, d: usize) -> Result<CVector> {
    let idx: usize = label
        .strip_prefix('e')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            Error::InvalidInput(format!("basis labels look like e1, e2, ...; got {label}"))
        })?;
    if idx == 0 || idx > d {
        return Err(Error::InvalidInput(format!(
            "basis label {label} is outside 1..={d}"
        )));
    }
    let mut v = CVector::zeros(d);
    v[idx - 1] = re(1.0);
    Ok(v)
}

fn outer_vec(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

fn cmd_twirl(
    state: Option<&Path>,
    product: Option<&[String]>,
    dim: Option<usize>,
    tol: &ToleranceProfile,
    max_dim: usize,
    steps: &mut Steps,
) -> Result<Report> {
    let mut rep = Report::new("twirl", Vec::new(), tol);
    let mut cross_entry: Option<ReportEntry> = None;
    let (a, d, coeffs) = match (state, product) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidInput(
                "give a state file or --product, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "give a state file or --product with --dim".into(),
            ))
        }
        (Some(path), None) => {
            if dim.is_some() {
                return Err(Error::InvalidInput(
                    "--dim applies only to --product mode".into(),
                ));
            }
            let (text, record) = file_input(path, "state")?;
            let x = separability::parse_state(&text)?;
            check_dims(&[x.dim_a, x.dim_b], max_dim)?;
            rep.inputs.push(record);
            let d = x.dim_a;
            let (_, coeffs) = twirl_project(&x)?;
            (x, d, coeffs)
        }
        (None, Some(labels)) => {
            let d = dim.ok_or_else(|| {
                Error::InvalidInput("--product mode needs --dim".into())
            })?;
            check_dims(&[d], max_dim)?;
            let x = basis_vector(&labels[0], d)?;
            let y = basis_vector(&labels[1], d)?;
            let desc = format!("product {} {} dim {d}", labels[0], labels[1]);
            rep.inputs.push(inline_input("product", &desc));
            let coeffs = twirl_product_coeffs(&x, &y, d)?;
            let a = BipartiteOperator::new(kron(&outer_vec(&x), &outer_vec(&y)), d, d)?;
            let (_, projected) = twirl_project(&a)?;
            let dev = (coeffs.a - projected.a)
                .abs()
                .max((coeffs.b - projected.b).abs())
                .max((coeffs.c - projected.c).abs());
            let verdict = if dev <= CROSS_CHECK_TOL {
                Verdict::Holds
            } else {
                Verdict::Fails
            };
            cross_entry = Some(entry_from_certificate(
                "projection cross check",
                &crate::positivity::Certificate::new(
                    verdict,
                    crate::positivity::Evidence::Analytic {
                        criterion: format!("coefficient deviation {dev:.3e}"),
                    },
                    "closed form versus projection",
                ),
            ));
            (a, d, coeffs)
        }
    };
    steps.mark("coefficients");
    if let Some(e) = cross_entry {
        rep.verdicts.push(e);
    }
    let projected = coeffs.reconstruct(d);
    let mc = twirl_monte_carlo(&a, tol.samples, tol.seed)?;
    let dev = (&mc.mat - &projected.mat).norm();
    let verdict = if dev <= MC_AGREEMENT_TOL {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    rep.verdicts.push(entry_from_certificate(
        "monte carlo agreement",
        &crate::positivity::Certificate::new(
            verdict,
            crate::positivity::Evidence::Analytic {
                criterion: format!(
                    "frobenius deviation {dev:.6e} from {} samples",
                    tol.samples
                ),
            },
            "monte carlo twirl comparison",
        ),
    ));
    steps.mark("monte carlo");
    rep.verdicts.push(entry_from_certificate(
        "cone membership",
        &twirl_cone_membership(&coeffs, d, DEFAULT_SAMPLE_POINTS)?,
    ));
    steps.mark("cone membership");
    rep.notes.push(COEFF_CONVENTION_NOTE.to_string());
    rep.data = Some(json!({
        "d": d,
        "coefficients": { "a": coeffs.a, "b": coeffs.b, "c": coeffs.c },
        "monte_carlo_deviation": dev,
        "samples": tol.samples,
    }));
    Ok(rep)
}

fn cmd_majorize(spec: &Path, k: usize, max_dim: usize, steps: &mut Steps) -> Result<Report> {
    let (text, record) = file_input(spec, "channel")?;
    let phi = report::parse_channel(&text)?;
    check_dims(&[phi.dim_in, phi.dim_out], max_dim)?;
    let tol = ToleranceProfile::default();
    let mut rep = Report::new("majorize", Vec::new(), &tol);
    rep.inputs.push(record);
    let spectral = keb_majorization_check(&phi, k)?;
    steps.mark("spectral domination");
    let keff = k.min(phi.dim_in);
    let factor = phi.dim_in - keff + 1;
    let conditional = conditional_majorization_check(phi.choi(), factor)?;
    steps.mark("conditional domination");
    let mut spectral_entry = entry_from_certificate("spectral domination", &spectral);
    spectral_entry.k = Some(k);
    rep.verdicts.push(spectral_entry);
    let mut conditional_entry = entry_from_certificate("conditional domination", &conditional);
    conditional_entry.details = Some(format!("order parameter {factor} on the choi matrix"));
    rep.verdicts.push(conditional_entry);
    rep.data = Some(json!({ "k": k, "factor": factor }));
    Ok(rep)
}

fn cmd_power(
    spec: &Path,
    k: usize,
    tol: &ToleranceProfile,
    max_dim: usize,
    steps: &mut Steps,
) -> Result<Report> {
    let (text, record) = file_input(spec, "channel")?;
    let phi = report::parse_channel(&text)?;
    check_dims(&[phi.dim_in, phi.dim_out], max_dim)?;
    let mut rep = Report::new("power", Vec::new(), tol);
    rep.inputs.push(record);
    let m = power_to_eb(&phi, k)?;
    steps.mark("power bound");
    let mut pow = phi.clone();
    for _ in 1..m {
        pow = compose(&pow, &phi)?;
    }
    let (cert, _) = sep_certify(pow.choi(), tol)?;
    steps.mark("power separability");
    let mut entry = entry_from_certificate("power separability", &cert);
    entry.details = Some(format!("choi matrix of the map raised to the power {m}"));
    rep.verdicts.push(entry);
    rep.data = Some(json!({ "m": m }));
    Ok(rep)
}

// ---------------------------------------------------------------------------
// presentation

fn render_csv(rep: &Report) -> Result<String> {
    if rep.command != "threshold" {
        return Err(Error::InvalidInput(
            "csv output is only defined for the threshold command".into(),
        ));
    }
    let rows = rep
        .data
        .as_ref()
        .and_then(|d| d.get("rows"))
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidInput("threshold report carries no rows".into()))?;
    let mut out = String::from(
        "family,d,k,certified_lo,certified_hi,necessary_lo,necessary_hi,gap_lo,gap_hi,exact\n",
    );
    for r in rows {
        let gap = r.get("gap").cloned().unwrap_or(Value::Null);
        let (gap_lo, gap_hi) = match &gap {
            Value::Array(g) if g.len() == 2 => (csv_real(&g[0]), csv_real(&g[1])),
            _ => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r["family"].as_str().unwrap_or(""),
            r["d"],
            r["k"],
            csv_real(&r["certified"][0]),
            csv_real(&r["certified"][1]),
            csv_real(&r["necessary"][0]),
            csv_real(&r["necessary"][1]),
            gap_lo,
            gap_hi,
            r["exact"],
        );
    }
    Ok(out)
}

fn csv_real(v: &Value) -> String {
    match v {
        Value::Number(n) => format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => s.clone(),
        _ => String::new(),
    }
}

fn render_text(rep: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "keb-lab {} report", rep.command);
    for i in &rep.inputs {
        let short = &i.sha256[..12.min(i.sha256.len())];
        let _ = writeln!(s, "input {}: {} (sha256 {short})", i.label, i.source);
    }
    for v in &rep.verdicts {
        let _ = write!(s, "[{}] {}", v.verdict, v.name);
        if let Some(k) = v.k {
            let _ = write!(s, " (k = {k})");
        }
        let _ = writeln!(s, " via {}", v.method);
        if let Some(d) = &v.details {
            let _ = writeln!(s, "    {d}");
        }
        if let Some(w) = &v.warning {
            let _ = writeln!(s, "    warning: {w}");
        }
    }
    if let Some(d) = &rep.data {
        let _ = writeln!(s, "data: {d}");
    }
    for n in &rep.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

// ---------------------------------------------------------------------------
// replay

fn gate(msg: impl Into<String>) -> Error {
    Error::ResidualGate(msg.into())
}

fn run_verify(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)?;
    let stored = report::parse_report(&text)?;
    for input in &stored.inputs {
        if let Some(p) = input.source.strip_prefix("file:") {
            let bytes = std::fs::read(p)?;
            if report::sha256_hex(&bytes) != input.sha256 {
                return Err(Error::InvalidInput(format!(
                    "digest mismatch for input {} ({})",
                    input.label, input.source
                )));
            }
        } else if let Some(desc) = input.source.strip_prefix("inline:") {
            if report::sha256_hex(desc.as_bytes()) != input.sha256 {
                return Err(Error::InvalidInput(format!(
                    "digest mismatch for inline input {}",
                    input.label
                )));
            }
        }
    }
    let full = std::iter::once("keb-lab".to_string()).chain(stored.invocation.iter().cloned());
    let cli = Cli::try_parse_from(full)
        .map_err(|e| Error::InvalidInput(format!("stored invocation does not parse: {e}")))?;
    let Some(command) = &cli.command else {
        return Err(Error::InvalidInput(
            "stored invocation has no subcommand".into(),
        ));
    };
    let tol = stored.tolerance_profile.to_profile();
    let fresh = build_report(command, &stored.invocation, &tol, cli.max_dim, false)?;
    compare_reports(&stored, &fresh)?;
    let witnesses = recheck_witnesses(&stored, command, &tol)?;
    Ok(format!(
        "verify: OK - {} entries replayed, {} violations recomputed from stored witnesses\n",
        stored.verdicts.len(),
        witnesses
    ))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= COMPARE_TOL * (1.0 + a.abs().max(b.abs()))
}

fn evidence_matches(s: &EvidenceJson, f: &EvidenceJson) -> bool {
    use EvidenceJson as E;
    match (s, f) {
        (E::Eigenvalue { value: a, .. }, E::Eigenvalue { value: b, .. }) => close(*a, *b),
        (
            E::ViolatingVector {
                value: a,
                schmidt_rank: ra,
                ..
            },
            E::ViolatingVector {
                value: b,
                schmidt_rank: rb,
                ..
            },
        ) => close(*a, *b) && ra == rb,
        (E::ViolatingInput { min_eig: a, .. }, E::ViolatingInput { min_eig: b, .. }) => {
            close(*a, *b)
        }
        (
            E::SeparableDecomposition {
                residual: a,
                pairs: pa,
            },
            E::SeparableDecomposition {
                residual: b,
                pairs: pb,
            },
        ) => close(*a, *b) && pa.len() == pb.len(),
        (E::Analytic { criterion: a }, E::Analytic { criterion: b }) => a == b,
        (E::Absent, E::Absent) => true,
        _ => false,
    }
}

fn value_close(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => close(
            x.as_f64().unwrap_or(f64::NAN),
            y.as_f64().unwrap_or(f64::NAN),
        ),
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(u, v)| value_close(u, v))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter()
                    .all(|(k, u)| y.get(k).is_some_and(|v| value_close(u, v)))
        }
        _ => a == b,
    }
}

fn compare_reports(stored: &Report, fresh: &Report) -> Result<()> {
    if stored.command != fresh.command {
        return Err(gate("replay produced a different command"));
    }
    if stored.verdicts.len() != fresh.verdicts.len() {
        return Err(gate(format!(
            "replay produced {} entries, the report stores {}",
            fresh.verdicts.len(),
            stored.verdicts.len()
        )));
    }
    for (s, f) in stored.verdicts.iter().zip(&fresh.verdicts) {
        if s.name != f.name || s.verdict != f.verdict || s.method != f.method {
            return Err(gate(format!(
                "entry {} diverges on replay: stored {} via {}, fresh {} via {}",
                s.name, s.verdict, s.method, f.verdict, f.method
            )));
        }
        if !evidence_matches(&s.evidence, &f.evidence) {
            return Err(gate(format!("entry {}: evidence diverges on replay", s.name)));
        }
    }
    match (&stored.data, &fresh.data) {
        (None, None) => Ok(()),
        (Some(a), Some(b)) if value_close(a, b) => Ok(()),
        _ => Err(gate("report data diverges on replay")),
    }
}

fn rayleigh(m: &CMatrix, v: &CVector) -> f64 {
    let n2 = v.norm_squared();
    (v.adjoint() * m * v)[(0, 0)].re / n2
}

fn parse_necessary_params(method: &str) -> Result<(f64, Side)> {
    let start = method
        .find("lambda = ")
        .ok_or_else(|| gate(format!("cannot parse method string {method}")))?
        + "lambda = ".len();
    let tail = &method[start..];
    let end = tail.find(',').unwrap_or(tail.len());
    let lambda: f64 = tail[..end]
        .trim()
        .parse()
        .map_err(|_| gate(format!("cannot parse lambda in {method}")))?;
    let side = if method.ends_with("first") {
        Side::First
    } else if method.ends_with("second") {
        Side::Second
    } else {
        return Err(gate(format!("cannot parse side in {method}")));
    };
    Ok((lambda, side))
}

/// Recomputes one stored violation against the object it refers to.
fn verify_violation(
    entry: &ReportEntry,
    object: &BipartiteOperator,
    channel: Option<&ChannelRep>,
    tol: &ToleranceProfile,
) -> Result<bool> {
    match &entry.evidence {
        EvidenceJson::Eigenvalue { value, vector } => {
            let fresh = if entry.method == "partial transpose eigensolve" {
                let v = report::vector_from_pairs(vector);
                rayleigh(&partial_transpose(object, Side::First).mat, &v)
            } else if entry.method.starts_with("necessary inequality") {
                let (lambda, side) = parse_necessary_params(&entry.method)?;
                let cert = sep_necessary_inequality(object, lambda, side)?;
                if !cert.fails() {
                    return Err(gate(format!(
                        "entry {}: the stored necessary-inequality violation does not reproduce",
                        entry.name
                    )));
                }
                match cert.evidence {
                    crate::positivity::Evidence::Eigenvalue { value, .. } => value,
                    _ => return Err(gate("unexpected evidence from the necessary inequality")),
                }
            } else {
                let v = report::vector_from_pairs(vector);
                rayleigh(&object.mat, &v)
            };
            if *value >= 0.0 {
                return Err(gate(format!(
                    "entry {}: stored violation value {value} is not negative",
                    entry.name
                )));
            }
            if (fresh - value).abs() > REPLAY_TOL * (1.0 + value.abs()) {
                return Err(gate(format!(
                    "entry {}: stored violation {value} recomputes to {fresh}",
                    entry.name
                )));
            }
            Ok(true)
        }
        EvidenceJson::ViolatingVector { value, vector, .. } => {
            let v = report::vector_from_pairs(vector);
            let fresh = rayleigh(&object.mat, &v);
            if *value >= 0.0 || (fresh - value).abs() > REPLAY_TOL * (1.0 + value.abs()) {
                return Err(gate(format!(
                    "entry {}: stored violating vector gives {fresh}, report says {value}",
                    entry.name
                )));
            }
            Ok(true)
        }
        EvidenceJson::ViolatingInput { min_eig, input } => {
            let phi = channel.ok_or_else(|| {
                gate(format!("entry {}: violating input without a channel", entry.name))
            })?;
            let u = report::vector_from_pairs(input);
            let image = phi.apply(&outer_vec(&u))?;
            let fresh = crate::core_linalg::min_eig(&image, 1e-8)?;
            if *min_eig >= 0.0 || (fresh - min_eig).abs() > REPLAY_TOL * (1.0 + min_eig.abs()) {
                return Err(gate(format!(
                    "entry {}: stored violating input gives {fresh}, report says {min_eig}",
                    entry.name
                )));
            }
            Ok(true)
        }
        EvidenceJson::Analytic { .. } if entry.method == "realignment" => {
            let cert = sep_refute(object, tol)?;
            if !cert.fails() {
                return Err(gate(format!(
                    "entry {}: the stored realignment violation does not reproduce",
                    entry.name
                )));
            }
            Ok(true)
        }
        _ => Ok(false),
    }
}

fn recheck_witnesses(
    stored: &Report,
    command: &Command,
    tol: &ToleranceProfile,
) -> Result<usize> {
    let channel: Option<ChannelRep> = match command {
        Command::Analyze { spec }
        | Command::Majorize { spec, .. }
        | Command::Power { spec, .. } => Some(report::load_channel(spec)?),
        _ => None,
    };
    let state: Option<BipartiteOperator> = match command {
        Command::Sep { state } => Some(separability::load_state(state)?),
        Command::Twirl {
            state: Some(path), ..
        } => Some(separability::load_state(path)?),
        _ => None,
    };
    let mut count = 0;
    for entry in &stored.verdicts {
        if entry.verdict != "FAILS" {
            continue;
        }
        if let Some(wv) = &entry.witness_channel {
            let phi = match command {
                Command::Threshold { family, d, .. } => {
                    let lam: f64 = entry
                        .name
                        .rsplit("lambda = ")
                        .next()
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(|| {
                            gate(format!("entry {}: cannot recover lambda", entry.name))
                        })?;
                    family_make(family.instance(lam, *d))?
                }
                _ => channel
                    .clone()
                    .ok_or_else(|| gate("witness entry without a channel input"))?,
            };
            let psi = report::channel_from_value(wv)?;
            let composite = compose(&phi, &psi)?;
            if verify_violation(entry, composite.choi(), Some(&composite), tol)? {
                count += 1;
            }
        } else {
            let object: Option<&BipartiteOperator> = match (&state, &channel) {
                (Some(x), _) => Some(x),
                (None, Some(phi)) => Some(phi.choi()),
                (None, None) => None,
            };
            let Some(object) = object else { continue };
            if verify_violation(entry, object, channel.as_ref(), tol)? {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_linalg::omega_projector;
    use std::sync::Mutex;

    static ENV_LOCK: Mutex<()> = Mutex::new(());

    fn run(args: &[&str]) -> (i32, String, String) {
        let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        run_from(&owned)
    }

    fn tmp(name: &str) -> PathBuf {
        std::env::temp_dir().join(format!("keb-lab-cli-{}-{name}", std::process::id()))
    }

    fn write_spec(name: &str, fam: Family) -> PathBuf {
        let phi = family_make(fam).unwrap();
        let path = tmp(name);
        std::fs::write(&path, report::render_channel(&phi)).unwrap();
        path
    }

    fn parse_stdout(out: &str) -> Report {
        report::parse_report(out).expect("stdout is a report")
    }

    fn find<'a>(rep: &'a Report, name: &str) -> &'a ReportEntry {
        rep.verdicts
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("missing entry {name}"))
    }

    #[test]
    fn analyze_reports_the_werner_holevo_ladder() {
        let spec = write_spec("wh04.json", Family::WernerHolevo { lambda: 0.4, d: 3 });
        let (code, out, err) = run(&["analyze", spec.to_str().unwrap()]);
        assert_eq!(code, 0, "stderr: {err}");
        let rep = parse_stdout(&out);
        assert_eq!(find(&rep, "positivity").verdict, "HOLDS");
        assert_eq!(find(&rep, "complete positivity").verdict, "HOLDS");
        assert_eq!(find(&rep, "ppt").verdict, "FAILS");
        assert_eq!(find(&rep, "order 1").verdict, "HOLDS");
        assert_eq!(find(&rep, "order 2").verdict, "HOLDS");
        let o3 = find(&rep, "order 3");
        assert_eq!(o3.verdict, "FAILS");
        assert!(o3.witness_channel.is_some());
        let data = rep.data.unwrap();
        assert_eq!(data["highest_certified_order"], json!(2));
        assert_eq!(data["lowest_refuted_order"], json!(3));
    }

    #[test]
    fn analyze_identity_qubit_breaks_at_order_two() {
        let spec = write_spec("id2.json", Family::Identity { d: 2 });
        let (code, out, _) = run(&["analyze", spec.to_str().unwrap()]);
        assert_eq!(code, 0);
        let rep = parse_stdout(&out);
        assert_eq!(find(&rep, "complete positivity").verdict, "HOLDS");
        assert_eq!(find(&rep, "ppt").verdict, "FAILS");
        assert_eq!(find(&rep, "order 1").verdict, "HOLDS");
        let o2 = find(&rep, "order 2");
        assert_eq!(o2.verdict, "FAILS");
        assert!(o2.witness_channel.is_some());
    }

    #[test]
    fn analyze_reports_the_unresolved_strip() {
        let spec = write_spec("phi028.json", Family::PhiLambda { lambda: -0.28, d: 4 });
        let (code, out, _) = run(&["analyze", spec.to_str().unwrap()]);
        assert_eq!(code, 0);
        let rep = parse_stdout(&out);
        let o2 = find(&rep, "order 2");
        assert_eq!(o2.verdict, "UNKNOWN");
        let annotated = o2.details.as_deref().unwrap_or("").contains("unresolved")
            || o2.warning.as_deref().unwrap_or("").contains("unresolved");
        assert!(annotated, "order 2 should mention the unresolved strip");
        assert_eq!(find(&rep, "order 2 refutation probe").verdict, "UNKNOWN");
        assert_eq!(find(&rep, "order 3").verdict, "FAILS");
        let data = rep.data.unwrap();
        assert_eq!(data["highest_certified_order"], json!(1));
        assert_eq!(data["lowest_refuted_order"], json!(3));
    }

    #[test]
    fn threshold_tabulates_werner_holevo_and_stays_deterministic() {
        let args = ["threshold", "--family", "werner_holevo", "--d", "4"];
        let (code, out, _) = run(&args);
        assert_eq!(code, 0);
        let rep = parse_stdout(&out);
        let rows = rep.data.as_ref().unwrap()["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 4);
        let his = [1.0, 0.5, 1.0 / 3.0, 0.25];
        for (row, hi) in rows.iter().zip(his) {
            assert_eq!(row["certified"][0].as_f64().unwrap(), -1.0);
            assert!((row["certified"][1].as_f64().unwrap() - hi).abs() < 1e-15);
            assert_eq!(row["exact"], json!(true));
            assert!(row["gap"].is_null());
        }
        let (code2, out2, _) = run(&args);
        assert_eq!(code2, 0);
        assert_eq!(out, out2, "reports must be byte-identical across runs");

        let (code3, csv, _) = run(&[
            "threshold",
            "--family",
            "werner_holevo",
            "--d",
            "4",
            "--format",
            "csv",
        ]);
        assert_eq!(code3, 0);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "family,d,k,certified_lo,certified_hi,necessary_lo,necessary_hi,gap_lo,gap_hi,exact"
        );
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.contains("5.0000000000000000e-1"));
    }

    #[test]
    fn threshold_probes_phi_lambda_endpoints() {
        let (code, out, err) = run(&[
            "threshold",
            "--family",
            "phi_lambda",
            "--d",
            "3",
            "--k",
            "2",
            "--probe",
        ]);
        assert_eq!(code, 0, "stderr: {err}");
        let rep = parse_stdout(&out);
        let rows = rep.data.as_ref().unwrap()["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!((row["certified"][0].as_f64().unwrap() + 0.25).abs() < 1e-15);
        assert_eq!(row["certified"][1].as_f64().unwrap(), 1.0);
        assert!((row["necessary"][0].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(row["exact"], json!(false));
        assert!(!row["gap"].is_null());
        let certifies: Vec<_> = rep
            .verdicts
            .iter()
            .filter(|e| e.name.starts_with("order 2 certify"))
            .collect();
        assert_eq!(certifies.len(), 2);
        assert!(certifies.iter().all(|e| e.verdict == "HOLDS"));
        let refutes: Vec<_> = rep
            .verdicts
            .iter()
            .filter(|e| e.name.starts_with("order 2 refute"))
            .collect();
        assert_eq!(refutes.len(), 2);
        assert!(refutes.iter().all(|e| e.verdict == "FAILS"));
        assert!(refutes.iter().all(|e| e.witness_channel.is_some()));
    }

    #[test]
    fn sep_classifies_the_maximally_entangled_state() {
        let omega = BipartiteOperator::new(omega_projector(2), 2, 2).unwrap();
        let path = tmp("omega2.json");
        std::fs::write(&path, separability::render_state(&omega)).unwrap();
        let (code, out, _) = run(&["sep", path.to_str().unwrap()]);
        assert_eq!(code, 0);
        let rep = parse_stdout(&out);
        let refuter = find(&rep, "entanglement refuter");
        assert_eq!(refuter.verdict, "FAILS");
        assert_eq!(refuter.method, "partial transpose eigensolve");
        assert_ne!(find(&rep, "separability certifier").verdict, "HOLDS");
        assert_eq!(
            rep.data.as_ref().unwrap()["classification"],
            json!("ENTANGLED")
        );
    }

    #[test]
    fn twirl_product_mode_matches_the_closed_form() {
        let (code, out, err) = run(&["twirl", "--product", "e1", "e2", "--dim", "3"]);
        assert_eq!(code, 0, "stderr: {err}");
        let rep = parse_stdout(&out);
        let data = rep.data.as_ref().unwrap();
        let c = &data["coefficients"];
        assert!((c["a"].as_f64().unwrap() - 2.0 / 15.0).abs() < 1e-12);
        assert!((c["b"].as_f64().unwrap() + 1.0 / 30.0).abs() < 1e-12);
        assert!((c["c"].as_f64().unwrap() + 1.0 / 30.0).abs() < 1e-12);
        assert_eq!(find(&rep, "projection cross check").verdict, "HOLDS");
        assert_eq!(find(&rep, "monte carlo agreement").verdict, "HOLDS");
        assert_eq!(find(&rep, "cone membership").verdict, "HOLDS");
        assert!(rep.notes.iter().any(|n| n.contains("b and c are kept distinct")));
    }

    #[test]
    fn majorize_and_power_cover_the_certified_werner_point() {
        let spec = write_spec("wh05.json", Family::WernerHolevo { lambda: 0.5, d: 3 });
        let (code, out, err) = run(&["majorize", spec.to_str().unwrap(), "--k", "2"]);
        assert_eq!(code, 0, "stderr: {err}");
        let rep = parse_stdout(&out);
        assert_eq!(find(&rep, "spectral domination").verdict, "HOLDS");
        assert_eq!(find(&rep, "conditional domination").verdict, "HOLDS");
        assert_eq!(rep.data.as_ref().unwrap()["factor"], json!(2));

        let (code, out, err) = run(&["power", spec.to_str().unwrap(), "--k", "2"]);
        assert_eq!(code, 0, "stderr: {err}");
        let rep = parse_stdout(&out);
        assert_eq!(rep.data.as_ref().unwrap()["m"], json!(2));
        assert_eq!(find(&rep, "power separability").verdict, "HOLDS");
    }

    #[test]
    fn verify_replays_a_report_and_detects_tampering() {
        let spec = write_spec("id2v.json", Family::Identity { d: 2 });
        let (code, out, _) = run(&["analyze", spec.to_str().unwrap()]);
        assert_eq!(code, 0);
        let report_path = tmp("id2v-report.json");
        std::fs::write(&report_path, &out).unwrap();

        let (code, confirmation, err) = run(&["--verify", report_path.to_str().unwrap()]);
        assert_eq!(code, 0, "stderr: {err}");
        assert!(confirmation.contains("verify: OK"));
        assert!(confirmation.contains("violations recomputed"));

        let tampered = out.replacen("\"verdict\": \"FAILS\"", "\"verdict\": \"UNKNOWN\"", 1);
        assert_ne!(tampered, out);
        std::fs::write(&report_path, &tampered).unwrap();
        let (code, _, err) = run(&["--verify", report_path.to_str().unwrap()]);
        assert_eq!(code, 1, "stderr: {err}");

        std::fs::write(&report_path, &out).unwrap();
        std::fs::write(
            &spec,
            report::render_channel(&family_make(Family::Transpose { d: 2 }).unwrap()),
        )
        .unwrap();
        let (code, _, _) = run(&["--verify", report_path.to_str().unwrap()]);
        assert_eq!(code, 2);
    }

    #[test]
    fn exit_codes_separate_input_errors_from_caps() {
        let (code, _, _) = run(&["analyze", "/nonexistent/channel.json"]);
        assert_eq!(code, 2);

        let bad = tmp("bad.json");
        std::fs::write(&bad, "{ not json").unwrap();
        let (code, _, _) = run(&["analyze", bad.to_str().unwrap()]);
        assert_eq!(code, 2);

        let big = write_spec("id7.json", Family::Identity { d: 7 });
        let (code, _, _) = run(&["analyze", big.to_str().unwrap()]);
        assert_eq!(code, 3);

        let omega = BipartiteOperator::new(omega_projector(2), 2, 2).unwrap();
        let state = tmp("omega-csv.json");
        std::fs::write(&state, separability::render_state(&omega)).unwrap();
        let (code, _, _) = run(&["sep", state.to_str().unwrap(), "--format", "csv"]);
        assert_eq!(code, 2);

        let (code, _, _) = run(&[]);
        assert_eq!(code, 2);

        let (code, _, _) = run(&["twirl", "--product", "e9", "e1", "--dim", "3"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn flags_and_environment_override_the_profile() {
        let _guard = ENV_LOCK.lock().unwrap();
        let args = ["threshold", "--family", "werner_holevo", "--d", "2"];
        let with_seed = |seed: &'static str| {
            let mut v = vec!["--seed", seed];
            v.extend_from_slice(&args);
            v
        };

        let (_, out, _) = run(&with_seed("11"));
        assert_eq!(parse_stdout(&out).tolerance_profile.seed, 11);

        std::env::set_var("KEB_LAB_SEED", "23");
        let (_, out, _) = run(&args);
        assert_eq!(parse_stdout(&out).tolerance_profile.seed, 23);

        let (_, out, _) = run(&with_seed("4"));
        assert_eq!(parse_stdout(&out).tolerance_profile.seed, 4);
        std::env::remove_var("KEB_LAB_SEED");
    }
}
