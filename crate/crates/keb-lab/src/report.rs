//! Machine-readable reports and the on-disk JSON grammar.
//!
//! Everything the binary prints flows through [`render_report`], so a
//! single formatter decides how numbers are written: finite reals carry
//! 17 significant digits and round-trip exactly. Reals that may be
//! non-finite (threshold endpoints at d = 1) are stored through
//! [`json_real`], which spells them as the quoted strings `"inf"`,
//! `"-inf"`, `"nan"`. Identical inputs plus an identical seed therefore
//! produce byte-identical reports.
//!
//! Channel spec files look like
//!
//! ```json
//! {
//!   "dim_in": 3,
//!   "dim_out": 3,
//!   "body": { "family": { "name": "werner_holevo",
//!                         "params": { "lambda": 0.5, "d": 3 } } }
//! }
//! ```
//!
//! with `"kraus": [matrix, ...]` and `"choi": {state}` as the other two
//! body kinds. Matrices are `{"rows", "cols", "entries": [[re, im], ...]}`
//! row-major; states reuse the `{"dimA", "dimB", "matrix"}` shape from the
//! separability module.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::io;
use std::path::Path;

use crate::channels::{family_make, ChannelBody, ChannelRep, Family};
use crate::core_linalg::{BipartiteOperator, CMatrix, CVector, ToleranceProfile};
use crate::keb::KebReport;
use crate::positivity::{Certificate, Evidence, Verdict};
use crate::{Error, Result};

pub const SCHEMA: &str = "keb-lab/1";

// ---------------------------------------------------------------------------
// matrices and vectors as JSON values

pub fn matrix_to_value(m: &CMatrix) -> Value {
    let mut entries = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            entries.push(json!([z.re, z.im]));
        }
    }
    json!({ "rows": m.nrows(), "cols": m.ncols(), "entries": entries })
}

pub fn matrix_from_value(v: &Value, what: &str) -> Result<CMatrix> {
    let obj = as_object(v, what)?;
    let rows = get_usize(obj, "rows", what)?;
    let cols = get_usize(obj, "cols", what)?;
    let entries = get(obj, "entries", what)?
        .as_array()
        .ok_or_else(|| Error::InvalidInput(format!("{what}: entries must be an array")))?;
    if entries.len() != rows * cols {
        return Err(Error::InvalidInput(format!(
            "{what}: expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let mut m = CMatrix::zeros(rows, cols);
    for (idx, e) in entries.iter().enumerate() {
        let z = complex_from_value(e, what)?;
        m[(idx / cols, idx % cols)] = z;
    }
    Ok(m)
}

pub fn vector_to_pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vector_from_pairs(pairs: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(
        pairs.len(),
        pairs.iter().map(|p| num_complex::Complex64::new(p[0], p[1])),
    )
}

fn complex_from_value(v: &Value, what: &str) -> Result<num_complex::Complex64> {
    let pair = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| Error::InvalidInput(format!("{what}: complex entries are [re, im]")))?;
    let part = |i: usize| {
        pair[i]
            .as_f64()
            .ok_or_else(|| Error::InvalidInput(format!("{what}: non-numeric complex part")))
    };
    Ok(num_complex::Complex64::new(part(0)?, part(1)?))
}

// ---------------------------------------------------------------------------
// channel specs

pub fn channel_to_value(phi: &ChannelRep) -> Value {
    let body = match &phi.body {
        ChannelBody::Kraus(vs) => {
            json!({ "kraus": vs.iter().map(matrix_to_value).collect::<Vec<_>>() })
        }
        ChannelBody::Choi(c) => json!({ "choi": state_to_value(c) }),
        ChannelBody::Family(f) => json!({ "family": family_to_value(f) }),
    };
    json!({ "dim_in": phi.dim_in, "dim_out": phi.dim_out, "body": body })
}

fn state_to_value(x: &BipartiteOperator) -> Value {
    let mut entries = Vec::with_capacity(x.mat.nrows() * x.mat.ncols());
    for i in 0..x.mat.nrows() {
        for j in 0..x.mat.ncols() {
            let z = x.mat[(i, j)];
            entries.push(json!([z.re, z.im]));
        }
    }
    json!({ "dimA": x.dim_a, "dimB": x.dim_b, "matrix": entries })
}

fn state_from_value(v: &Value, what: &str) -> Result<BipartiteOperator> {
    let obj = as_object(v, what)?;
    let dim_a = get_usize(obj, "dimA", what)?;
    let dim_b = get_usize(obj, "dimB", what)?;
    let n = dim_a * dim_b;
    let entries = get(obj, "matrix", what)?
        .as_array()
        .ok_or_else(|| Error::InvalidInput(format!("{what}: matrix must be an array")))?;
    if entries.len() != n * n {
        return Err(Error::InvalidInput(format!(
            "{what}: expected {} entries for dimA*dimB = {n}, got {}",
            n * n,
            entries.len()
        )));
    }
    let mut m = CMatrix::zeros(n, n);
    for (idx, e) in entries.iter().enumerate() {
        m[(idx / n, idx % n)] = complex_from_value(e, what)?;
    }
    BipartiteOperator::new(m, dim_a, dim_b)
}

fn family_to_value(f: &Family) -> Value {
    match f {
        Family::WernerHolevo { lambda, d } => {
            json!({ "name": "werner_holevo", "params": { "lambda": lambda, "d": d } })
        }
        Family::PhiLambda { lambda, d } => {
            json!({ "name": "phi_lambda", "params": { "lambda": lambda, "d": d } })
        }
        Family::WernerModified { lambda, gamma } => json!({
            "name": "werner_modified",
            "params": { "lambda": lambda, "gamma": channel_to_value(gamma) }
        }),
        Family::Schur { a } => json!({ "name": "schur", "params": { "a": matrix_to_value(a) } }),
        Family::AdV { v } => json!({ "name": "ad_v", "params": { "v": matrix_to_value(v) } }),
        Family::Identity { d } => json!({ "name": "identity", "params": { "d": d } }),
        Family::Transpose { d } => json!({ "name": "transpose", "params": { "d": d } }),
        Family::TraceMap { d } => json!({ "name": "trace_map", "params": { "d": d } }),
        Family::DirectSum { first, second } => json!({
            "name": "direct_sum",
            "params": { "first": channel_to_value(first), "second": channel_to_value(second) }
        }),
    }
}

pub fn channel_from_value(v: &Value) -> Result<ChannelRep> {
    let what = "channel spec";
    let obj = as_object(v, what)?;
    let dim_in = get_usize(obj, "dim_in", what)?;
    let dim_out = get_usize(obj, "dim_out", what)?;
    let body = as_object(get(obj, "body", what)?, "channel body")?;
    let phi = if let Some(kraus) = body.get("kraus") {
        let list = kraus
            .as_array()
            .ok_or_else(|| Error::InvalidInput("kraus body must be an array".into()))?;
        let ops = list
            .iter()
            .map(|m| matrix_from_value(m, "kraus operator"))
            .collect::<Result<Vec<_>>>()?;
        ChannelRep::from_kraus(ops)?
    } else if let Some(choi) = body.get("choi") {
        ChannelRep::from_choi(state_from_value(choi, "choi body")?)
    } else if let Some(family) = body.get("family") {
        family_from_value(family)?
    } else {
        return Err(Error::InvalidInput(
            "channel body needs one of kraus, choi, family".into(),
        ));
    };
    if phi.dim_in != dim_in || phi.dim_out != dim_out {
        return Err(Error::InvalidInput(format!(
            "declared dimensions {dim_in} -> {dim_out} do not match the constructed map {} -> {}",
            phi.dim_in, phi.dim_out
        )));
    }
    Ok(phi)
}

fn family_from_value(v: &Value) -> Result<ChannelRep> {
    let obj = as_object(v, "family body")?;
    let name = get(obj, "name", "family body")?
        .as_str()
        .ok_or_else(|| Error::InvalidInput("family name must be a string".into()))?;
    let what = "family params";
    let params = as_object(get(obj, "params", "family body")?, what)?;
    let family = match name {
        "werner_holevo" => Family::WernerHolevo {
            lambda: get_f64(params, "lambda", what)?,
            d: get_usize(params, "d", what)?,
        },
        "phi_lambda" => Family::PhiLambda {
            lambda: get_f64(params, "lambda", what)?,
            d: get_usize(params, "d", what)?,
        },
        "werner_modified" => Family::WernerModified {
            lambda: get_f64(params, "lambda", what)?,
            gamma: Box::new(channel_from_value(get(params, "gamma", what)?)?),
        },
        "schur" => Family::Schur {
            a: matrix_from_value(get(params, "a", what)?, "schur symbol")?,
        },
        "ad_v" => Family::AdV {
            v: matrix_from_value(get(params, "v", what)?, "ad_v operator")?,
        },
        "identity" => Family::Identity {
            d: get_usize(params, "d", what)?,
        },
        "transpose" => Family::Transpose {
            d: get_usize(params, "d", what)?,
        },
        "trace_map" => Family::TraceMap {
            d: get_usize(params, "d", what)?,
        },
        "direct_sum" => Family::DirectSum {
            first: Box::new(channel_from_value(get(params, "first", what)?)?),
            second: Box::new(channel_from_value(get(params, "second", what)?)?),
        },
        other => {
            return Err(Error::InvalidInput(format!("unknown family name {other}")));
        }
    };
    family_make(family)
}

pub fn render_channel(phi: &ChannelRep) -> String {
    render_value(&channel_to_value(phi))
}

pub fn parse_channel(text: &str) -> Result<ChannelRep> {
    let v: Value = serde_json::from_str(text)?;
    channel_from_value(&v)
}

pub fn load_channel(path: &Path) -> Result<ChannelRep> {
    parse_channel(&std::fs::read_to_string(path)?)
}

pub fn save_channel(path: &Path, phi: &ChannelRep) -> Result<()> {
    std::fs::write(path, render_channel(phi))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// report schema

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairJson {
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
}

/// Serializable mirror of [`Evidence`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvidenceJson {
    Eigenvalue {
        value: f64,
        vector: Vec<[f64; 2]>,
    },
    ViolatingVector {
        value: f64,
        schmidt_rank: usize,
        vector: Vec<[f64; 2]>,
    },
    ViolatingInput {
        min_eig: f64,
        input: Vec<[f64; 2]>,
    },
    SeparableDecomposition {
        residual: f64,
        pairs: Vec<PairJson>,
    },
    Analytic {
        criterion: String,
    },
    Absent,
}

impl From<&Evidence> for EvidenceJson {
    fn from(e: &Evidence) -> Self {
        match e {
            Evidence::Eigenvalue { value, vector } => EvidenceJson::Eigenvalue {
                value: *value,
                vector: vector_to_pairs(vector),
            },
            Evidence::ViolatingVector {
                vector,
                schmidt_rank,
                value,
            } => EvidenceJson::ViolatingVector {
                value: *value,
                schmidt_rank: *schmidt_rank,
                vector: vector_to_pairs(vector),
            },
            Evidence::ViolatingInput { input, min_eig } => EvidenceJson::ViolatingInput {
                min_eig: *min_eig,
                input: vector_to_pairs(input),
            },
            Evidence::SeparableDecomposition { pairs, residual } => {
                EvidenceJson::SeparableDecomposition {
                    residual: *residual,
                    pairs: pairs
                        .iter()
                        .map(|(a, b)| PairJson {
                            left: vector_to_pairs(a),
                            right: vector_to_pairs(b),
                        })
                        .collect(),
                }
            }
            Evidence::Analytic { criterion } => EvidenceJson::Analytic {
                criterion: criterion.clone(),
            },
            Evidence::Absent => EvidenceJson::Absent,
        }
    }
}

pub fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Holds => "HOLDS",
        Verdict::Fails => "FAILS",
        Verdict::Unknown => "UNKNOWN",
    }
}

/// One named verdict inside a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub verdict: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<String>,
    pub evidence: EvidenceJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_channel: Option<Value>,
}

pub fn entry_from_certificate(name: impl Into<String>, cert: &Certificate) -> ReportEntry {
    ReportEntry {
        name: name.into(),
        verdict: verdict_str(cert.verdict).to_string(),
        method: cert.method.clone(),
        warning: cert.warning.clone(),
        k: None,
        route: None,
        details: None,
        evidence: EvidenceJson::from(&cert.evidence),
        witness_channel: None,
    }
}

pub fn entry_from_keb(name: impl Into<String>, rep: &KebReport) -> ReportEntry {
    let mut entry = entry_from_certificate(name, &rep.verdict);
    entry.k = Some(rep.k);
    entry.route = Some(format!("{:?}", rep.route));
    entry.details = Some(rep.details.clone());
    entry.witness_channel = rep.witness.as_ref().map(channel_to_value);
    entry
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub label: String,
    /// `file:<path>` or `inline:<description>`.
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToleranceEcho {
    pub eps_psd: f64,
    pub eps_herm: f64,
    pub eps_sep: f64,
    pub eps_eq: f64,
    pub restarts: usize,
    pub samples: usize,
    pub seed: u64,
}

impl From<&ToleranceProfile> for ToleranceEcho {
    fn from(t: &ToleranceProfile) -> Self {
        Self {
            eps_psd: t.eps_psd,
            eps_herm: t.eps_herm,
            eps_sep: t.eps_sep,
            eps_eq: t.eps_eq,
            restarts: t.restarts,
            samples: t.samples,
            seed: t.seed,
        }
    }
}

impl ToleranceEcho {
    pub fn to_profile(&self) -> ToleranceProfile {
        ToleranceProfile {
            eps_psd: self.eps_psd,
            eps_herm: self.eps_herm,
            eps_sep: self.eps_sep,
            eps_eq: self.eps_eq,
            restarts: self.restarts,
            samples: self.samples,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRecord {
    pub step: String,
    pub ms: f64,
}

/// Top-level output of every subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    /// Argument vector after the program name, replayed by `--verify`.
    pub invocation: Vec<String>,
    pub inputs: Vec<InputRecord>,
    pub tolerance_profile: ToleranceEcho,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub verdicts: Vec<ReportEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<Vec<TimingRecord>>,
}

impl Report {
    pub fn new(command: &str, invocation: Vec<String>, tol: &ToleranceProfile) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            command: command.to_string(),
            invocation,
            inputs: Vec::new(),
            tolerance_profile: ToleranceEcho::from(tol),
            notes: Vec::new(),
            verdicts: Vec::new(),
            data: None,
            timings_ms: None,
        }
    }
}

pub fn parse_report(text: &str) -> Result<Report> {
    let report: Report = serde_json::from_str(text)?;
    if report.schema != SCHEMA {
        return Err(Error::InvalidInput(format!(
            "unsupported report schema {}, expected {SCHEMA}",
            report.schema
        )));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// deterministic JSON writer

/// Pretty printer whose reals carry 17 significant digits.
struct SciPretty {
    indent: usize,
    has_value: bool,
}

impl SciPretty {
    fn new() -> Self {
        Self {
            indent: 0,
            has_value: false,
        }
    }

    fn newline<W: ?Sized + io::Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl serde_json::ser::Formatter for SciPretty {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", f64::from(value))
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        self.has_value = false;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        if self.has_value {
            self.newline(w)?;
        }
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, _w: &mut W) -> io::Result<()> {
        self.has_value = true;
        Ok(())
    }
}

pub fn render_value(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciPretty::new());
    v.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serializer emits utf-8")
}

pub fn render_report(report: &Report) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciPretty::new());
    report.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serializer emits utf-8")
}

/// Real number as a JSON value, with non-finite values mapped to the
/// same quoted spellings the writer uses.
pub fn json_real(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        Value::String("nan".into())
    } else if x > 0.0 {
        Value::String("inf".into())
    } else {
        Value::String("-inf".into())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

// ---------------------------------------------------------------------------
// JSON object plumbing

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::InvalidInput(format!("{what} must be a JSON object")))
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, what: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::InvalidInput(format!("{what}: missing field {key}")))
}

fn get_usize(obj: &Map<String, Value>, key: &str, what: &str) -> Result<usize> {
    get(obj, key, what)?
        .as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| Error::InvalidInput(format!("{what}: field {key} must be a nonnegative integer")))
}

fn get_f64(obj: &Map<String, Value>, key: &str, what: &str) -> Result<f64> {
    get(obj, key, what)?
        .as_f64()
        .ok_or_else(|| Error::InvalidInput(format!("{what}: field {key} must be a number")))
}
