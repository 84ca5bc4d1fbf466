//! Weak majorization and the spectral domination carried by
//! entanglement-breaking orders.
//!
//! The comparisons work on descending eigenvalue vectors with zero
//! padding, absolute prefix-sum slack 1e-9, and no relative slack, so the
//! prefix logic stays monotone. The two structural checks are the
//! conditional statement (a reduction-type hypothesis forces spectral
//! domination by a scaled partial trace) and its consequence for maps of
//! order k (the Choi spectrum is dominated by (d - k + 1) times either
//! partial trace spectrum).

use crate::channels::ChannelRep;
use crate::core_linalg::{
    hermitian_eig, identity, kron, partial_trace, BipartiteOperator, CMatrix, Side,
    ToleranceProfile,
};
use crate::keb::keb_certify;
use crate::positivity::{Certificate, Evidence, Verdict};
use crate::{Error, Result};

const PREFIX_SLACK: f64 = 1e-9;
const STOCHASTIC_SLACK: f64 = 1e-12;

/// Descending real spectrum with zero padding on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumVector {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Length after the most generous padding this vector participates in.
    pub padded_length: usize,
}

impl SpectrumVector {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let padded_length = values.len();
        Self {
            values,
            padded_length,
        }
    }

    /// Spectrum of a Hermitian matrix, descending.
    pub fn from_matrix(m: &CMatrix, tol: &ToleranceProfile) -> Result<Self> {
        let (values, _) = hermitian_eig(m, tol.eps_herm * m.norm().max(1.0))?;
        Ok(Self::new(values))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    fn padded(&self, n: usize) -> Vec<f64> {
        let mut out = self.values.clone();
        out.resize(n.max(out.len()), 0.0);
        out
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// HOLDS iff every prefix sum of x is at most the matching prefix sum of
/// y, after padding the shorter vector with zeros; slack 1e-9 absolute.
/// A FAILS certificate names the first violating prefix.
pub fn weakly_majorizes(y: &SpectrumVector, x: &SpectrumVector) -> Certificate {
    let n = x.values.len().max(y.values.len());
    let xs = x.padded(n);
    let ys = y.padded(n);
    let mut px = 0.0;
    let mut py = 0.0;
    for i in 0..n {
        px += xs[i];
        py += ys[i];
        if px > py + PREFIX_SLACK {
            return Certificate::new(
                Verdict::Fails,
                Evidence::Analytic {
                    criterion: format!(
                        "prefix {}: {px:.12} exceeds {py:.12}",
                        i + 1
                    ),
                },
                "prefix sum comparison",
            );
        }
    }
    Certificate::new(
        Verdict::Holds,
        Evidence::Analytic {
            criterion: format!("all {n} prefix sums dominated within slack {PREFIX_SLACK:.0e}"),
        },
        "prefix sum comparison",
    )
}

/// Weak majorization plus equality of the totals, slack 1e-9.
pub fn majorizes(y: &SpectrumVector, x: &SpectrumVector) -> Certificate {
    let sx = x.total();
    let sy = y.total();
    if (sx - sy).abs() > PREFIX_SLACK {
        return Certificate::new(
            Verdict::Fails,
            Evidence::Analytic {
                criterion: format!("total sums differ: {sx:.12} vs {sy:.12}"),
            },
            "prefix sum comparison",
        );
    }
    weakly_majorizes(y, x)
}

/// Entrywise nonnegative with all row and column sums at most 1 (slack
/// 1e-12). Entries with an imaginary part above the slack are rejected.
pub fn doubly_substochastic_check(d: &CMatrix) -> Result<Certificate> {
    for i in 0..d.nrows() {
        for j in 0..d.ncols() {
            if d[(i, j)].im.abs() > STOCHASTIC_SLACK {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) has imaginary part {:.3e}",
                    d[(i, j)].im
                )));
            }
            if d[(i, j)].re < -STOCHASTIC_SLACK {
                return Ok(Certificate::new(
                    Verdict::Fails,
                    Evidence::Analytic {
                        criterion: format!("entry ({i}, {j}) is negative: {:.3e}", d[(i, j)].re),
                    },
                    "substochastic inspection",
                ));
            }
        }
    }
    for i in 0..d.nrows() {
        let sum: f64 = (0..d.ncols()).map(|j| d[(i, j)].re).sum();
        if sum > 1.0 + STOCHASTIC_SLACK {
            return Ok(Certificate::new(
                Verdict::Fails,
                Evidence::Analytic {
                    criterion: format!("row {i} sums to {sum:.12}"),
                },
                "substochastic inspection",
            ));
        }
    }
    for j in 0..d.ncols() {
        let sum: f64 = (0..d.nrows()).map(|i| d[(i, j)].re).sum();
        if sum > 1.0 + STOCHASTIC_SLACK {
            return Ok(Certificate::new(
                Verdict::Fails,
                Evidence::Analytic {
                    criterion: format!("column {j} sums to {sum:.12}"),
                },
                "substochastic inspection",
            ));
        }
    }
    Ok(Certificate::new(
        Verdict::Holds,
        Evidence::Analytic {
            criterion: "entrywise nonnegative, every row and column sum at most 1".into(),
        },
        "substochastic inspection",
    ))
}

/// Restricts a PSD bipartite operator to the support of the chosen
/// marginal, so that the marginal becomes invertible on the compressed
/// factor. Null directions of the marginal carry no part of a PSD
/// operator, so the nonzero spectra are unchanged.
fn support_compression(
    x: &BipartiteOperator,
    side: Side,
    tol: &ToleranceProfile,
) -> Result<BipartiteOperator> {
    let marginal = partial_trace(x, side);
    let (values, vectors) = hermitian_eig(&marginal, tol.eps_herm * marginal.norm().max(1.0))?;
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = values.iter().filter(|v| **v > 1e-12 * top.max(1.0)).count();
    if rank == 0 || rank == values.len() {
        return Ok(x.clone());
    }
    let iso = vectors.columns(0, rank).into_owned();
    match side {
        Side::Second => {
            let embed = kron(&iso, &identity(x.dim_b));
            let mat = embed.adjoint() * &x.mat * embed;
            BipartiteOperator::new(mat, rank, x.dim_b)
        }
        Side::First => {
            let embed = kron(&identity(x.dim_a), &iso);
            let mat = embed.adjoint() * &x.mat * embed;
            BipartiteOperator::new(mat, x.dim_a, rank)
        }
    }
}

struct VariantOutcome {
    label: &'static str,
    hypothesis_min: f64,
    hypothesis_holds: bool,
    conclusion: Option<Certificate>,
}

fn conditional_variant(
    x: &BipartiteOperator,
    k: usize,
    side: Side,
    tol: &ToleranceProfile,
) -> Result<VariantOutcome> {
    let label = match side {
        Side::Second => "tr_2 side",
        Side::First => "tr_1 side",
    };
    let compressed = support_compression(x, side, tol)?;
    let marginal = partial_trace(&compressed, side);
    let hypothesis = match side {
        Side::Second => {
            kron(&marginal, &identity(compressed.dim_b)).scale(k as f64) - &compressed.mat
        }
        Side::First => {
            kron(&identity(compressed.dim_a), &marginal).scale(k as f64) - &compressed.mat
        }
    };
    let (hvals, _) = hermitian_eig(&hypothesis, tol.eps_herm * hypothesis.norm().max(1.0))?;
    let hypothesis_min = *hvals.last().expect("nonempty spectrum");
    let hypothesis_holds = hypothesis_min >= -tol.eps_psd * hypothesis.norm().max(1.0);
    let conclusion = if hypothesis_holds {
        let sx = SpectrumVector::from_matrix(&compressed.mat, tol)?;
        let sy = SpectrumVector::from_matrix(&marginal, tol)?.scaled(k as f64);
        Some(weakly_majorizes(&sy, &sx))
    } else {
        None
    };
    Ok(VariantOutcome {
        label,
        hypothesis_min,
        hypothesis_holds,
        conclusion,
    })
}

/// Conditional spectral domination for a PSD operator on d (x) d.
///
/// Each side evaluates the reduction-form hypothesis
/// k (tr_2(X) (x) I) - X >= 0 (respectively k (I (x) tr_1(X)) - X >= 0)
/// after compressing to the support of the marginal, and, when the
/// hypothesis holds, asserts the conclusion that the spectrum of X is
/// weakly dominated by k times the marginal spectrum. HOLDS when some
/// hypothesis holds and every asserted conclusion holds; FAILS when both
/// hypotheses fail (nothing is asserted then) or, which would signal a
/// numerical problem, when an asserted conclusion fails.
pub fn conditional_majorization_check(x: &BipartiteOperator, k: usize) -> Result<Certificate> {
    if k == 0 {
        return Err(Error::InvalidInput("the factor k must be at least 1".into()));
    }
    if x.dim_a != x.dim_b {
        return Err(Error::DimensionMismatch(format!(
            "equal tensor factors required, got {} and {}",
            x.dim_a, x.dim_b
        )));
    }
    let tol = ToleranceProfile::default();
    let scale = x.mat.norm().max(1.0);
    let (values, _) = hermitian_eig(&x.mat, tol.eps_herm * scale)?;
    if *values.last().expect("nonempty spectrum") < -tol.eps_psd * scale {
        return Err(Error::InvalidInput(
            "the conditional statement covers PSD operators".into(),
        ));
    }
    let variants = [
        conditional_variant(x, k, Side::Second, &tol)?,
        conditional_variant(x, k, Side::First, &tol)?,
    ];
    let mut summary: Vec<String> = Vec::new();
    let mut any_holds = false;
    let mut broken: Option<String> = None;
    for v in &variants {
        if v.hypothesis_holds {
            let concl = v.conclusion.as_ref().expect("conclusion evaluated");
            let status = if concl.holds() {
                any_holds = true;
                "conclusion holds"
            } else {
                broken = Some(format!("{}: {}", v.label, describe(concl)));
                "conclusion fails"
            };
            summary.push(format!(
                "{}: hypothesis holds (min eigenvalue {:.3e}), {status}",
                v.label, v.hypothesis_min
            ));
        } else {
            summary.push(format!(
                "{}: hypothesis fails (min eigenvalue {:.3e}), nothing asserted",
                v.label, v.hypothesis_min
            ));
        }
    }
    let criterion = summary.join("; ");
    if let Some(detail) = broken {
        return Ok(Certificate::new(
            Verdict::Fails,
            Evidence::Analytic { criterion },
            "conditional spectral domination",
        )
        .with_warning(format!(
            "a conclusion failed although its hypothesis holds ({detail}); this indicates a numerical problem"
        )));
    }
    if any_holds {
        Ok(Certificate::new(
            Verdict::Holds,
            Evidence::Analytic { criterion },
            "conditional spectral domination",
        ))
    } else {
        Ok(Certificate::new(
            Verdict::Fails,
            Evidence::Analytic { criterion },
            "conditional spectral domination",
        ))
    }
}

fn describe(cert: &Certificate) -> String {
    match &cert.evidence {
        Evidence::Analytic { criterion } => criterion.clone(),
        other => format!("{other:?}"),
    }
}

/// For a map certified at order k on M_d, the Choi spectrum is weakly
/// dominated by (d - k + 1) times the spectrum of either partial trace.
/// Uncertified input is rejected; a FAILS verdict would contradict the
/// structure theorem and is flagged as a numerical problem.
pub fn keb_majorization_check(phi: &ChannelRep, k: usize) -> Result<Certificate> {
    if k == 0 {
        return Err(Error::InvalidInput("the order k must be at least 1".into()));
    }
    if phi.dim_in != phi.dim_out {
        return Err(Error::DimensionMismatch(format!(
            "a square map is required, got {}x{}",
            phi.dim_in, phi.dim_out
        )));
    }
    let tol = ToleranceProfile::default();
    let report = keb_certify(phi, k, &tol)?;
    if !report.verdict.holds() {
        return Err(Error::InvalidInput(format!(
            "the map was not certified at order {k}; the domination factor has no backing"
        )));
    }
    let d = phi.dim_in;
    let keff = k.min(d);
    let factor = (d - keff + 1) as f64;
    let choi = phi.choi();
    let spectrum = SpectrumVector::from_matrix(&choi.mat, &tol)?;
    for side in [Side::First, Side::Second] {
        let marginal = partial_trace(choi, side);
        let dominating = SpectrumVector::from_matrix(&marginal, &tol)?.scaled(factor);
        let cert = weakly_majorizes(&dominating, &spectrum);
        if !cert.holds() {
            let side_name = match side {
                Side::First => "tr_1",
                Side::Second => "tr_2",
            };
            return Ok(Certificate::new(
                Verdict::Fails,
                cert.evidence,
                "spectral domination",
            )
            .with_warning(format!(
                "the {side_name} comparison at factor {factor} failed although the order is certified; this indicates a numerical problem"
            )));
        }
    }
    Ok(Certificate::new(
        Verdict::Holds,
        Evidence::Analytic {
            criterion: format!(
                "the Choi spectrum is weakly dominated by {factor} times the spectrum of each partial trace"
            ),
        },
        "spectral domination",
    ))
}
