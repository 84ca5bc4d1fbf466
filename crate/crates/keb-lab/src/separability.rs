//! Separability refutation and certification for bipartite PSD operators.
//!
//! Refutation stacks the partial-transposition test, the realignment test,
//! and a grid of necessary inequalities built from positivity of the map
//! tr(X) I + lambda (X + X^T). Certification runs cheap exact routes first
//! (single product term, the dimension-six Peres-Horodecki regime, the twirl
//! span) and falls back to a greedy product matching pursuit. Both sides are
//! one-sided: a FAILS always carries re-checkable evidence, a HOLDS either
//! carries a decomposition or is flagged analytic, everything else is
//! UNKNOWN.

use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelRep;
use crate::core_linalg::{
    from_rows, hermitian_eig, identity, kron, mat_approx_eq, min_eig, min_eig_vec, partial_trace,
    partial_transpose, re, realignment, singular_value_sum, svd, BipartiteOperator, CMatrix,
    CVector, Side, ToleranceProfile,
};
use crate::positivity::{Certificate, Evidence, Verdict};
use crate::twirl::{twirl_cone_membership, twirl_project, DEFAULT_SAMPLE_POINTS};
use crate::{Error, Result};

/// Lambda grid for the necessary-inequality battery; -1/2 is the theorem
/// endpoint, the rest over-check the affine family.
pub const LAMBDA_GRID: [f64; 4] = [-0.5, 0.0, 1.0, 10.0];

const MAX_PURSUIT_TERMS: usize = 500;
const PURSUIT_RESTARTS: usize = 6;
const PURSUIT_ITERATIONS: usize = 60;

/// Explicit product-form decomposition X = sum_i A_i (x) B_i with PSD
/// factors, together with the Frobenius residual of the sum.
#[derive(Debug, Clone)]
pub struct SeparableDecomposition {
    pub terms: Vec<(CMatrix, CMatrix)>,
    pub residual: f64,
}

impl SeparableDecomposition {
    /// Recomputes the residual against `x` and checks every factor for
    /// positivity; returns the recomputed residual.
    pub fn verify(&self, x: &BipartiteOperator, tol: &ToleranceProfile) -> Result<f64> {
        let mut sum = CMatrix::zeros(x.side(), x.side());
        for (a, b) in &self.terms {
            if a.nrows() != x.dim_a || a.ncols() != x.dim_a {
                return Err(Error::DimensionMismatch(format!(
                    "factor A is {}x{}, expected {}",
                    a.nrows(),
                    a.ncols(),
                    x.dim_a
                )));
            }
            if b.nrows() != x.dim_b || b.ncols() != x.dim_b {
                return Err(Error::DimensionMismatch(format!(
                    "factor B is {}x{}, expected {}",
                    b.nrows(),
                    b.ncols(),
                    x.dim_b
                )));
            }
            for factor in [a, b] {
                let gate = 1e-9 * factor.norm().max(1.0);
                let value = min_eig(factor, gate)?;
                if value < -tol.eps_psd {
                    return Err(Error::InvalidInput(format!(
                        "decomposition factor has eigenvalue {value:.3e}"
                    )));
                }
            }
            sum += kron(a, b);
        }
        Ok((&x.mat - sum).norm())
    }
}

fn require_psd(x: &BipartiteOperator, tol: &ToleranceProfile) -> Result<()> {
    let gate = tol.eps_herm.max(1e-10) * x.mat.norm().max(1.0);
    let value = min_eig(&x.mat, gate)?;
    if value < -tol.eps_psd {
        return Err(Error::InvalidInput(format!(
            "input is not PSD: smallest eigenvalue {value:.3e}"
        )));
    }
    Ok(())
}

fn min_pair(m: &CMatrix, tol: &ToleranceProfile) -> Result<(f64, CVector)> {
    min_eig_vec(m, tol.eps_herm.max(1e-10) * m.norm().max(1.0))
}

fn max_eig_vec(m: &CMatrix) -> Result<(f64, CVector)> {
    let (values, vectors) = hermitian_eig(m, 1e-10 * m.norm().max(1.0))?;
    Ok((values[0], vectors.column(0).into_owned()))
}

/// lambda X + lambda (transpose on `side`) X + (identity (x) opposite
/// marginal), the operator whose positivity is necessary for separability.
fn necessary_operator(x: &BipartiteOperator, lambda: f64, side: Side) -> CMatrix {
    let l = re(lambda);
    let pt = partial_transpose(x, side);
    let marginal = partial_trace(x, side);
    let embedded = match side {
        Side::First => kron(&identity(x.dim_a), &marginal),
        Side::Second => kron(&marginal, &identity(x.dim_b)),
    };
    &x.mat * l + pt.mat * l + embedded
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::First => "first",
        Side::Second => "second",
    }
}

/// Entanglement refuter. Runs, in order: partial transposition, realignment,
/// and the necessary-inequality grid (square case only); the first violation
/// is returned as FAILS, otherwise UNKNOWN.
pub fn sep_refute(x: &BipartiteOperator, tol: &ToleranceProfile) -> Result<Certificate> {
    require_psd(x, tol)?;
    let scale = x.mat.norm().max(1.0);
    let pt = partial_transpose(x, Side::First);
    let (value, vector) = min_pair(&pt.mat, tol)?;
    if value < -tol.eps_psd {
        return Ok(Certificate::new(
            Verdict::Fails,
            Evidence::Eigenvalue { value, vector },
            "partial transpose eigensolve",
        ));
    }
    let trace = x.mat.trace().re;
    let sum = singular_value_sum(&realignment(x))?;
    if sum > trace + tol.eps_psd * scale {
        return Ok(Certificate::new(
            Verdict::Fails,
            Evidence::Analytic {
                criterion: format!(
                    "realignment singular value sum {sum:.12e} exceeds trace {trace:.12e}"
                ),
            },
            "realignment",
        ));
    }
    if x.dim_a == x.dim_b {
        for &lambda in &LAMBDA_GRID {
            for side in [Side::First, Side::Second] {
                let op = necessary_operator(x, lambda, side);
                let (value, vector) = min_pair(&op, tol)?;
                if value < -tol.eps_psd {
                    return Ok(Certificate::new(
                        Verdict::Fails,
                        Evidence::Eigenvalue { value, vector },
                        format!(
                            "necessary inequality, lambda = {lambda}, transposed factor = {}",
                            side_name(side)
                        ),
                    ));
                }
            }
        }
    }
    Ok(Certificate::new(
        Verdict::Unknown,
        Evidence::Absent,
        "no violation from ppt, realignment, or the necessary-inequality grid",
    ))
}

/// One necessary inequality, decided exactly by an eigensolve.
pub fn sep_necessary_inequality(
    x: &BipartiteOperator,
    lambda: f64,
    side: Side,
) -> Result<Certificate> {
    let tol = ToleranceProfile::default();
    if x.dim_a != x.dim_b {
        return Err(Error::DimensionMismatch(format!(
            "the necessary inequality needs equal factors, got {}x{}",
            x.dim_a, x.dim_b
        )));
    }
    if lambda < -0.5 {
        return Err(Error::InvalidInput(format!(
            "lambda = {lambda} is outside [-1/2, inf)"
        )));
    }
    require_psd(x, &tol)?;
    let op = necessary_operator(x, lambda, side);
    let (value, vector) = min_pair(&op, &tol)?;
    let verdict = if value >= -tol.eps_psd {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    Ok(Certificate::new(
        verdict,
        Evidence::Eigenvalue { value, vector },
        format!(
            "necessary inequality eigensolve, lambda = {lambda}, transposed factor = {}",
            side_name(side)
        ),
    ))
}

/// Both entanglement-breaking necessary inequalities of a square map over a
/// lambda grid: (I (x) Phi(I)) + lambda (C + C with first factor transposed)
/// and the mirrored form. FAILS certifies the map is not EB.
pub fn eb_necessary(phi: &ChannelRep, lambda_grid: &[f64]) -> Result<Certificate> {
    if phi.dim_in != phi.dim_out {
        return Err(Error::DimensionMismatch(format!(
            "eb_necessary needs a square map, got {} -> {}",
            phi.dim_in, phi.dim_out
        )));
    }
    if lambda_grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    for &lambda in lambda_grid {
        if lambda < -0.5 {
            return Err(Error::InvalidInput(format!(
                "lambda = {lambda} is outside [-1/2, inf)"
            )));
        }
    }
    let tol = ToleranceProfile::default();
    let choi = phi.choi();
    let mut worst: Option<(f64, CVector, f64, Side)> = None;
    for &lambda in lambda_grid {
        for side in [Side::First, Side::Second] {
            let op = necessary_operator(choi, lambda, side);
            let (value, vector) = min_pair(&op, &tol)?;
            if worst.as_ref().map_or(true, |w| value < w.0) {
                worst = Some((value, vector, lambda, side));
            }
        }
    }
    let (value, vector, lambda, side) = worst.expect("nonempty grid");
    let verdict = if value >= -tol.eps_psd {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    Ok(Certificate::new(
        verdict,
        Evidence::Eigenvalue { value, vector },
        format!(
            "eb necessary inequalities on the lambda grid, worst at lambda = {lambda}, \
             transposed factor = {}",
            side_name(side)
        ),
    ))
}

fn unfold(v: &CVector, d: usize, conjugate: bool) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| {
        let z = v[i * d + j];
        if conjugate {
            z.conj()
        } else {
            z
        }
    })
}

fn phase_fix(m: &CMatrix) -> Option<CMatrix> {
    let t = m.trace();
    if t.norm() <= 1e-12 * m.norm().max(1e-300) {
        return None;
    }
    let symmetrized = m * (t.conj() / t.norm());
    Some((&symmetrized + symmetrized.adjoint()) * re(0.5))
}

fn product_route(
    x: &BipartiteOperator,
    tol: &ToleranceProfile,
) -> Result<Option<(Certificate, SeparableDecomposition)>> {
    let scale = x.mat.norm();
    if scale <= tol.eps_eq {
        let decomposition = SeparableDecomposition {
            terms: Vec::new(),
            residual: scale,
        };
        let cert = Certificate::new(
            Verdict::Holds,
            Evidence::Analytic {
                criterion: "zero operator".into(),
            },
            "product factorization",
        );
        return Ok(Some((cert, decomposition)));
    }
    let parts = svd(&realignment(x))?;
    let s1 = parts.sigma[0];
    let s2 = parts.sigma.get(1).copied().unwrap_or(0.0);
    if s2 > 1e-9 * s1 {
        return Ok(None);
    }
    let Some(a0) = phase_fix(&unfold(&parts.u.column(0).into_owned(), x.dim_a, false)) else {
        return Ok(None);
    };
    let Some(b0) = phase_fix(&unfold(&parts.v.column(0).into_owned(), x.dim_b, true)) else {
        return Ok(None);
    };
    let a0 = &a0 / re(a0.norm());
    let b0 = &b0 / re(b0.norm());
    let weight = kron(&a0, &b0).dotc(&x.mat).re;
    if weight <= 0.0 {
        return Ok(None);
    }
    let a = &a0 * re(weight.sqrt());
    let b = &b0 * re(weight.sqrt());
    let residual = (&x.mat - kron(&a, &b)).norm();
    if residual > tol.eps_sep * scale.max(1.0) {
        return Ok(None);
    }
    for factor in [&a, &b] {
        if min_eig(factor, 1e-9 * factor.norm().max(1.0))? < -tol.eps_psd {
            return Ok(None);
        }
    }
    let decomposition = SeparableDecomposition {
        terms: vec![(a, b)],
        residual,
    };
    let cert = Certificate::new(
        Verdict::Holds,
        Evidence::Analytic {
            criterion: "rank-one realignment".into(),
        },
        "product factorization",
    );
    Ok(Some((cert, decomposition)))
}

fn contract_first(r: &CMatrix, u: &CVector, da: usize, db: usize) -> CMatrix {
    CMatrix::from_fn(db, db, |k, l| {
        let mut s = Complex64::default();
        for i in 0..da {
            for j in 0..da {
                s += u[i].conj() * u[j] * r[(i * db + k, j * db + l)];
            }
        }
        s
    })
}

fn contract_second(r: &CMatrix, v: &CVector, da: usize, db: usize) -> CMatrix {
    CMatrix::from_fn(da, da, |i, j| {
        let mut s = Complex64::default();
        for k in 0..db {
            for l in 0..db {
                s += v[k].conj() * v[l] * r[(i * db + k, j * db + l)];
            }
        }
        s
    })
}

/// Best product overlap <u (x) v| R |u (x) v> found by alternating
/// eigenvector ascent over seeded restarts.
fn best_product_overlap(
    r: &CMatrix,
    da: usize,
    db: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(f64, CVector, CVector)>> {
    let mut best: Option<(f64, CVector, CVector)> = None;
    for _ in 0..PURSUIT_RESTARTS {
        let mut u = crate::core_linalg::random_state_vector(rng, da);
        let mut v = crate::core_linalg::random_state_vector(rng, db);
        let mut value = f64::NEG_INFINITY;
        for _ in 0..PURSUIT_ITERATIONS {
            let (_, new_v) = max_eig_vec(&contract_first(r, &u, da, db))?;
            v = new_v;
            let (val_u, new_u) = max_eig_vec(&contract_second(r, &v, da, db))?;
            u = new_u;
            if (val_u - value).abs() <= 1e-13 * value.abs().max(1.0) {
                value = val_u;
                break;
            }
            value = val_u;
        }
        if best.as_ref().map_or(true, |b| value > b.0) {
            best = Some((value, u, v));
        }
    }
    Ok(best.filter(|b| b.0 > 0.0))
}

fn matching_pursuit(
    x: &BipartiteOperator,
    tol: &ToleranceProfile,
) -> Result<(Certificate, Option<SeparableDecomposition>)> {
    let scale = x.mat.norm().max(1.0);
    let gate = tol.eps_sep * scale;
    let mut residual_mat = x.mat.clone();
    let mut terms: Vec<(CMatrix, CMatrix)> = Vec::new();
    let mut pairs: Vec<(CVector, CVector)> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(tol.seed);
    while terms.len() < MAX_PURSUIT_TERMS && residual_mat.norm() > gate {
        let Some((value, u, v)) = best_product_overlap(&residual_mat, x.dim_a, x.dim_b, &mut rng)?
        else {
            break;
        };
        if value <= gate * 1e-3 {
            break;
        }
        let a = &u * u.adjoint();
        let b = &v * v.adjoint();
        residual_mat -= kron(&a, &b) * re(value);
        let quarter = re(value.powf(0.25));
        pairs.push((&u * quarter, &v * quarter));
        let half = re(value.sqrt());
        terms.push((a * half, b * half));
    }
    let residual = residual_mat.norm();
    if residual <= gate {
        let decomposition = SeparableDecomposition {
            terms,
            residual,
        };
        let cert = Certificate::new(
            Verdict::Holds,
            Evidence::SeparableDecomposition { pairs, residual },
            "greedy product matching pursuit",
        );
        Ok((cert, Some(decomposition)))
    } else {
        let cert = Certificate::new(
            Verdict::Unknown,
            Evidence::Absent,
            "matching pursuit did not converge",
        )
        .with_warning(format!(
            "residual {residual:.3e} after {} terms (gate {gate:.3e})",
            terms.len()
        ));
        Ok((cert, None))
    }
}

/// Separability certifier. Routes, in order: single product term, the exact
/// Peres-Horodecki regime (product dimension at most 6, analytic HOLDS with
/// no decomposition), the twirl span, then greedy matching pursuit.
pub fn sep_certify(
    x: &BipartiteOperator,
    tol: &ToleranceProfile,
) -> Result<(Certificate, Option<SeparableDecomposition>)> {
    require_psd(x, tol)?;
    let scale = x.mat.norm().max(1.0);
    if let Some((cert, decomposition)) = product_route(x, tol)? {
        return Ok((cert, Some(decomposition)));
    }
    if x.dim_a * x.dim_b <= 6 {
        let pt = partial_transpose(x, Side::First);
        let (value, _) = min_pair(&pt.mat, tol)?;
        if value >= -tol.eps_psd {
            let cert = Certificate::new(
                Verdict::Holds,
                Evidence::Analytic {
                    criterion:
                        "ppt is exact for product dimension at most 6; decomposition not \
                         constructed"
                            .into(),
                },
                "Peres-Horodecki exact",
            );
            return Ok((cert, None));
        }
        let cert = Certificate::new(
            Verdict::Unknown,
            Evidence::Absent,
            "partial transpose negative in the exact regime",
        )
        .with_warning(format!(
            "partial transpose eigenvalue {value:.3e}: the operator is entangled, see sep_refute"
        ));
        return Ok((cert, None));
    }
    if x.dim_a == x.dim_b && x.dim_a >= 2 {
        let (projected, coeffs) = twirl_project(x)?;
        if mat_approx_eq(&projected.mat, &x.mat, tol.eps_eq * scale) {
            let cert = twirl_cone_membership(&coeffs, x.dim_a, DEFAULT_SAMPLE_POINTS)?;
            match cert.verdict {
                Verdict::Holds => return Ok((cert, None)),
                Verdict::Fails => {
                    let downgraded = Certificate::new(
                        Verdict::Unknown,
                        Evidence::Absent,
                        "twirl cone membership",
                    )
                    .with_warning(
                        "the twirl cone test refuted separability, see sep_refute".to_string(),
                    );
                    return Ok((downgraded, None));
                }
                Verdict::Unknown => {}
            }
        }
    }
    matching_pursuit(x, tol)
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    #[serde(rename = "dimA")]
    dim_a: usize,
    #[serde(rename = "dimB")]
    dim_b: usize,
    matrix: Vec<[f64; 2]>,
}

/// Parses {"dimA", "dimB", "matrix": [[re, im], ...]} with row-major entries.
pub fn parse_state(text: &str) -> Result<BipartiteOperator> {
    let file: StateFile = serde_json::from_str(text)?;
    let n = file.dim_a * file.dim_b;
    if file.matrix.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} entries, expected {}",
            file.matrix.len(),
            n * n
        )));
    }
    let entries: Vec<Complex64> = file
        .matrix
        .iter()
        .map(|&[r, i]| Complex64::new(r, i))
        .collect();
    BipartiteOperator::new(from_rows(n, n, &entries)?, file.dim_a, file.dim_b)
}

pub fn load_state(path: &Path) -> Result<BipartiteOperator> {
    parse_state(&std::fs::read_to_string(path)?)
}

/// Renders a state in the fixture format, row-major.
pub fn render_state(x: &BipartiteOperator) -> String {
    let matrix: Vec<[f64; 2]> = (0..x.side())
        .flat_map(|i| (0..x.side()).map(move |j| (i, j)))
        .map(|(i, j)| {
            let z = x.mat[(i, j)];
            [z.re, z.im]
        })
        .collect();
    let file = StateFile {
        dim_a: x.dim_a,
        dim_b: x.dim_b,
        matrix,
    };
    serde_json::to_string_pretty(&file).expect("state serialization cannot fail")
}

pub fn save_state(path: &Path, x: &BipartiteOperator) -> Result<()> {
    std::fs::write(path, render_state(x))?;
    Ok(())
}

/// The one-parameter 2 (x) 4 family that is PPT yet entangled for every
/// b in (0, 1).
pub fn horodecki_2x4(b: f64) -> Result<BipartiteOperator> {
    if !(0.0..=1.0).contains(&b) {
        return Err(Error::InvalidInput(format!(
            "parameter b = {b} must lie in [0, 1]"
        )));
    }
    let z = 7.0 * b + 1.0;
    let g = (1.0 - b * b).sqrt() / 2.0;
    let h = (1.0 + b) / 2.0;
    let mut m = CMatrix::zeros(8, 8);
    for i in 0..4 {
        m[(i, i)] = re(b);
    }
    for (i, j) in [(0, 5), (1, 6), (2, 7)] {
        m[(i, j)] = re(b);
        m[(j, i)] = re(b);
    }
    m[(5, 5)] = re(b);
    m[(6, 6)] = re(b);
    m[(4, 4)] = re(h);
    m[(7, 7)] = re(h);
    m[(4, 7)] = re(g);
    m[(7, 4)] = re(g);
    BipartiteOperator::new(m / re(z), 2, 4)
}
