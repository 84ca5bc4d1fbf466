//! Schmidt decompositions, Schmidt rank, and Schmidt number bounds.
//!
//! The Schmidt number of a PSD bipartite operator is NP-hard to compute
//! exactly, so it is always reported as an interval `SnBounds`: a sound
//! upper bound from a concrete decomposition and a sound lower bound from
//! k-positive probe maps.

use crate::channels::{ChannelBody, ChannelRep, Family};
use crate::core_linalg::{
    self, hermitian_eig, re, BipartiteOperator, CMatrix, CVector, ToleranceProfile,
};
use crate::{Error, Result};

/// Relative truncation threshold for Schmidt coefficients.
pub const SCHMIDT_RANK_TOL: f64 = 1e-8;

/// xi = sum_i lambda_i u_i (x) v_i with nonincreasing lambda_i > 0.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub left_basis: Vec<CVector>,
    pub right_basis: Vec<CVector>,
    /// Norm of the decomposed vector (inputs need not be normalized).
    pub norm: f64,
}

impl SchmidtDecomposition {
    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    pub fn reconstruct(&self, dim_a: usize, dim_b: usize) -> CVector {
        let mut out = CVector::zeros(dim_a * dim_b);
        for (idx, &c) in self.coefficients.iter().enumerate() {
            let u = &self.left_basis[idx];
            let v = &self.right_basis[idx];
            for i in 0..dim_a {
                for k in 0..dim_b {
                    out[i * dim_b + k] += re(c) * u[i] * v[k];
                }
            }
        }
        out
    }
}

/// Schmidt number interval with the evidence behind each endpoint.
#[derive(Debug, Clone)]
pub struct SnBounds {
    pub lower: usize,
    pub upper: usize,
    pub lower_evidence: String,
    pub upper_evidence: String,
}

/// Witness for a fired k-positive probe.
#[derive(Debug, Clone)]
pub struct SnWitness {
    /// The probe parameter: the map tr(Y)I - Y^T/k (or its no-transpose
    /// variant) applied on the second factor.
    pub probe_k: usize,
    /// true when the fired probe was the T o W_{1/k} variant.
    pub transposed: bool,
    pub min_eig: f64,
}

/// Schmidt decomposition of a vector in C^dA (x) C^dB via SVD of its
/// dA x dB reshaping. Coefficients below tol * max are dropped.
pub fn schmidt_decompose(
    xi: &CVector,
    dim_a: usize,
    dim_b: usize,
    tol: f64,
) -> Result<SchmidtDecomposition> {
    if xi.len() != dim_a * dim_b {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} on {}x{} factors",
            xi.len(),
            dim_a,
            dim_b
        )));
    }
    let norm = xi.norm();
    if norm == 0.0 {
        return Ok(SchmidtDecomposition {
            coefficients: vec![],
            left_basis: vec![],
            right_basis: vec![],
            norm: 0.0,
        });
    }
    let m = CMatrix::from_fn(dim_a, dim_b, |i, k| xi[i * dim_b + k]);
    let parts = core_linalg::svd(&m)?;
    let cutoff = tol * parts.sigma[0];
    let mut coefficients = Vec::new();
    let mut left_basis = Vec::new();
    let mut right_basis = Vec::new();
    for (idx, &s) in parts.sigma.iter().enumerate() {
        if s <= cutoff {
            continue;
        }
        coefficients.push(s);
        left_basis.push(parts.u.column(idx).into_owned());
        // xi = sum sigma_i u_i (x) conj(v_i) since M = U S V*
        right_basis.push(parts.v.column(idx).map(|z| z.conj()));
    }
    Ok(SchmidtDecomposition {
        coefficients,
        left_basis,
        right_basis,
        norm,
    })
}

/// Number of retained Schmidt coefficients at the default threshold.
pub fn schmidt_rank(xi: &CVector, dim_a: usize, dim_b: usize) -> Result<usize> {
    Ok(schmidt_decompose(xi, dim_a, dim_b, SCHMIDT_RANK_TOL)?.rank())
}

fn psd_eigenparts(
    x: &BipartiteOperator,
    tol: &ToleranceProfile,
) -> Result<Vec<(f64, CVector)>> {
    let (values, vectors) = hermitian_eig(&x.mat, tol.eps_herm)?;
    if values.last().copied().unwrap_or(0.0) < -tol.eps_psd {
        return Err(Error::InvalidInput(format!(
            "operator is not PSD (min eigenvalue {:.3e})",
            values.last().unwrap()
        )));
    }
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > tol.eps_psd)
        .map(|(i, &v)| (v, vectors.column(i).into_owned()))
        .collect())
}

/// Sound SN upper bound: max Schmidt rank over the eigendecomposition.
pub fn sn_upper_bound(x: &BipartiteOperator, tol: &ToleranceProfile) -> Result<(usize, String)> {
    let parts = psd_eigenparts(x, tol)?;
    let mut upper = 0usize;
    for (_, w) in &parts {
        upper = upper.max(schmidt_rank(w, x.dim_a, x.dim_b)?);
    }
    let upper = upper.max(1).min(x.dim_a.min(x.dim_b));
    Ok((
        upper,
        format!(
            "max Schmidt rank over {} eigendecomposition pure parts",
            parts.len()
        ),
    ))
}

/// SN upper bound for a channel's Choi matrix; a stored Kraus list
/// sharpens the bound to the max Kraus rank.
pub fn sn_upper_bound_channel(
    phi: &ChannelRep,
    tol: &ToleranceProfile,
) -> Result<(usize, String)> {
    let (mut upper, mut evidence) = sn_upper_bound(phi.choi(), tol)?;
    let kraus_ranks: Option<Vec<usize>> = match &phi.body {
        ChannelBody::Kraus(vs) => Some(
            vs.iter()
                .map(|v| {
                    let s = core_linalg::svd(v)?;
                    let top = s.sigma.first().copied().unwrap_or(0.0);
                    Ok(s.sigma.iter().filter(|&&x| x > SCHMIDT_RANK_TOL * top.max(1e-300)).count())
                })
                .collect::<Result<_>>()?,
        ),
        ChannelBody::Family(Family::AdV { v }) => {
            let s = core_linalg::svd(v)?;
            let top = s.sigma.first().copied().unwrap_or(0.0);
            Some(vec![s
                .sigma
                .iter()
                .filter(|&&x| x > SCHMIDT_RANK_TOL * top.max(1e-300))
                .count()])
        }
        _ => None,
    };
    if let Some(ranks) = kraus_ranks {
        let max_rank = ranks.iter().copied().max().unwrap_or(1).max(1);
        if max_rank < upper {
            upper = max_rank;
            evidence = format!("max rank over the stored {}-term Kraus list", ranks.len());
        }
    }
    Ok((upper, evidence))
}

/// Evaluate (id (x) P)(X) where P(Y) = tr(Y) I - Y^T / k, optionally with
/// the transpose dropped.
fn probe_image(x: &BipartiteOperator, k: usize, transposed: bool) -> CMatrix {
    let (da, db) = (x.dim_a, x.dim_b);
    let mut out = CMatrix::zeros(da * db, da * db);
    let inv_k = 1.0 / k as f64;
    for i in 0..da {
        for j in 0..da {
            let b = x.block(i, j);
            let img = core_linalg::identity(db).map(|z| z * b.trace())
                - if transposed { b.scale(inv_k) } else { b.transpose().scale(inv_k) };
            out.view_mut((i * db, j * db), (db, db)).copy_from(&img);
        }
    }
    out
}

/// Sound SN lower bound from the probe family {W_{1/k}, T o W_{1/k}}.
///
/// Each probe is exactly k-positive, so a negative eigenvalue of
/// (id (x) probe)(X) certifies SN(X) > k. Returns 1 + the largest k that
/// fires, together with the violated-inequality witness.
pub fn sn_lower_bound(
    x: &BipartiteOperator,
    k_max: usize,
    tol: &ToleranceProfile,
) -> Result<(usize, Option<SnWitness>)> {
    psd_eigenparts(x, tol)?;
    if k_max > x.dim_a.min(x.dim_b) {
        return Err(Error::InvalidInput(format!(
            "kMax {} exceeds min factor dimension {}",
            k_max,
            x.dim_a.min(x.dim_b)
        )));
    }
    let mut best: Option<SnWitness> = None;
    for k in 1..k_max.max(1) {
        for transposed in [false, true] {
            let img = probe_image(x, k, transposed);
            let lam = core_linalg::min_eig(&img, tol.eps_herm)?;
            if lam < -tol.eps_psd {
                best = Some(SnWitness {
                    probe_k: k,
                    transposed,
                    min_eig: lam,
                });
            }
        }
    }
    Ok(match best {
        Some(w) => (w.probe_k + 1, Some(w)),
        None => (1, None),
    })
}

/// Both SN bounds in one call.
pub fn sn_bounds(x: &BipartiteOperator, tol: &ToleranceProfile) -> Result<SnBounds> {
    let k_max = x.dim_a.min(x.dim_b);
    let (upper, upper_evidence) = sn_upper_bound(x, tol)?;
    let (lower, witness) = sn_lower_bound(x, k_max, tol)?;
    Ok(SnBounds {
        lower,
        upper: upper.max(lower),
        lower_evidence: match witness {
            Some(w) => format!(
                "probe k={} ({}) has min eigenvalue {:.6e}",
                w.probe_k,
                if w.transposed { "T o W" } else { "W" },
                w.min_eig
            ),
            None => "no probe fired".into(),
        },
        upper_evidence,
    })
}

/// One pure part of X regrouped through an isometry from a smaller factor.
#[derive(Debug, Clone)]
pub struct RegroupedPart {
    /// Schmidt rank j of the part.
    pub rank: usize,
    /// dA x j isometry whose columns are the left Schmidt basis.
    pub isometry: CMatrix,
    /// Compressed vector in C^j (x) C^dB with (V (x) I) psi = xi.
    pub compressed: CVector,
}

/// Regroup pure parts of a PSD operator: each xi_i of Schmidt rank j is
/// written as (V (x) I) psi with an isometry V: C^j -> C^dA.
pub fn sn_regroup(
    parts: &[CVector],
    dim_a: usize,
    dim_b: usize,
    tol: &ToleranceProfile,
) -> Result<Vec<RegroupedPart>> {
    let mut out = Vec::with_capacity(parts.len());
    for xi in parts {
        let dec = schmidt_decompose(xi, dim_a, dim_b, SCHMIDT_RANK_TOL)?;
        let j = dec.rank();
        let mut isometry = CMatrix::zeros(dim_a, j);
        for (col, u) in dec.left_basis.iter().enumerate() {
            isometry.set_column(col, u);
        }
        let gram = isometry.adjoint() * &isometry;
        if !core_linalg::mat_approx_eq(&gram, &CMatrix::identity(j, j), 1e-9) {
            return Err(Error::ResidualGate(
                "extracted left Schmidt basis is not isometric".into(),
            ));
        }
        let mut compressed = CVector::zeros(j * dim_b);
        for (idx, &c) in dec.coefficients.iter().enumerate() {
            for kk in 0..dim_b {
                compressed[idx * dim_b + kk] = re(c) * dec.right_basis[idx][kk];
            }
        }
        // reconstruction check (V (x) I) psi = xi
        let mut rebuilt = CVector::zeros(dim_a * dim_b);
        for i in 0..dim_a {
            for idx in 0..j {
                for kk in 0..dim_b {
                    rebuilt[i * dim_b + kk] += isometry[(i, idx)] * compressed[idx * dim_b + kk];
                }
            }
        }
        let resid = (&rebuilt - xi).norm();
        if resid > tol.eps_eq.max(1e-10 * xi.norm()) {
            return Err(Error::ResidualGate(format!(
                "regroup reconstruction residual {:.3e}",
                resid
            )));
        }
        out.push(RegroupedPart {
            rank: j,
            isometry,
            compressed,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_linalg::{
        identity, kron, mat_approx_eq, omega_projector, omega_vector, random_psd,
        random_state_vector, Side,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis_vec(d: usize, i: usize) -> CVector {
        let mut v = CVector::zeros(d);
        v[i] = re(1.0);
        v
    }

    fn tensor(u: &CVector, v: &CVector) -> CVector {
        let mut out = CVector::zeros(u.len() * v.len());
        for i in 0..u.len() {
            for k in 0..v.len() {
                out[i * v.len() + k] = u[i] * v[k];
            }
        }
        out
    }

    #[test]
    fn decompose_examples() {
        let xi = tensor(&basis_vec(3, 0), &basis_vec(3, 1));
        let dec = schmidt_decompose(&xi, 3, 3, SCHMIDT_RANK_TOL).unwrap();
        assert_eq!(dec.rank(), 1);
        assert!((dec.coefficients[0] - 1.0).abs() < 1e-14);

        for d in 2..=4 {
            let dec = schmidt_decompose(&omega_vector(d), d, d, SCHMIDT_RANK_TOL).unwrap();
            assert_eq!(dec.rank(), d);
            assert!(dec.coefficients.iter().all(|&c| (c - 1.0).abs() < 1e-12));
            let back = dec.reconstruct(d, d);
            assert!((back - omega_vector(d)).norm() < 1e-12);
        }

        let mut xi = CVector::zeros(4);
        xi[0] = re(1.0 / 2f64.sqrt());
        xi[1] = re(1.0 / 2f64.sqrt());
        assert_eq!(schmidt_rank(&xi, 2, 2).unwrap(), 1);

        let zero = CVector::zeros(6);
        let dec = schmidt_decompose(&zero, 2, 3, SCHMIDT_RANK_TOL).unwrap();
        assert_eq!(dec.rank(), 0);
        assert_eq!(dec.norm, 0.0);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(schmidt_rank(&omega_vector(3), 3, 3).unwrap(), 3);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prod = tensor(
            &random_state_vector(&mut rng, 3),
            &random_state_vector(&mut rng, 3),
        );
        assert_eq!(schmidt_rank(&prod, 3, 3).unwrap(), 1);

        let mut xi = CVector::zeros(9);
        xi[0] = re(1.0);
        xi[4] = re(1.0);
        xi[8] = re(1e-14);
        assert_eq!(schmidt_rank(&xi, 3, 3).unwrap(), 2);
    }

    #[test]
    fn upper_bound_examples() {
        let tol = ToleranceProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);

        let a = random_psd(&mut rng, 2);
        let b = random_psd(&mut rng, 3);
        let x = BipartiteOperator::new(kron(&a, &b), 2, 3).unwrap();
        assert_eq!(sn_upper_bound(&x, &tol).unwrap().0, 1);

        for d in 2..=4 {
            let omega = BipartiteOperator::new(omega_projector(d), d, d).unwrap();
            assert_eq!(sn_upper_bound(&omega, &tol).unwrap().0, d);
        }

        // Choi of Ad_V with rank(V) = 2 in M_4
        let u = random_state_vector(&mut rng, 4);
        let w = random_state_vector(&mut rng, 4);
        let v = &u * random_state_vector(&mut rng, 4).adjoint()
            + &w * random_state_vector(&mut rng, 4).adjoint();
        let adv = crate::channels::family_make(Family::AdV { v }).unwrap();
        assert_eq!(sn_upper_bound_channel(&adv, &tol).unwrap().0, 2);
    }

    #[test]
    fn lower_bound_examples() {
        let tol = ToleranceProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);

        let mut sep = CMatrix::zeros(9, 9);
        for _ in 0..4 {
            sep += kron(&random_psd(&mut rng, 3), &random_psd(&mut rng, 3));
        }
        let sep = BipartiteOperator::new(sep, 3, 3).unwrap();
        assert_eq!(sn_lower_bound(&sep, 3, &tol).unwrap().0, 1);

        for d in 2..=4 {
            let omega = BipartiteOperator::new(omega_projector(d), d, d).unwrap();
            let (lo, wit) = sn_lower_bound(&omega, d, &tol).unwrap();
            assert_eq!(lo, d);
            assert_eq!(wit.unwrap().probe_k, d - 1);
        }

        // rank-2 pure state on 3 (x) 3 fires the k=1 probe
        let mut xi = CVector::zeros(9);
        xi[0] = re(1.0);
        xi[4] = re(1.0);
        let x = BipartiteOperator::new(&xi * xi.adjoint(), 3, 3).unwrap();
        let (lo, _) = sn_lower_bound(&x, 3, &tol).unwrap();
        assert_eq!(lo, 2);

        // mixtures of Schmidt-rank-2 pure states never exceed 2
        let mut mix = CMatrix::zeros(9, 9);
        for _ in 0..3 {
            let u1 = random_state_vector(&mut rng, 3);
            let u2 = random_state_vector(&mut rng, 3);
            let v1 = random_state_vector(&mut rng, 3);
            let v2 = random_state_vector(&mut rng, 3);
            let xi = tensor(&u1, &v1) + tensor(&u2, &v2);
            mix += &xi * xi.adjoint();
        }
        let mix = BipartiteOperator::new(mix, 3, 3).unwrap();
        let (lo, _) = sn_lower_bound(&mix, 3, &tol).unwrap();
        assert!(lo <= 2);
    }

    #[test]
    fn bounds_bracket() {
        let tol = ToleranceProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let x = BipartiteOperator::new(random_psd(&mut rng, 9), 3, 3).unwrap();
            let b = sn_bounds(&x, &tol).unwrap();
            assert!(1 <= b.lower && b.lower <= b.upper && b.upper <= 3);
        }
    }

    #[test]
    fn regroup_examples() {
        let tol = ToleranceProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(10);

        let prod = tensor(&basis_vec(3, 1), &random_state_vector(&mut rng, 3)).scale(2.0);
        let parts = sn_regroup(&[prod.clone()], 3, 3, &tol).unwrap();
        assert_eq!(parts[0].rank, 1);
        assert_eq!(parts[0].isometry.ncols(), 1);

        let parts = sn_regroup(&[omega_vector(3)], 3, 3, &tol).unwrap();
        assert_eq!(parts[0].rank, 3);
        let gram = parts[0].isometry.adjoint() * &parts[0].isometry;
        assert!(mat_approx_eq(&gram, &identity(3), 1e-12));

        // one rank-1 and one rank-2 part: X reconstructed from the groups
        let xi1 = tensor(&basis_vec(3, 0), &random_state_vector(&mut rng, 3));
        let xi2 = tensor(&basis_vec(3, 0), &random_state_vector(&mut rng, 3))
            + tensor(&basis_vec(3, 2), &random_state_vector(&mut rng, 3));
        let parts = sn_regroup(&[xi1.clone(), xi2.clone()], 3, 3, &tol).unwrap();
        assert_eq!(parts[0].rank, 1);
        assert_eq!(parts[1].rank, 2);
        let mut x = CMatrix::zeros(9, 9);
        for (xi, part) in [(&xi1, &parts[0]), (&xi2, &parts[1])] {
            let v_ext = kron(&part.isometry, &identity(3));
            let lifted = &v_ext * &part.compressed;
            assert!((&lifted - xi).norm() < 1e-9);
            x += &lifted * lifted.adjoint();
        }
        let direct = &xi1 * xi1.adjoint() + &xi2 * xi2.adjoint();
        assert!(mat_approx_eq(&x, &direct, 1e-9));
    }

    #[test]
    fn cmw19_lower_bound_consistency() {
        // W_{1/2} on M_3 is 2-EB, so (id_3 (x) W_{1/2})(X) has SN <= 2
        let tol = ToleranceProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = crate::channels::family_make(Family::WernerHolevo { lambda: 0.5, d: 3 }).unwrap();
        let ext = crate::channels::tensor_with_identity(&w, 3, Side::First).unwrap();
        for _ in 0..5 {
            let x = random_psd(&mut rng, 9);
            let img = ext.apply(&x).unwrap();
            let img = BipartiteOperator::new(img, 3, 3).unwrap();
            let (lo, _) = sn_lower_bound(&img, 3, &tol).unwrap();
            assert!(lo <= 2);
        }
    }
}
