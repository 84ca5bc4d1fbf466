//! Entanglement-breaking order: refutation, certification, thresholds.
//!
//! A positive map breaks entanglement at order k when every composition
//! with a compression to a k-dimensional input algebra is entanglement
//! breaking. Refutation searches for a compression whose composite Choi
//! matrix is entangled. Certification is analytic first (exact family
//! thresholds, a sufficient norm condition, direct-sum recursion) and
//! numeric second (separability of the leading Choi block, which settles
//! the order for unitarily covariant maps). FAILS reports carry the
//! compression as a channel so the refutation can be replayed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channels::{self, family_make, ChannelBody, ChannelRep, Family};
use crate::core_linalg::{
    identity, min_eig_vec, op_norm_inf, partial_trace, random_complex_matrix, random_psd,
    random_unitary, re, singular_values, BipartiteOperator, CMatrix, Side, ToleranceProfile,
};
use crate::positivity::{self, Certificate, Evidence, Verdict};
use crate::schmidt::{sn_bounds, sn_upper_bound_channel};
use crate::separability::{sep_certify, sep_refute};
use crate::{Error, Result};

const RANDOM_BASIS_PROBES: usize = 20;
const RANDOM_CP_PROBES: usize = 16;
const RANDOM_COMPRESSION_PROBES: usize = 16;
const MAX_COORDINATE_SUBSETS: usize = 64;
const RANK_GATE: f64 = 1e-9;

/// Which argument settled a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    CompositionWitness,
    ProjectionWitness,
    PrincipalBlock,
    FamilyThreshold,
    NormSufficient,
    DirectSum,
    DualPairing,
}

/// Outcome of an order-k entanglement-breaking decision.
///
/// A FAILS verdict carries the compression `witness`; composing the map
/// with it and running sep_refute on the composite Choi matrix reproduces
/// the refutation.
#[derive(Debug, Clone)]
pub struct KebReport {
    pub k: usize,
    pub verdict: Certificate,
    pub route: Route,
    pub details: String,
    pub witness: Option<ChannelRep>,
}

/// Exact and certified lambda intervals for a parametric family.
#[derive(Debug, Clone)]
pub struct ThresholdReport {
    pub k: usize,
    /// Interval on which the order is certified (inclusive endpoints).
    pub certified: [f64; 2],
    /// Outside this interval the map is certainly not of the given order.
    pub necessary: [f64; 2],
    /// Unresolved strip between the two, when they differ.
    pub gap: Option<[f64; 2]>,
    pub exact: bool,
    pub details: String,
}

fn selector(indices: &[usize], d: usize) -> CMatrix {
    CMatrix::from_fn(indices.len(), d, |r, c| {
        if indices[r] == c {
            re(1.0)
        } else {
            re(0.0)
        }
    })
}

fn ad_of(v: CMatrix) -> Result<ChannelRep> {
    family_make(Family::AdV { v })
}

fn clamped_order(k: usize, d1: usize) -> (usize, String) {
    let keff = k.min(d1);
    if keff < k {
        (
            keff,
            format!("order {k} clamped to the input dimension {d1}; "),
        )
    } else {
        (keff, String::new())
    }
}

fn holds_report(k: usize, route: Route, method: &str, criterion: String, details: String) -> KebReport {
    KebReport {
        k,
        verdict: Certificate::new(Verdict::Holds, Evidence::Analytic { criterion }, method),
        route,
        details,
        witness: None,
    }
}

/// Composes with the candidate compression and refutes the composite Choi
/// matrix. A composite that is not even PSD counts: the map then fails
/// k-positivity on this compression, so it cannot break entanglement.
fn composite_refutation(
    phi: &ChannelRep,
    psi: &ChannelRep,
    tol: &ToleranceProfile,
) -> Result<Option<(Certificate, ChannelRep)>> {
    let composite = channels::compose(phi, psi)?;
    let choi = composite.choi();
    match sep_refute(choi, tol) {
        Ok(cert) if cert.fails() => Ok(Some((cert, psi.clone()))),
        Ok(_) => Ok(None),
        Err(Error::InvalidInput(_)) => {
            let gate = 1e-10 * choi.mat.norm().max(1.0);
            let (value, vector) = min_eig_vec(&choi.mat, gate)?;
            let cert = Certificate::new(
                Verdict::Fails,
                Evidence::Eigenvalue { value, vector },
                "composite choi eigensolve",
            )
            .with_warning("the composite Choi matrix is not PSD, so the map is not k-positive on this compression");
            Ok(Some((cert, psi.clone())))
        }
        Err(Error::NotHermitian { .. }) => {
            let cert = Certificate::new(
                Verdict::Fails,
                Evidence::Absent,
                "composite choi hermiticity",
            )
            .with_warning("the composite Choi matrix is not hermitian");
            Ok(Some((cert, psi.clone())))
        }
        Err(e) => Err(e),
    }
}

/// Lexicographic r-subsets of 0..d, capped.
fn coordinate_subsets(d: usize, r: usize, cap: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    'outer: loop {
        out.push(idx.clone());
        if out.len() >= cap {
            break;
        }
        let mut i = r;
        while i > 0 {
            i -= 1;
            if idx[i] < d - r + i {
                idx[i] += 1;
                for j in i + 1..r {
                    idx[j] = idx[j - 1] + 1;
                }
                continue 'outer;
            }
        }
        break;
    }
    out
}

/// Searches for a compression that witnesses failure of order k.
///
/// Probes, in order: every coordinate index subset of size min(k, d1)
/// (capped), leading blocks in random orthonormal bases, random CP maps
/// with up to min(k, d1) Kraus operators, and random low-rank
/// compressions. The first composite with an entangled (or non-PSD) Choi
/// matrix yields FAILS together with the compression; exhaustion yields
/// UNKNOWN, which is the expected outcome for a map of the stated order.
pub fn keb_refute(phi: &ChannelRep, k: usize, tol: &ToleranceProfile) -> Result<KebReport> {
    if k == 0 {
        return Err(Error::InvalidInput("the order k must be at least 1".into()));
    }
    let d1 = phi.dim_in;
    let r = k.min(d1);
    let mut rng = ChaCha8Rng::seed_from_u64(tol.seed);

    let subsets = coordinate_subsets(d1, r, MAX_COORDINATE_SUBSETS);
    let n_coordinate = subsets.len();
    for subset in subsets {
        let psi = ad_of(selector(&subset, d1))?;
        if let Some((verdict, witness)) = composite_refutation(phi, &psi, tol)? {
            return Ok(KebReport {
                k,
                verdict,
                route: Route::ProjectionWitness,
                details: format!("coordinate compression onto indices {subset:?}"),
                witness: Some(witness),
            });
        }
    }
    for t in 0..RANDOM_BASIS_PROBES {
        let u = random_unitary(&mut rng, d1);
        let v = selector(&(0..r).collect::<Vec<_>>(), d1) * u.adjoint();
        let psi = ad_of(v)?;
        if let Some((verdict, witness)) = composite_refutation(phi, &psi, tol)? {
            return Ok(KebReport {
                k,
                verdict,
                route: Route::ProjectionWitness,
                details: format!("leading rank-{r} block in a random orthonormal basis (probe {t})"),
                witness: Some(witness),
            });
        }
    }
    for t in 0..RANDOM_CP_PROBES {
        let terms = rng.gen_range(1..=r);
        let kraus: Vec<CMatrix> = (0..terms)
            .map(|_| random_complex_matrix(&mut rng, r, d1))
            .collect();
        let psi = ChannelRep::from_kraus(kraus)?;
        if let Some((verdict, witness)) = composite_refutation(phi, &psi, tol)? {
            return Ok(KebReport {
                k,
                verdict,
                route: Route::CompositionWitness,
                details: format!("random completely positive probe with {terms} Kraus operators (probe {t})"),
                witness: Some(witness),
            });
        }
    }
    for t in 0..RANDOM_COMPRESSION_PROBES {
        let v = random_complex_matrix(&mut rng, d1, r) * random_complex_matrix(&mut rng, r, d1);
        let psi = ad_of(v)?;
        if let Some((verdict, witness)) = composite_refutation(phi, &psi, tol)? {
            return Ok(KebReport {
                k,
                verdict,
                route: Route::CompositionWitness,
                details: format!("random rank-at-most-{r} compression (probe {t})"),
                witness: Some(witness),
            });
        }
    }
    Ok(KebReport {
        k,
        verdict: Certificate::new(Verdict::Unknown, Evidence::Absent, "compression search"),
        route: Route::CompositionWitness,
        details: format!(
            "no entangling compression among {n_coordinate} coordinate compressions, \
             {RANDOM_BASIS_PROBES} random bases, {RANDOM_CP_PROBES} completely positive probes, \
             and {RANDOM_COMPRESSION_PROBES} low-rank compressions"
        ),
        witness: None,
    })
}

/// Certifies or refutes order k, analytic routes first.
///
/// Route order: exact family thresholds, the sufficient norm condition
/// for trace-preserving positive maps, direct-sum recursion, and finally
/// separability of the leading Choi block. The block refutes
/// unconditionally (it is the Choi matrix of the composition with the
/// leading coordinate compression); certifying from it additionally
/// needs the map to commute with unitary conjugation, which is
/// spot-checked. Order 1 coincides with positivity of the map.
pub fn keb_certify(phi: &ChannelRep, k: usize, tol: &ToleranceProfile) -> Result<KebReport> {
    if k == 0 {
        return Err(Error::InvalidInput("the order k must be at least 1".into()));
    }
    if k == 1 {
        let verdict = positivity::is_positive_map(phi, tol)?;
        return Ok(KebReport {
            k,
            verdict,
            route: Route::PrincipalBlock,
            details: "order one coincides with positivity of the map".into(),
            witness: None,
        });
    }
    if let Some(report) = family_threshold_route(phi, k, tol)? {
        return Ok(report);
    }
    if let Some(report) = norm_sufficient_route(phi, k, tol)? {
        return Ok(report);
    }
    if let Some(report) = direct_sum_route(phi, k, tol)? {
        return Ok(report);
    }
    principal_block_route(phi, k, tol)
}

fn threshold_fails(
    phi: &ChannelRep,
    k: usize,
    keff: usize,
    tol: &ToleranceProfile,
    details: String,
) -> Result<KebReport> {
    let psi = ad_of(selector(&(0..keff).collect::<Vec<_>>(), phi.dim_in))?;
    match composite_refutation(phi, &psi, tol)? {
        Some((verdict, witness)) => Ok(KebReport {
            k,
            verdict,
            route: Route::FamilyThreshold,
            details,
            witness: Some(witness),
        }),
        None => Ok(KebReport {
            k,
            verdict: Certificate::new(
                Verdict::Fails,
                Evidence::Analytic {
                    criterion: details.clone(),
                },
                "family threshold",
            )
            .with_warning("the leading coordinate compression did not reproduce the analytic refutation numerically"),
            route: Route::FamilyThreshold,
            details,
            witness: Some(psi),
        }),
    }
}

fn family_threshold_route(
    phi: &ChannelRep,
    k: usize,
    tol: &ToleranceProfile,
) -> Result<Option<KebReport>> {
    let family = match &phi.body {
        ChannelBody::Family(f) => f,
        _ => return Ok(None),
    };
    let d1 = phi.dim_in;
    let (keff, clamp_note) = clamped_order(k, d1);
    let method = "family threshold";
    match family {
        Family::WernerHolevo { lambda, d } => {
            let lam = *lambda;
            if *d == 1 {
                return if lam <= 1.0 {
                    Ok(Some(holds_report(
                        k,
                        Route::FamilyThreshold,
                        method,
                        format!("on scalars the map is (1 - lambda) id with lambda = {lam}"),
                        format!("{clamp_note}one-dimensional input"),
                    )))
                } else {
                    threshold_fails(
                        phi,
                        k,
                        keff,
                        tol,
                        format!("{clamp_note}on scalars the map is (1 - lambda) id with lambda = {lam} > 1"),
                    )
                    .map(Some)
                };
            }
            let hi = 1.0 / keff as f64;
            if (-1.0..=hi).contains(&lam) {
                Ok(Some(holds_report(
                    k,
                    Route::FamilyThreshold,
                    method,
                    format!("lambda = {lam} lies in the exact interval [-1, {hi:.6}]"),
                    format!("{clamp_note}exact threshold at order {keff}"),
                )))
            } else {
                threshold_fails(
                    phi,
                    k,
                    keff,
                    tol,
                    format!("{clamp_note}lambda = {lam} lies outside the exact interval [-1, {hi:.6}]"),
                )
                .map(Some)
            }
        }
        Family::PhiLambda { lambda, d } => {
            let lam = *lambda;
            if *d == 1 {
                return if lam >= -0.5 {
                    Ok(Some(holds_report(
                        k,
                        Route::FamilyThreshold,
                        method,
                        format!("on scalars the map is (1 + 2 lambda) id with lambda = {lam}"),
                        format!("{clamp_note}one-dimensional input"),
                    )))
                } else {
                    threshold_fails(
                        phi,
                        k,
                        keff,
                        tol,
                        format!("{clamp_note}on scalars the map is (1 + 2 lambda) id with lambda = {lam} < -1/2"),
                    )
                    .map(Some)
                };
            }
            if keff == *d {
                let lo = -1.0 / (*d as f64 + 1.0);
                return if lam >= lo && lam <= 1.0 {
                    Ok(Some(holds_report(
                        k,
                        Route::FamilyThreshold,
                        method,
                        format!("lambda = {lam} lies in the exact interval [{lo:.6}, 1]"),
                        format!("{clamp_note}at order {keff} the property coincides with entanglement breaking, where the interval is exact"),
                    )))
                } else {
                    threshold_fails(
                        phi,
                        k,
                        keff,
                        tol,
                        format!("{clamp_note}lambda = {lam} lies outside the exact interval [{lo:.6}, 1]"),
                    )
                    .map(Some)
                };
            }
            let necessary = -1.0 / (keff as f64 + 1.0);
            let sufficient = -1.0 / (2.0 * keff as f64);
            if lam >= sufficient && lam <= 1.0 {
                Ok(Some(holds_report(
                    k,
                    Route::FamilyThreshold,
                    method,
                    format!("lambda = {lam} lies in the sufficient interval [{sufficient:.6}, 1]"),
                    format!("{clamp_note}sufficient threshold at order {keff}"),
                )))
            } else if lam < necessary || lam > 1.0 {
                threshold_fails(
                    phi,
                    k,
                    keff,
                    tol,
                    format!("{clamp_note}lambda = {lam} lies outside the necessary interval [{necessary:.6}, 1]"),
                )
                .map(Some)
            } else {
                Ok(Some(KebReport {
                    k,
                    verdict: Certificate::new(Verdict::Unknown, Evidence::Absent, method)
                        .with_warning(format!(
                            "lambda = {lam} falls in [{necessary:.6}, {sufficient:.6}), where no decision procedure is known"
                        )),
                    route: Route::FamilyThreshold,
                    details: format!(
                        "{clamp_note}the strip between the necessary and the sufficient bound is unresolved for this family"
                    ),
                    witness: None,
                }))
            }
        }
        Family::WernerModified { lambda, gamma } => {
            if !positivity::is_positive_map(gamma, tol)?.holds() {
                return Ok(None);
            }
            let gnorm = op_norm_inf(&gamma.apply(&identity(gamma.dim_in))?)?;
            if gnorm <= 1e-12 {
                return Ok(Some(holds_report(
                    k,
                    Route::FamilyThreshold,
                    method,
                    "the inner map vanishes on the identity, so the map is a multiple of the trace map".into(),
                    format!("{clamp_note}degenerate inner map"),
                )));
            }
            let lo = -1.0 / (keff as f64 * gnorm);
            let hi = 1.0 / gnorm;
            if *lambda >= lo && *lambda <= hi {
                Ok(Some(holds_report(
                    k,
                    Route::FamilyThreshold,
                    method,
                    format!(
                        "lambda = {lambda} lies in the sufficient interval [{lo:.6}, {hi:.6}] fixed by the norm {gnorm:.6} of the inner map at the identity"
                    ),
                    format!("{clamp_note}sufficient interval only; outside it this route draws no conclusion"),
                )))
            } else {
                Ok(None)
            }
        }
        Family::Schur { a } => {
            let scale = a.norm().max(1.0);
            let mut off: Option<(usize, usize, f64)> = None;
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    if i != j {
                        let m = a[(i, j)].norm();
                        if m > off.map_or(0.0, |b| b.2) {
                            off = Some((i, j, m));
                        }
                    }
                }
            }
            if let Some((i, j, m)) = off.filter(|b| b.2 > RANK_GATE * scale) {
                let mut v = CMatrix::zeros(2, a.nrows());
                v[(0, i)] = re(1.0);
                v[(1, j)] = re(1.0);
                let psi = ad_of(v)?;
                let details = format!(
                    "{clamp_note}off-diagonal multiplier entry of size {m:.3e} at ({i}, {j}) obstructs entanglement breaking"
                );
                return match composite_refutation(phi, &psi, tol)? {
                    Some((verdict, witness)) => Ok(Some(KebReport {
                        k,
                        verdict,
                        route: Route::FamilyThreshold,
                        details,
                        witness: Some(witness),
                    })),
                    None => Ok(Some(KebReport {
                        k,
                        verdict: Certificate::new(
                            Verdict::Fails,
                            Evidence::Analytic {
                                criterion: details.clone(),
                            },
                            method,
                        )
                        .with_warning("the two-row compression did not reproduce the refutation numerically"),
                        route: Route::FamilyThreshold,
                        details,
                        witness: Some(psi),
                    })),
                };
            }
            let mut bad = None;
            for i in 0..a.nrows() {
                let z = a[(i, i)];
                if z.re < -tol.eps_psd || z.im.abs() > RANK_GATE * scale {
                    bad = Some(i);
                    break;
                }
            }
            if let Some(i) = bad {
                let psi = ad_of(selector(&[i], a.nrows()))?;
                let details = format!(
                    "{clamp_note}diagonal multiplier entry {i} is not a nonnegative real, so the map is not positive"
                );
                return match composite_refutation(phi, &psi, tol)? {
                    Some((verdict, witness)) => Ok(Some(KebReport {
                        k,
                        verdict,
                        route: Route::FamilyThreshold,
                        details,
                        witness: Some(witness),
                    })),
                    None => Ok(Some(KebReport {
                        k,
                        verdict: Certificate::new(
                            Verdict::Fails,
                            Evidence::Analytic {
                                criterion: details.clone(),
                            },
                            method,
                        )
                        .with_warning("the rank-one compression did not reproduce the refutation numerically"),
                        route: Route::FamilyThreshold,
                        details,
                        witness: Some(psi),
                    })),
                };
            }
            Ok(Some(holds_report(
                k,
                Route::FamilyThreshold,
                method,
                "the multiplier is diagonal with nonnegative entries, so the map measures in the coordinate basis".into(),
                format!("{clamp_note}entanglement breaking at every order"),
            )))
        }
        Family::AdV { v } => {
            let sv = singular_values(v)?;
            let top = sv.first().copied().unwrap_or(0.0);
            let rank = sv
                .iter()
                .filter(|s| **s > RANK_GATE * top.max(1e-300))
                .count();
            if rank <= 1 {
                return Ok(Some(holds_report(
                    k,
                    Route::FamilyThreshold,
                    method,
                    format!("the compression matrix has rank {rank}, so the Choi matrix is a product state"),
                    format!("{clamp_note}entanglement breaking at every order"),
                )));
            }
            let mut rows = None;
            'rows: for p in 0..v.nrows() {
                for q in p + 1..v.nrows() {
                    let stack =
                        CMatrix::from_fn(2, v.ncols(), |r, c| v[(if r == 0 { p } else { q }, c)]);
                    let s = singular_values(&stack)?;
                    if s.len() >= 2 && s[1] > RANK_GATE * s[0].max(1e-300) {
                        rows = Some((p, q));
                        break 'rows;
                    }
                }
            }
            let (p, q) = match rows {
                Some(pair) => pair,
                None => {
                    return Ok(Some(KebReport {
                        k,
                        verdict: Certificate::new(
                            Verdict::Fails,
                            Evidence::Analytic {
                                criterion: format!("the compression matrix has rank {rank} >= 2"),
                            },
                            method,
                        )
                        .with_warning("no pair of independent rows was isolated numerically"),
                        route: Route::FamilyThreshold,
                        details: format!("{clamp_note}rank {rank} compression"),
                        witness: None,
                    }));
                }
            };
            let mut w = CMatrix::zeros(2, v.nrows());
            w[(0, p)] = re(1.0);
            w[(1, q)] = re(1.0);
            let psi = ad_of(w)?;
            let details = format!(
                "{clamp_note}rows {p} and {q} of the compression matrix are linearly independent, so the composite Choi matrix is an entangled pure state"
            );
            match composite_refutation(phi, &psi, tol)? {
                Some((verdict, witness)) => Ok(Some(KebReport {
                    k,
                    verdict,
                    route: Route::FamilyThreshold,
                    details,
                    witness: Some(witness),
                })),
                None => Ok(Some(KebReport {
                    k,
                    verdict: Certificate::new(
                        Verdict::Fails,
                        Evidence::Analytic {
                            criterion: details.clone(),
                        },
                        method,
                    )
                    .with_warning("the two-row compression did not reproduce the refutation numerically"),
                    route: Route::FamilyThreshold,
                    details,
                    witness: Some(psi),
                })),
            }
        }
        Family::Identity { d } => {
            if *d == 1 {
                Ok(Some(holds_report(
                    k,
                    Route::FamilyThreshold,
                    method,
                    "the identity on scalars is entanglement breaking".into(),
                    format!("{clamp_note}one-dimensional input"),
                )))
            } else {
                threshold_fails(
                    phi,
                    k,
                    keff,
                    tol,
                    format!("{clamp_note}the identity on a {d}-dimensional algebra preserves entanglement"),
                )
                .map(Some)
            }
        }
        Family::Transpose { d } => {
            if *d == 1 {
                Ok(Some(holds_report(
                    k,
                    Route::FamilyThreshold,
                    method,
                    "the transpose on scalars is entanglement breaking".into(),
                    format!("{clamp_note}one-dimensional input"),
                )))
            } else {
                threshold_fails(
                    phi,
                    k,
                    keff,
                    tol,
                    format!("{clamp_note}the transpose is not 2-positive on a {d}-dimensional algebra"),
                )
                .map(Some)
            }
        }
        Family::TraceMap { .. } => Ok(Some(holds_report(
            k,
            Route::FamilyThreshold,
            method,
            "the trace map sends every state to the identity".into(),
            format!("{clamp_note}entanglement breaking at every order"),
        ))),
        Family::DirectSum { .. } => Ok(None),
    }
}

/// Sufficient condition for trace-preserving positive maps: the order is
/// at least k when || d I - Phi(I) || <= 1/k in operator norm. For a
/// positive trace-preserving map the norm of X -> tr(X) I - Phi(X) is
/// attained at the identity, which reduces the quantified hypothesis to
/// one matrix norm.
fn norm_sufficient_route(
    phi: &ChannelRep,
    k: usize,
    tol: &ToleranceProfile,
) -> Result<Option<KebReport>> {
    if phi.dim_in != phi.dim_out {
        return Ok(None);
    }
    let d = phi.dim_in;
    let (keff, clamp_note) = clamped_order(k, d);
    let marginal = partial_trace(phi.choi(), Side::Second);
    if (marginal - identity(d)).norm() > 1e-9 * (d as f64) {
        return Ok(None);
    }
    if !positivity::is_positive_map(phi, tol)?.holds() {
        return Ok(None);
    }
    let gap = identity(d).scale(d as f64) - phi.apply(&identity(d))?;
    let t = op_norm_inf(&gap)?;
    if t <= 1.0 / keff as f64 {
        Ok(Some(holds_report(
            k,
            Route::NormSufficient,
            "norm condition",
            format!(
                "the map is positive and trace preserving with || d I - Phi(I) || = {t:.6e} <= 1/{keff}"
            ),
            format!("{clamp_note}sufficient norm condition"),
        )))
    } else {
        Ok(None)
    }
}

fn direct_sum_route(
    phi: &ChannelRep,
    k: usize,
    tol: &ToleranceProfile,
) -> Result<Option<KebReport>> {
    let (first, second) = match &phi.body {
        ChannelBody::Family(Family::DirectSum { first, second }) => (first, second),
        _ => return Ok(None),
    };
    let left = keb_certify(first, k, tol)?;
    let right = keb_certify(second, k, tol)?;
    for (name, sub) in [("first", &left), ("second", &right)] {
        if sub.verdict.fails() {
            let details = format!(
                "the {name} summand already fails at order {k}: {}",
                sub.details
            );
            if let Some(psi) = &sub.witness {
                if let Some((verdict, witness)) = composite_refutation(phi, psi, tol)? {
                    return Ok(Some(KebReport {
                        k,
                        verdict,
                        route: Route::DirectSum,
                        details,
                        witness: Some(witness),
                    }));
                }
            }
            return Ok(Some(KebReport {
                k,
                verdict: Certificate::new(
                    Verdict::Fails,
                    Evidence::Analytic {
                        criterion: details.clone(),
                    },
                    "direct sum recursion",
                )
                .with_warning("the summand witness did not lift to the direct sum numerically"),
                route: Route::DirectSum,
                details,
                witness: sub.witness.clone(),
            }));
        }
    }
    if left.verdict.holds() && right.verdict.holds() {
        return Ok(Some(holds_report(
            k,
            Route::DirectSum,
            "direct sum recursion",
            "both summands are entanglement breaking at this order".into(),
            format!(
                "first summand: {}; second summand: {}",
                left.details, right.details
            ),
        )));
    }
    Ok(Some(KebReport {
        k,
        verdict: Certificate::new(Verdict::Unknown, Evidence::Absent, "direct sum recursion"),
        route: Route::DirectSum,
        details: "at least one summand is undecided at this order".into(),
        witness: None,
    }))
}

fn principal_block_route(phi: &ChannelRep, k: usize, tol: &ToleranceProfile) -> Result<KebReport> {
    let (keff, clamp_note) = clamped_order(k, phi.dim_in);
    let indices: Vec<usize> = (0..keff).collect();
    let block = positivity::principal_block(phi.choi(), &indices, None)?;
    let psi = ad_of(selector(&indices, phi.dim_in))?;
    // The block equals the Choi matrix of the composition with the leading
    // coordinate compression, so refuting it needs no covariance.
    match sep_refute(&block, tol) {
        Ok(cert) if cert.fails() => {
            return Ok(KebReport {
                k,
                verdict: cert,
                route: Route::PrincipalBlock,
                details: format!(
                    "{clamp_note}the leading order-{keff} block of the Choi matrix is entangled"
                ),
                witness: Some(psi),
            });
        }
        Ok(_) => {}
        Err(Error::InvalidInput(_)) => {
            let gate = 1e-10 * block.mat.norm().max(1.0);
            let (value, vector) = min_eig_vec(&block.mat, gate)?;
            return Ok(KebReport {
                k,
                verdict: Certificate::new(
                    Verdict::Fails,
                    Evidence::Eigenvalue { value, vector },
                    "principal block eigensolve",
                )
                .with_warning("the leading block is not PSD, so the map is not k-positive at this order"),
                route: Route::PrincipalBlock,
                details: format!(
                    "{clamp_note}the leading order-{keff} block of the Choi matrix has a negative eigenvalue"
                ),
                witness: Some(psi),
            });
        }
        Err(e) => return Err(e),
    }
    if let Some(deviation) = positivity::equivariance_spot_check(phi, tol)? {
        return Ok(KebReport {
            k,
            verdict: Certificate::new(Verdict::Unknown, Evidence::Absent, "principal block separability")
                .with_warning(format!(
                    "the map is not unitarily covariant ({deviation}), so a separable leading block would not settle the order"
                )),
            route: Route::PrincipalBlock,
            details: format!(
                "{clamp_note}no analytic route applied and the block refuters found nothing; try keb_refute"
            ),
            witness: None,
        });
    }
    let (cert, _) = sep_certify(&block, tol)?;
    if cert.holds() {
        Ok(KebReport {
            k,
            verdict: cert,
            route: Route::PrincipalBlock,
            details: format!(
                "{clamp_note}for a unitarily covariant map the separable leading block settles every compression of size {keff}"
            ),
            witness: None,
        })
    } else {
        Ok(KebReport {
            k,
            verdict: Certificate::new(
                Verdict::Unknown,
                Evidence::Absent,
                "principal block separability",
            )
            .with_warning("separability of the leading block was not decided either way"),
            route: Route::PrincipalBlock,
            details: format!(
                "{clamp_note}the leading block passed every refuter but no separable decomposition was found"
            ),
            witness: None,
        })
    }
}

fn exact_interval(k: usize, interval: [f64; 2], details: String) -> ThresholdReport {
    ThresholdReport {
        k,
        certified: interval,
        necessary: interval,
        gap: None,
        exact: true,
        details,
    }
}

/// Lambda intervals for the parametric families; the lambda stored in the
/// family value is ignored. At order one the reported interval is the
/// complete positivity scale of the family.
pub fn keb_threshold(family: &Family, k: usize) -> Result<ThresholdReport> {
    if k == 0 {
        return Err(Error::InvalidInput("the order k must be at least 1".into()));
    }
    match family {
        Family::WernerHolevo { d, .. } => {
            if *d == 0 {
                return Err(Error::InvalidInput("dimension must be positive".into()));
            }
            if *d == 1 {
                return Ok(exact_interval(
                    k,
                    [f64::NEG_INFINITY, 1.0],
                    "on scalars the map is (1 - lambda) id".into(),
                ));
            }
            let keff = k.min(*d);
            if keff == 1 {
                return Ok(exact_interval(
                    k,
                    [-1.0, 1.0],
                    "at order one the interval reported is the complete positivity scale".into(),
                ));
            }
            let hi = 1.0 / keff as f64;
            Ok(exact_interval(
                k,
                [-1.0, hi],
                format!("exact threshold at order {keff}"),
            ))
        }
        Family::PhiLambda { d, .. } => {
            if *d == 0 {
                return Err(Error::InvalidInput("dimension must be positive".into()));
            }
            if *d == 1 {
                return Ok(exact_interval(
                    k,
                    [-0.5, f64::INFINITY],
                    "on scalars the map is (1 + 2 lambda) id".into(),
                ));
            }
            let keff = k.min(*d);
            let cp_lo = -1.0 / (*d as f64 + 1.0);
            if keff == 1 {
                return Ok(exact_interval(
                    k,
                    [cp_lo, 1.0],
                    "at order one the interval reported is the complete positivity scale".into(),
                ));
            }
            if keff == *d {
                return Ok(exact_interval(
                    k,
                    [cp_lo, 1.0],
                    format!("at order {keff} the property coincides with entanglement breaking, where the interval is exact"),
                ));
            }
            let necessary = -1.0 / (keff as f64 + 1.0);
            let sufficient = -1.0 / (2.0 * keff as f64);
            Ok(ThresholdReport {
                k,
                certified: [sufficient, 1.0],
                necessary: [necessary, 1.0],
                gap: Some([necessary, sufficient]),
                exact: false,
                details: format!(
                    "the strip [{necessary:.6}, {sufficient:.6}) between the necessary and the sufficient bound is unresolved"
                ),
            })
        }
        _ => Err(Error::InvalidInput(
            "only the lambda-parametric families carry thresholds".into(),
        )),
    }
}

/// Real trace pairing tr(C_Gamma C_Theta) of two Choi matrices.
///
/// For Hermiticity-preserving maps the pairing is real; a residual
/// imaginary part above 1e-9 (relative) is rejected. The pairing is
/// nonnegative whenever one side is a map of order k and the other
/// factors through a positive map composed with a compression of Schmidt
/// number at most k.
pub fn dual_pairing(gamma: &ChannelRep, theta: &ChannelRep) -> Result<f64> {
    if gamma.dim_in != theta.dim_in || gamma.dim_out != theta.dim_out {
        return Err(Error::DimensionMismatch(format!(
            "pairing needs matching shapes, got {}x{} and {}x{}",
            gamma.dim_in, gamma.dim_out, theta.dim_in, theta.dim_out
        )));
    }
    let z = (&gamma.choi().mat * &theta.choi().mat).trace();
    if z.im.abs() > 1e-9 * z.norm().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "the pairing has imaginary part {:.3e}; the inputs do not preserve hermiticity",
            z.im
        )));
    }
    Ok(z.re)
}

/// Samples random PSD inputs on d1 (x) k and checks that the flipped
/// extension Phi (x) id_k never produces a refutably entangled image.
/// For a map of order k the images are separable, so a FAILS here
/// signals an implementation bug rather than a property of the map.
pub fn flip_separability_check(
    phi: &ChannelRep,
    k: usize,
    trials: usize,
    tol: &ToleranceProfile,
) -> Result<Certificate> {
    if k == 0 {
        return Err(Error::InvalidInput("the order k must be at least 1".into()));
    }
    let flipped = channels::tensor_with_identity(phi, k, Side::Second)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tol.seed);
    for t in 0..trials {
        let x = random_psd(&mut rng, phi.dim_in * k);
        let y = flipped.apply(&x)?;
        let out = BipartiteOperator::new(y, phi.dim_out, k)?;
        let cert = sep_refute(&out, tol)?;
        if cert.fails() {
            return Ok(Certificate::new(
                Verdict::Fails,
                cert.evidence,
                format!("flipped image refuted on trial {t}: {}", cert.method),
            )
            .with_warning(
                "a map of this order must have separable flipped images; this indicates a bug or a wrong order claim",
            ));
        }
    }
    let cert = Certificate::new(
        Verdict::Holds,
        Evidence::Analytic {
            criterion: format!("{trials} random PSD inputs produced no refutable image"),
        },
        "flipped separability sampling",
    );
    Ok(if trials == 0 {
        cert.with_warning("zero trials is vacuous")
    } else {
        cert
    })
}

/// Strict Schmidt number reduction through a map of order 2.
///
/// For a certified order-2 map, composition with any CP map that is not
/// entanglement breaking strictly lowers the Schmidt number. HOLDS when
/// the bound comparison proves upper(composite) < lower(input map);
/// UNKNOWN when the computable bounds overlap.
pub fn sn_reduction_check(
    phi: &ChannelRep,
    psi: &ChannelRep,
    tol: &ToleranceProfile,
) -> Result<Certificate> {
    if psi.dim_out != phi.dim_in {
        return Err(Error::DimensionMismatch(format!(
            "composition needs psi output {} to match phi input {}",
            psi.dim_out, phi.dim_in
        )));
    }
    if psi.dim_in < 2 || psi.dim_in > phi.dim_out {
        return Err(Error::InvalidInput(format!(
            "the reduction statement covers input sizes 2..={}, got {}",
            phi.dim_out, psi.dim_in
        )));
    }
    if !keb_certify(phi, 2, tol)?.verdict.holds() {
        return Err(Error::InvalidInput(
            "the first map is not certified to be of order 2".into(),
        ));
    }
    if !positivity::is_cp(psi, tol)?.holds() {
        return Err(Error::InvalidInput(
            "the second map is not completely positive".into(),
        ));
    }
    if !sep_refute(psi.choi(), tol)?.fails() {
        return Err(Error::InvalidInput(
            "the second map was not refuted as entanglement breaking, so no strict reduction is claimed".into(),
        ));
    }
    let input_bounds = sn_bounds(psi.choi(), tol)?;
    let composite = channels::compose(phi, psi)?;
    let mut comp_bounds = sn_bounds(composite.choi(), tol)?;
    let mut sharpened = false;
    if comp_bounds.upper >= input_bounds.lower {
        let (cert, _) = sep_certify(composite.choi(), tol)?;
        if cert.holds() {
            comp_bounds.upper = 1;
            comp_bounds.lower = 1;
            sharpened = true;
        }
    }
    if comp_bounds.upper < input_bounds.lower {
        Ok(Certificate::new(
            Verdict::Holds,
            Evidence::Analytic {
                criterion: format!(
                    "Schmidt number upper bound {} of the composite is below the lower bound {} of the input map{}",
                    comp_bounds.upper,
                    input_bounds.lower,
                    if sharpened { " (composite certified separable)" } else { "" }
                ),
            },
            "schmidt number bound comparison",
        ))
    } else {
        Ok(Certificate::new(
            Verdict::Unknown,
            Evidence::Absent,
            "schmidt number bound comparison",
        )
        .with_warning(format!(
            "bounds overlap: composite in [{}, {}], input map in [{}, {}]",
            comp_bounds.lower, comp_bounds.upper, input_bounds.lower, input_bounds.upper
        )))
    }
}

/// Order of a composition of maps of orders n and m on M_d: n + m - 1,
/// clamped at d because order d already means entanglement breaking.
pub fn composition_degree(n: usize, m: usize, d: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if n < 2 || m < 2 || n > d || m > d {
        return Err(Error::InvalidInput(format!(
            "orders must lie in [2, {d}], got {n} and {m}"
        )));
    }
    Ok((n + m - 1).min(d))
}

/// Number of self-compositions after which a map of order k on M_d is
/// entanglement breaking: min of the Schmidt number bound of its Choi
/// matrix and ceil((d - 1) / (k - 1)).
pub fn power_to_eb(phi: &ChannelRep, k: usize) -> Result<usize> {
    if k <= 1 {
        return Err(Error::InvalidInput(
            "the iteration bound needs an order of at least 2".into(),
        ));
    }
    if phi.dim_in != phi.dim_out {
        return Err(Error::DimensionMismatch("powers need a square map".into()));
    }
    let d = phi.dim_in;
    if d == 1 {
        return Ok(1);
    }
    let tol = ToleranceProfile::default();
    let (sn, _) = sn_upper_bound_channel(phi, &tol)?;
    let keff = k.min(d);
    let ceiling = (d - 1 + keff - 2) / (keff - 1);
    Ok(sn.min(ceiling).max(1))
}

/// Order information that follows from the PPT property and the output
/// dimension alone: PPT maps into a 2-dimensional algebra have order 3,
/// into a 3-dimensional algebra order 2. For larger outputs nothing
/// follows (there are PPT maps on M_4 that are not of order 2).
pub fn ppt_keb_shortcut(phi: &ChannelRep, tol: &ToleranceProfile) -> Result<KebReport> {
    let ppt = positivity::is_ppt_map(phi, tol)?;
    if !ppt.holds() {
        return Ok(KebReport {
            k: 2,
            verdict: Certificate::new(Verdict::Unknown, Evidence::Absent, "ppt shortcut")
                .with_warning("the map was not certified PPT, so the shortcut does not apply"),
            route: Route::CompositionWitness,
            details: "the shortcut needs a completely positive map with a PPT Choi matrix".into(),
            witness: None,
        });
    }
    let k = match phi.dim_out {
        2 => 3,
        3 => 2,
        other => {
            return Ok(KebReport {
                k: 2,
                verdict: Certificate::new(Verdict::Unknown, Evidence::Absent, "ppt shortcut"),
                route: Route::CompositionWitness,
                details: format!(
                    "no order follows from the PPT property alone for output dimension {other}"
                ),
                witness: None,
            });
        }
    };
    Ok(KebReport {
        k,
        verdict: Certificate::new(
            Verdict::Holds,
            Evidence::Analytic {
                criterion: format!(
                    "every composition with a compression lands in dimensions where PPT implies separability, output dimension {}",
                    phi.dim_out
                ),
            },
            "ppt shortcut",
        ),
        route: Route::CompositionWitness,
        details: "order obtained from the PPT property and the output dimension alone".into(),
        witness: None,
    })
}
