//! Haar averaging over {U (x) U : U real orthogonal} and the geometry of its
//! three-dimensional fixed-point space span{I (x) I, |Omega><Omega|, Delta}.
//!
//! The projection onto the fixed-point space has closed-form coefficients
//! obtained from the trace pairings with the three basis elements, so no
//! integration is needed; the Monte-Carlo twirl is kept as an independent
//! cross-check. Membership in the separable subcone is decided by expressing
//! a target as a convex combination of twirled pure product points.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rand_distr::StandardNormal;

use crate::core_linalg::{
    identity, omega_projector, omega_vector, random_state_vector, re, swap_operator,
    BipartiteOperator, CMatrix, CVector,
};
use crate::positivity::{Certificate, Evidence, Verdict};
use crate::{Error, Result};

/// Default number of sampled product pairs for the cone membership test.
pub const DEFAULT_SAMPLE_POINTS: usize = 2000;

/// Output note attached to twirl reports: the projection keeps three
/// independent coefficients, even on inputs where symmetry makes b = c.
pub const COEFF_CONVENTION_NOTE: &str =
    "coefficients are reported in the basis {I(x)I, |Omega><Omega|, Delta}; \
     b and c are kept distinct";

const MEMBERSHIP_SEED: u64 = 0;
const EIG_FLOOR: f64 = 1e-9;
const BARY_TOL: f64 = 1e-9;

/// Coordinates in the basis {I (x) I, |Omega_d><Omega_d|, Delta_d}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwirlCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TwirlCoefficients {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// a I(x)I + b |Omega><Omega| + c Delta as a concrete operator.
    pub fn reconstruct(&self, d: usize) -> BipartiteOperator {
        let mat = identity(d * d) * re(self.a)
            + omega_projector(d) * re(self.b)
            + swap_operator(d) * re(self.c);
        BipartiteOperator {
            mat,
            dim_a: d,
            dim_b: d,
        }
    }

    pub fn trace(&self, d: usize) -> f64 {
        let dd = d as f64;
        self.a * dd * dd + (self.b + self.c) * dd
    }

    /// Exact spectrum of the reconstruction as (eigenvalue, multiplicity):
    /// the |Omega> line, the rest of the symmetric subspace, and the
    /// antisymmetric subspace.
    pub fn spectrum(&self, d: usize) -> [(f64, usize); 3] {
        let dd = d as f64;
        [
            (self.a + self.b * dd + self.c, 1),
            (self.a + self.c, d * (d + 1) / 2 - 1),
            (self.a - self.c, d * (d - 1) / 2),
        ]
    }

    /// Partial transposition on either factor swaps b and c.
    pub fn partial_transpose(&self) -> Self {
        Self {
            a: self.a,
            b: self.c,
            c: self.b,
        }
    }
}

/// Haar-distributed real orthogonal matrix (QR of a Gaussian matrix with the
/// R-diagonal sign correction), embedded as a complex matrix.
pub fn haar_orthogonal(d: usize, seed: u64) -> Result<CMatrix> {
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "haar_orthogonal needs d >= 2, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(haar_orthogonal_from(&mut rng, d))
}

fn haar_orthogonal_from(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    CMatrix::from_fn(d, d, |i, j| re(q[(i, j)]))
}

fn equal_factors(a: &BipartiteOperator) -> Result<usize> {
    if a.dim_a != a.dim_b {
        return Err(Error::DimensionMismatch(format!(
            "twirl needs equal factors, got {}x{}",
            a.dim_a, a.dim_b
        )));
    }
    Ok(a.dim_a)
}

/// Empirical mean of Ad_{U (x) U}(A) over `samples` Haar orthogonal draws.
///
/// Every sample draws from its own counter-indexed RNG stream and the mean is
/// accumulated entrywise with Kahan compensation, so the result does not
/// depend on summation order.
pub fn twirl_monte_carlo(
    a: &BipartiteOperator,
    samples: usize,
    seed: u64,
) -> Result<BipartiteOperator> {
    let d = equal_factors(a)?;
    if samples == 0 {
        return Err(Error::InvalidInput("samples must be positive".into()));
    }
    let n = d * d;
    let mut sum = CMatrix::zeros(n, n);
    let mut comp = CMatrix::zeros(n, n);
    for s in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let u = haar_orthogonal_from(&mut rng, d);
        let uu = u.kronecker(&u);
        let term = uu.adjoint() * &a.mat * &uu;
        for ((acc, c), t) in sum.iter_mut().zip(comp.iter_mut()).zip(term.iter()) {
            let y = t - *c;
            let next = *acc + y;
            *c = (next - *acc) - y;
            *acc = next;
        }
    }
    let mean = sum.map(|z| z / samples as f64);
    Ok(BipartiteOperator {
        mat: mean,
        dim_a: d,
        dim_b: d,
    })
}

/// Trace pairings of A with I(x)I, |Omega><Omega|, and Delta.
fn pairings(a: &BipartiteOperator, d: usize) -> Result<(f64, f64, f64)> {
    let scale = a.mat.norm().max(1.0);
    let dev = crate::core_linalg::hermiticity_deviation(&a.mat);
    if dev > 1e-9 * scale {
        return Err(Error::NotHermitian {
            deviation: dev,
            eps_herm: 1e-9 * scale,
        });
    }
    let mut tr = re(0.0);
    let mut om = re(0.0);
    let mut de = re(0.0);
    for i in 0..d {
        for j in 0..d {
            tr += a.mat[(i * d + j, i * d + j)];
            om += a.mat[(i * d + i, j * d + j)];
            de += a.mat[(i * d + j, j * d + i)];
        }
    }
    Ok((tr.re, om.re, de.re))
}

/// Coefficients of the fixed-point element with the same trace pairings,
/// from the symbolic inverse of the Gram matrix of the basis.
fn solve_pairings(tr: f64, om: f64, de: f64, d: usize) -> TwirlCoefficients {
    let dd = d as f64;
    let den = dd * dd * dd + dd * dd - 2.0 * dd;
    TwirlCoefficients {
        a: ((dd + 1.0) * tr - om - de) / den,
        b: ((dd + 1.0) * om - de - tr) / den,
        c: ((dd + 1.0) * de - om - tr) / den,
    }
}

/// Orthogonal (trace-pairing) projection onto span{I(x)I, |Omega><Omega|,
/// Delta}. Agrees with `twirl_monte_carlo` up to sampling noise and is exact
/// on the fixed-point space itself.
pub fn twirl_project(a: &BipartiteOperator) -> Result<(BipartiteOperator, TwirlCoefficients)> {
    let d = equal_factors(a)?;
    if d < 2 {
        return Err(Error::InvalidInput(
            "projection is degenerate at d = 1: the basis elements coincide".into(),
        ));
    }
    let (tr, om, de) = pairings(a, d)?;
    let coeffs = solve_pairings(tr, om, de, d);
    Ok((coeffs.reconstruct(d), coeffs))
}

/// Closed-form coefficients of the twirl of |x><x| (x) |y><y|, from the four
/// scalars ||x||, ||y||, |<x,y>| and |<x,conj(y)>|. The a coefficient is
/// always nonnegative.
pub fn twirl_product_coeffs(x: &CVector, y: &CVector, d: usize) -> Result<TwirlCoefficients> {
    if x.len() != d || y.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "expected two length-{} vectors, got {} and {}",
            d,
            x.len(),
            y.len()
        )));
    }
    if d < 2 {
        return Err(Error::InvalidInput(
            "twirl coefficients need d >= 2".into(),
        ));
    }
    let tr = x.norm_squared() * y.norm_squared();
    let om = x.dot(y).norm_sqr();
    let de = x.dotc(y).norm_sqr();
    Ok(solve_pairings(tr, om, de, d))
}

struct GeneratorPoint {
    coeffs: TwirlCoefficients,
    x: CVector,
    y: CVector,
}

fn unit(entries: &[(f64, f64)]) -> CVector {
    let v = CVector::from_iterator(entries.len(), entries.iter().map(|&(r, i)| crate::core_linalg::cx(r, i)));
    let n = v.norm();
    v / re(n)
}

/// Unit product pairs whose twirls span the extreme points of the sampled
/// region: a real orthogonal pair, an equal real pair, and the two
/// circularly polarized pairs, followed by seeded Gaussian pairs.
fn generator_points(d: usize, sample_points: usize) -> Result<Vec<GeneratorPoint>> {
    let mut e1 = vec![(0.0, 0.0); d];
    e1[0] = (1.0, 0.0);
    let mut e2 = vec![(0.0, 0.0); d];
    e2[1] = (1.0, 0.0);
    let mut plus = vec![(0.0, 0.0); d];
    plus[0] = (1.0, 0.0);
    plus[1] = (0.0, 1.0);
    let mut minus = vec![(0.0, 0.0); d];
    minus[0] = (1.0, 0.0);
    minus[1] = (0.0, -1.0);
    let structured = [
        (unit(&e1), unit(&e2)),
        (unit(&e1), unit(&e1)),
        (unit(&plus), unit(&plus)),
        (unit(&plus), unit(&minus)),
    ];
    let mut points = Vec::with_capacity(4 + sample_points);
    for (x, y) in structured {
        let coeffs = twirl_product_coeffs(&x, &y, d)?;
        points.push(GeneratorPoint { coeffs, x, y });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(MEMBERSHIP_SEED);
    for _ in 0..sample_points {
        let x = random_state_vector(&mut rng, d);
        let y = random_state_vector(&mut rng, d);
        let coeffs = twirl_product_coeffs(&x, &y, d)?;
        points.push(GeneratorPoint { coeffs, x, y });
    }
    Ok(points)
}

fn cross(o: (f64, f64), p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - o.0) * (q.1 - o.1) - (p.1 - o.1) * (q.0 - o.0)
}

/// Indices of the convex hull in counterclockwise order (monotone chain).
fn convex_hull(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| {
        pts[i]
            .partial_cmp(&pts[j])
            .expect("hull coordinates must be ordered")
    });
    order.dedup_by(|a, b| pts[*a] == pts[*b]);
    if order.len() <= 2 {
        return order;
    }
    let mut lower: Vec<usize> = Vec::new();
    for &i in &order {
        while lower.len() >= 2
            && cross(
                pts[lower[lower.len() - 2]],
                pts[lower[lower.len() - 1]],
                pts[i],
            ) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in order.iter().rev() {
        while upper.len() >= 2
            && cross(
                pts[upper[upper.len() - 2]],
                pts[upper[upper.len() - 1]],
                pts[i],
            ) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Convex weights over `pts` expressing `target`, or None if it lies outside
/// the hull (beyond a small barycentric tolerance).
fn hull_weights(pts: &[(f64, f64)], target: (f64, f64)) -> Option<Vec<(usize, f64)>> {
    let hull = convex_hull(pts);
    let dist2 = |p: (f64, f64), q: (f64, f64)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
    match hull.len() {
        0 => None,
        1 => (dist2(pts[hull[0]], target) <= BARY_TOL * BARY_TOL)
            .then(|| vec![(hull[0], 1.0)]),
        2 => {
            let p0 = pts[hull[0]];
            let p1 = pts[hull[1]];
            let len2 = dist2(p0, p1);
            let t = (((target.0 - p0.0) * (p1.0 - p0.0) + (target.1 - p0.1) * (p1.1 - p0.1))
                / len2)
                .clamp(0.0, 1.0);
            let proj = (p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1));
            (dist2(proj, target) <= BARY_TOL * BARY_TOL)
                .then(|| vec![(hull[0], 1.0 - t), (hull[1], t)])
        }
        _ => {
            for w in hull.windows(2).skip(1) {
                let (i0, i1, i2) = (hull[0], w[0], w[1]);
                let (p0, p1, p2) = (pts[i0], pts[i1], pts[i2]);
                let det = cross(p0, p1, p2);
                if det.abs() < 1e-14 {
                    continue;
                }
                let l1 = cross(p0, target, p2) / det;
                let l2 = cross(p0, p1, target) / det;
                let l0 = 1.0 - l1 - l2;
                if l0 >= -BARY_TOL && l1 >= -BARY_TOL && l2 >= -BARY_TOL {
                    let raw = [(i0, l0), (i1, l1), (i2, l2)];
                    let mut weights: Vec<(usize, f64)> = raw
                        .iter()
                        .map(|&(i, l)| (i, l.max(0.0)))
                        .filter(|&(_, l)| l > 0.0)
                        .collect();
                    let total: f64 = weights.iter().map(|&(_, l)| l).sum();
                    for w in &mut weights {
                        w.1 /= total;
                    }
                    return Some(weights);
                }
            }
            None
        }
    }
}

fn embedded_vector(d: usize, entries: &[(usize, f64, f64)]) -> CVector {
    let mut v = CVector::zeros(d * d);
    for &(i, r, im) in entries {
        v[i] = crate::core_linalg::cx(r, im);
    }
    v
}

/// Smallest closed-form eigenvalue over the operator and its partial
/// transpose, with an explicit eigenvector and a label for which side fired.
fn ppt_certificate(coeffs: &TwirlCoefficients, d: usize) -> Option<Certificate> {
    let sq = std::f64::consts::FRAC_1_SQRT_2;
    let omega = omega_vector(d).map(|z| z / re((d as f64).sqrt()));
    let symmetric = embedded_vector(d, &[(d, sq, 0.0), (1, sq, 0.0)]);
    let antisymmetric = embedded_vector(d, &[(d, sq, 0.0), (1, -sq, 0.0)]);
    let mut worst: Option<(f64, CVector, &'static str)> = None;
    for (label, side) in [
        ("operator spectrum", *coeffs),
        ("partial transpose spectrum", coeffs.partial_transpose()),
    ] {
        let spectrum = side.spectrum(d);
        let vectors = [&omega, &symmetric, &antisymmetric];
        for ((value, mult), vector) in spectrum.into_iter().zip(vectors) {
            if mult == 0 {
                continue;
            }
            if worst.as_ref().map_or(true, |w| value < w.0) {
                worst = Some((value, vector.clone(), label));
            }
        }
    }
    let (value, vector, label) = worst?;
    if value < -EIG_FLOOR {
        Some(Certificate::new(
            Verdict::Fails,
            Evidence::Eigenvalue { value, vector },
            format!("closed-form {label}"),
        ))
    } else {
        None
    }
}

/// Decides whether a I(x)I + b |Omega><Omega| + c Delta lies in the separable
/// cone by writing its trace normalization as a convex combination of twirled
/// pure products.
///
/// HOLDS evidence lists product pairs scaled so that applying the twirl to
/// the sum of their outer products reproduces the operator: a pair carries
/// weight ||x||^2 ||y||^2. FAILS comes only from the closed-form spectra of
/// the operator and its partial transpose; anything else is UNKNOWN.
pub fn twirl_cone_membership(
    coeffs: &TwirlCoefficients,
    d: usize,
    sample_points: usize,
) -> Result<Certificate> {
    if d < 2 {
        return Err(Error::InvalidInput(format!(
            "cone membership needs d >= 2, got {d}"
        )));
    }
    if !(coeffs.a.is_finite() && coeffs.b.is_finite() && coeffs.c.is_finite()) {
        return Err(Error::InvalidInput("coefficients must be finite".into()));
    }
    let trace = coeffs.trace(d);
    let scale = coeffs.a.abs().max(coeffs.b.abs()).max(coeffs.c.abs());
    if trace.abs() <= 1e-12 * scale.max(1.0) * (d * d) as f64 {
        return Err(Error::InvalidInput(
            "degenerate trace 0: the cone test needs a trace-normalizable operator".into(),
        ));
    }
    if let Some(cert) = ppt_certificate(coeffs, d) {
        return Ok(cert);
    }
    if trace < 0.0 {
        return Err(Error::InvalidInput(
            "trace is negative but all closed-form eigenvalues are within tolerance of zero"
                .into(),
        ));
    }
    let generators = generator_points(d, sample_points)?;
    let pts: Vec<(f64, f64)> = generators
        .iter()
        .map(|g| (g.coeffs.b, g.coeffs.c))
        .collect();
    let target = (coeffs.b / trace, coeffs.c / trace);
    match hull_weights(&pts, target) {
        Some(weights) => {
            let mut sum = TwirlCoefficients::new(0.0, 0.0, 0.0);
            let mut pairs = Vec::with_capacity(weights.len());
            for &(i, w) in &weights {
                let g = &generators[i];
                let alpha = re((trace * w).powf(0.25));
                pairs.push((&g.x * alpha, &g.y * alpha));
                sum.a += trace * w * g.coeffs.a;
                sum.b += trace * w * g.coeffs.b;
                sum.c += trace * w * g.coeffs.c;
            }
            let residual = ((sum.a - coeffs.a).powi(2)
                + (sum.b - coeffs.b).powi(2)
                + (sum.c - coeffs.c).powi(2))
            .sqrt();
            Ok(Certificate::new(
                Verdict::Holds,
                Evidence::SeparableDecomposition { pairs, residual },
                "convex combination of twirled pure products",
            ))
        }
        None => Ok(Certificate::new(
            Verdict::Unknown,
            Evidence::Absent,
            "outside the sampled twirled-product hull, no spectral refutation",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_linalg::{
        kron, mat_approx_eq, matrix_unit, partial_transpose, random_complex_matrix, Side,
    };
    use rand::Rng;

    fn quad_form(m: &CMatrix, v: &CVector) -> f64 {
        (v.adjoint() * m * v)[(0, 0)].re
    }

    #[test]
    fn haar_orthogonal_samples_are_orthogonal() {
        for s in 0..100u64 {
            let d = 2 + (s % 3) as usize;
            let u = haar_orthogonal(d, s).unwrap();
            let residual = (&u * u.transpose() - identity(d)).norm();
            assert!(residual <= 1e-12, "residual {residual} at seed {s}");
            assert!(u.iter().all(|z| z.im == 0.0));
        }
        assert!(haar_orthogonal(1, 0).is_err());
    }

    #[test]
    fn haar_orthogonal_moments() {
        let d = 3;
        let n = 10_000;
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for s in 0..n {
            let u = haar_orthogonal(d, s as u64).unwrap();
            let entry = u[(0, 0)].re;
            mean += entry;
            mean_sq += entry * entry;
        }
        mean /= n as f64;
        mean_sq /= n as f64;
        let sigma = (1.0 / d as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sigma / 100.0, "first moment {mean}");
        assert!(
            (mean_sq - 1.0 / d as f64).abs() <= 0.012,
            "second moment {mean_sq}"
        );
    }

    #[test]
    fn monte_carlo_fixes_the_fixed_point_space() {
        let d = 3;
        let a = TwirlCoefficients::new(0.7, 0.3, -0.2).reconstruct(d);
        let out = twirl_monte_carlo(&a, 50, 5).unwrap();
        assert!(mat_approx_eq(&out.mat, &a.mat, 1e-12));
    }

    #[test]
    fn monte_carlo_matches_projection() {
        let d = 3;
        let a = BipartiteOperator::new(
            kron(&matrix_unit(d, d, 0, 0), &matrix_unit(d, d, 1, 1)),
            d,
            d,
        )
        .unwrap();
        let (projected, _) = twirl_project(&a).unwrap();
        let sampled = twirl_monte_carlo(&a, 100_000, 0).unwrap();
        let gap = (&sampled.mat - &projected.mat).norm();
        assert!(gap <= 5e-3, "monte carlo gap {gap}");
        let trace_gap = (sampled.mat.trace() - a.mat.trace()).norm();
        assert!(trace_gap <= 1e-9);
    }

    #[test]
    fn projection_examples() {
        let d = 3;
        let (projected, coeffs) = twirl_project(&BipartiteOperator::new(identity(9), 3, 3).unwrap())
            .unwrap();
        assert!((coeffs.a - 1.0).abs() <= 1e-14);
        assert!(coeffs.b.abs() <= 1e-14 && coeffs.c.abs() <= 1e-14);
        assert!(mat_approx_eq(&projected.mat, &identity(9), 1e-12));

        let a = BipartiteOperator::new(
            kron(&matrix_unit(d, d, 0, 0), &matrix_unit(d, d, 1, 1)),
            d,
            d,
        )
        .unwrap();
        let (_, coeffs) = twirl_project(&a).unwrap();
        assert!((coeffs.a - 2.0 / 15.0).abs() <= 1e-12);
        assert!((coeffs.b + 1.0 / 30.0).abs() <= 1e-12);
        assert!((coeffs.c + 1.0 / 30.0).abs() <= 1e-12);

        let x = unit(&[(1.0, 0.0), (0.0, 1.0)]);
        let xx = &x * x.adjoint();
        let prod = BipartiteOperator::new(kron(&xx, &xx), 2, 2).unwrap();
        let (_, coeffs) = twirl_project(&prod).unwrap();
        assert!((coeffs.a - 0.25).abs() <= 1e-12);
        assert!((coeffs.b + 0.25).abs() <= 1e-12, "b branch {}", coeffs.b);
        assert!((coeffs.c - 0.25).abs() <= 1e-12);
        assert!(coeffs.b < 0.0);

        assert!(twirl_project(&BipartiteOperator::new(identity(1), 1, 1).unwrap()).is_err());
        assert!(twirl_project(&BipartiteOperator::new(identity(6), 2, 3).unwrap()).is_err());
    }

    #[test]
    fn projection_is_idempotent_and_preserves_pairings() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100usize {
            let d = 2 + trial % 3;
            let g = random_complex_matrix(&mut rng, d * d, d * d);
            let herm = (&g + g.adjoint()) * re(0.5);
            let a = BipartiteOperator::new(herm, d, d).unwrap();
            let (p1, c1) = twirl_project(&a).unwrap();
            let (p2, c2) = twirl_project(&p1).unwrap();
            assert!(mat_approx_eq(&p1.mat, &p2.mat, 1e-10));
            assert!((c1.a - c2.a).abs() <= 1e-12);
            assert!((c1.b - c2.b).abs() <= 1e-12);
            assert!((c1.c - c2.c).abs() <= 1e-12);
            let (tr_a, om_a, de_a) = pairings(&a, d).unwrap();
            let (tr_p, om_p, de_p) = pairings(&p1, d).unwrap();
            let scale = a.mat.norm().max(1.0);
            assert!((tr_a - tr_p).abs() <= 1e-10 * scale);
            assert!((om_a - om_p).abs() <= 1e-10 * scale);
            assert!((de_a - de_p).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn fixed_point_basis_projects_to_itself() {
        for d in [2usize, 3] {
            let basis = [
                (identity(d * d), (1.0, 0.0, 0.0)),
                (omega_projector(d), (0.0, 1.0, 0.0)),
                (swap_operator(d), (0.0, 0.0, 1.0)),
            ];
            for (mat, expect) in basis {
                let a = BipartiteOperator::new(mat.clone(), d, d).unwrap();
                let (projected, coeffs) = twirl_project(&a).unwrap();
                assert!(mat_approx_eq(&projected.mat, &mat, 1e-12));
                assert!((coeffs.a - expect.0).abs() <= 1e-13);
                assert!((coeffs.b - expect.1).abs() <= 1e-13);
                assert!((coeffs.c - expect.2).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn product_coeff_examples() {
        let e = |d: usize, i: usize| {
            let mut v = CVector::zeros(d);
            v[i] = re(1.0);
            v
        };
        let c = twirl_product_coeffs(&e(2, 0), &e(2, 0), 2).unwrap();
        assert!((c.a - 0.125).abs() <= 1e-15);
        assert!((c.b - 0.125).abs() <= 1e-15);
        assert!((c.c - 0.125).abs() <= 1e-15);

        let c = twirl_product_coeffs(&e(3, 0), &e(3, 1), 3).unwrap();
        assert!((c.a - 2.0 / 15.0).abs() <= 1e-15);
        assert!((c.b + 1.0 / 30.0).abs() <= 1e-15);
        assert!((c.c + 1.0 / 30.0).abs() <= 1e-15);

        assert!(twirl_product_coeffs(&e(2, 0), &e(3, 1), 3).is_err());
    }

    #[test]
    fn product_coeffs_agree_with_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let d = 3;
            let x = random_state_vector(&mut rng, d);
            let y = random_state_vector(&mut rng, d);
            let closed = twirl_product_coeffs(&x, &y, d).unwrap();
            let prod = BipartiteOperator::new(
                kron(&(&x * x.adjoint()), &(&y * y.adjoint())),
                d,
                d,
            )
            .unwrap();
            let (_, projected) = twirl_project(&prod).unwrap();
            assert!((closed.a - projected.a).abs() <= 1e-10);
            assert!((closed.b - projected.b).abs() <= 1e-10);
            assert!((closed.c - projected.c).abs() <= 1e-10);
        }
    }

    #[test]
    fn product_coeff_a_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..10_000usize {
            let d = 2 + trial % 4;
            let x = random_complex_matrix(&mut rng, d, 1).column(0).into_owned();
            let y = random_complex_matrix(&mut rng, d, 1).column(0).into_owned();
            let c = twirl_product_coeffs(&x, &y, d).unwrap();
            let scale = x.norm_squared() * y.norm_squared();
            assert!(c.a >= -1e-12 * scale, "a = {} at trial {trial}", c.a);
        }
    }

    #[test]
    fn twirled_products_stay_ppt() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..200usize {
            let d = 2 + trial % 3;
            let x = random_state_vector(&mut rng, d);
            let y = random_state_vector(&mut rng, d);
            let c = twirl_product_coeffs(&x, &y, d).unwrap();
            for (value, mult) in c.spectrum(d).into_iter().chain(
                c.partial_transpose().spectrum(d),
            ) {
                if mult > 0 {
                    assert!(value >= -1e-12, "eigenvalue {value} at trial {trial}");
                }
            }
        }
    }

    fn verify_decomposition(cert: &Certificate, coeffs: &TwirlCoefficients, d: usize) {
        let Evidence::SeparableDecomposition { pairs, residual } = &cert.evidence else {
            panic!("expected a separable decomposition, got {:?}", cert.evidence);
        };
        let mut sum = TwirlCoefficients::new(0.0, 0.0, 0.0);
        for (x, y) in pairs {
            let c = twirl_product_coeffs(x, y, d).unwrap();
            sum.a += c.a;
            sum.b += c.b;
            sum.c += c.c;
        }
        let gap = ((sum.a - coeffs.a).powi(2)
            + (sum.b - coeffs.b).powi(2)
            + (sum.c - coeffs.c).powi(2))
        .sqrt();
        assert!(gap <= 1e-8 + 2.0 * residual, "reconstruction gap {gap}");
    }

    #[test]
    fn cone_membership_boundary_points_hold() {
        let d = 3;
        let lo = TwirlCoefficients::new(1.0, -0.25, -0.25);
        let cert = twirl_cone_membership(&lo, d, 200).unwrap();
        assert!(cert.holds(), "{cert:?}");
        verify_decomposition(&cert, &lo, d);

        let hi = TwirlCoefficients::new(1.0, 1.0, 1.0);
        let cert = twirl_cone_membership(&hi, d, 200).unwrap();
        assert!(cert.holds(), "{cert:?}");
        verify_decomposition(&cert, &hi, d);
    }

    #[test]
    fn cone_membership_werner_threshold() {
        let d = 3;
        let sep = TwirlCoefficients::new(1.0, 0.0, -1.0 / 3.0);
        let cert = twirl_cone_membership(&sep, d, 200).unwrap();
        assert!(cert.holds(), "{cert:?}");
        verify_decomposition(&cert, &sep, d);

        let entangled = TwirlCoefficients::new(1.0, 0.0, -(1.0 / 3.0 + 0.1));
        let cert = twirl_cone_membership(&entangled, d, 200).unwrap();
        assert!(cert.fails(), "{cert:?}");
        assert!(cert.method.contains("partial transpose"));
        let Evidence::Eigenvalue { value, vector } = &cert.evidence else {
            panic!("expected eigenvalue evidence");
        };
        assert!((value - (1.0 - d as f64 * (1.0 / 3.0 + 0.1))).abs() <= 1e-12);
        let pt = partial_transpose(&entangled.reconstruct(d), Side::Second);
        assert!((quad_form(&pt.mat, vector) - value).abs() <= 1e-12);

        let again = twirl_cone_membership(&sep, d, 200).unwrap();
        let repeat = twirl_cone_membership(&sep, d, 200).unwrap();
        assert_eq!(format!("{again:?}"), format!("{repeat:?}"));
    }

    #[test]
    fn cone_membership_interior_and_degenerate() {
        let d = 2;
        let interior = TwirlCoefficients::new(1.0, 0.01, -0.02);
        let cert = twirl_cone_membership(&interior, d, 500).unwrap();
        assert!(cert.holds(), "{cert:?}");
        verify_decomposition(&cert, &interior, d);

        assert!(twirl_cone_membership(&TwirlCoefficients::new(0.0, 0.0, 0.0), d, 10).is_err());
        assert!(twirl_cone_membership(&TwirlCoefficients::new(1.0, 0.0, 0.0), 1, 10).is_err());
        assert!(
            twirl_cone_membership(&TwirlCoefficients::new(f64::NAN, 0.0, 0.0), d, 10).is_err()
        );

        let negated = TwirlCoefficients::new(-1.0, 0.0, 0.0);
        let cert = twirl_cone_membership(&negated, d, 10).unwrap();
        assert!(cert.fails());
        assert!(cert.method.contains("operator spectrum"));
    }

    #[test]
    fn spectrum_matches_dense_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let d = 3;
            let coeffs = TwirlCoefficients::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let dense = coeffs.reconstruct(d);
            let (mut values, _) =
                crate::core_linalg::hermitian_eig(&dense.mat, 1e-10).unwrap();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut closed: Vec<f64> = coeffs
                .spectrum(d)
                .into_iter()
                .flat_map(|(v, m)| std::iter::repeat(v).take(m))
                .collect();
            closed.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (dense_v, closed_v) in values.iter().zip(closed.iter()) {
                assert!((dense_v - closed_v).abs() <= 1e-10);
            }
        }
    }
}
