//! Dense complex linear algebra and bipartite-structure primitives.
//!
//! Everything downstream works with `CMatrix` (a dense `nalgebra` matrix of
//! `Complex64`) and `BipartiteOperator` (a square matrix on a tensor product
//! space that remembers its factor dimensions). Matrix entries entering or
//! leaving the crate are always read in row-major order.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Which tensor factor an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

/// Numeric policy threaded through every decision procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct ToleranceProfile {
    /// Eigenvalue floor: PSD means smallest eigenvalue >= -eps_psd.
    pub eps_psd: f64,
    /// Allowed Hermiticity deviation before symmetrization is refused.
    pub eps_herm: f64,
    /// Residual allowed for a separable decomposition.
    pub eps_sep: f64,
    /// Elementwise matrix equality tolerance.
    pub eps_eq: f64,
    /// Restarts for nonconvex witness searches.
    pub restarts: usize,
    /// Sample count for randomized scans.
    pub samples: usize,
    /// Seed for every RNG in the crate.
    pub seed: u64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            eps_psd: 1e-9,
            eps_herm: 1e-10,
            eps_sep: 1e-7,
            eps_eq: 1e-10,
            restarts: 64,
            samples: 100_000,
            seed: 0,
        }
    }
}

/// Square operator on C^dimA (x) C^dimB.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteOperator {
    pub mat: CMatrix,
    pub dim_a: usize,
    pub dim_b: usize,
}

impl BipartiteOperator {
    pub fn new(mat: CMatrix, dim_a: usize, dim_b: usize) -> Result<Self> {
        let n = dim_a * dim_b;
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected square side {} for dims {}x{}, got {}x{}",
                n,
                dim_a,
                dim_b,
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { mat, dim_a, dim_b })
    }

    pub fn side(&self) -> usize {
        self.dim_a * self.dim_b
    }

    /// The (i,j) block of size dimB x dimB under M_dA (M_dB).
    pub fn block(&self, i: usize, j: usize) -> CMatrix {
        let d = self.dim_b;
        self.mat.view((i * d, j * d), (d, d)).into_owned()
    }
}

pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Row-major constructor, the convention for all external input.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> Result<CMatrix> {
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} entries for a {}x{} matrix",
            entries.len(),
            rows,
            cols
        )));
    }
    Ok(CMatrix::from_row_slice(rows, cols, entries))
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Matrix unit E_ij.
pub fn matrix_unit(rows: usize, cols: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    m[(i, j)] = re(1.0);
    m
}

/// Kronecker product with the block convention [a_ij B].
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Unnormalized maximally entangled vector, squared norm d.
pub fn omega_vector(d: usize) -> CVector {
    let mut v = CVector::zeros(d * d);
    for i in 0..d {
        v[i * d + i] = re(1.0);
    }
    v
}

/// |Omega_d><Omega_d| as a d^2 x d^2 matrix.
pub fn omega_projector(d: usize) -> CMatrix {
    let v = omega_vector(d);
    &v * v.adjoint()
}

/// Swap (flip) operator Delta_d mapping x (x) y to y (x) x.
pub fn swap_operator(d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + j, j * d + i)] = re(1.0);
        }
    }
    m
}

/// tr_1 or tr_2 of a bipartite operator.
pub fn partial_trace(x: &BipartiteOperator, side: Side) -> CMatrix {
    let (da, db) = (x.dim_a, x.dim_b);
    match side {
        Side::First => {
            let mut out = CMatrix::zeros(db, db);
            for i in 0..da {
                out += x.block(i, i);
            }
            out
        }
        Side::Second => {
            let mut out = CMatrix::zeros(da, da);
            for i in 0..da {
                for j in 0..da {
                    out[(i, j)] = x.block(i, j).trace();
                }
            }
            out
        }
    }
}

/// Blockwise transpose on the chosen factor; involutive and trace preserving.
pub fn partial_transpose(x: &BipartiteOperator, side: Side) -> BipartiteOperator {
    let (da, db) = (x.dim_a, x.dim_b);
    let mut out = CMatrix::zeros(x.side(), x.side());
    for i in 0..da {
        for j in 0..db {
            for k in 0..da {
                for l in 0..db {
                    let (r, c) = (i * db + j, k * db + l);
                    let src = match side {
                        Side::First => (k * db + j, i * db + l),
                        Side::Second => (i * db + l, k * db + j),
                    };
                    out[(r, c)] = x.mat[src];
                }
            }
        }
    }
    BipartiteOperator {
        mat: out,
        dim_a: da,
        dim_b: db,
    }
}

/// Realigned matrix R with R[(i,j),(k,l)] = X[(i,k),(j,l)], size dA^2 x dB^2.
///
/// For separable X the sum of singular values of R is at most tr(X).
pub fn realignment(x: &BipartiteOperator) -> CMatrix {
    let (da, db) = (x.dim_a, x.dim_b);
    let mut r = CMatrix::zeros(da * da, db * db);
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                for l in 0..db {
                    r[(i * da + j, k * db + l)] = x.mat[(i * db + k, j * db + l)];
                }
            }
        }
    }
    r
}

/// Inverse reshuffle: recovers X from its realignment.
pub fn realignment_inverse(r: &CMatrix, dim_a: usize, dim_b: usize) -> Result<BipartiteOperator> {
    if r.nrows() != dim_a * dim_a || r.ncols() != dim_b * dim_b {
        return Err(Error::DimensionMismatch(format!(
            "realigned matrix must be {}x{}, got {}x{}",
            dim_a * dim_a,
            dim_b * dim_b,
            r.nrows(),
            r.ncols()
        )));
    }
    let mut x = CMatrix::zeros(dim_a * dim_b, dim_a * dim_b);
    for i in 0..dim_a {
        for j in 0..dim_a {
            for k in 0..dim_b {
                for l in 0..dim_b {
                    x[(i * dim_b + k, j * dim_b + l)] = r[(i * dim_a + j, k * dim_b + l)];
                }
            }
        }
    }
    BipartiteOperator::new(x, dim_a, dim_b)
}

/// Max |M[i,j] - conj(M[j,i])| over all entries.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
///
/// Inputs deviating from Hermiticity by more than `eps_herm` are refused;
/// smaller deviations are symmetrized away. The reconstruction
/// V diag(w) V* must match to 1e-10 * ||M||_F or the call fails.
pub fn hermitian_eig(m: &CMatrix, eps_herm: f64) -> Result<(Vec<f64>, CMatrix)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "hermitian_eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let dev = hermiticity_deviation(m);
    if dev > eps_herm {
        return Err(Error::NotHermitian {
            deviation: dev,
            eps_herm,
        });
    }
    let sym = symmetrize(m);
    let gate = 1e-10 * sym.norm().max(1.0);
    let eig = sym.clone().symmetric_eigen();
    let qr_values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    match sorted_gated(&sym, qr_values, eig.eigenvectors, gate) {
        Ok(out) => Ok(out),
        Err(_) => {
            let (values, vectors) = jacobi_eig(&sym);
            sorted_gated(&sym, values, vectors, gate).map_err(|resid| {
                Error::ResidualGate(format!(
                    "hermitian_eig reconstruction residual {:.3e}",
                    resid
                ))
            })
        }
    }
}

/// Sorts an eigendecomposition descending and enforces the reconstruction
/// gate; the Err side carries the residual.
fn sorted_gated(
    sym: &CMatrix,
    values: Vec<f64>,
    vectors: CMatrix,
    gate: f64,
) -> std::result::Result<(Vec<f64>, CMatrix), f64> {
    let n = sym.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut cols = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        cols.set_column(col, &vectors.column(i));
    }
    let diag = CMatrix::from_fn(n, n, |i, j| if i == j { re(sorted[i]) } else { re(0.0) });
    let resid = (&cols * diag * cols.adjoint() - sym).norm();
    if resid > gate {
        return Err(resid);
    }
    Ok((sorted, cols))
}

/// Cyclic Jacobi eigendecomposition for Hermitian matrices.
///
/// Fallback for the rare inputs where the QR-based eigensolver misses the
/// reconstruction gate: plane rotations converge unconditionally and leave
/// residuals at machine precision on the dimensions used here.
fn jacobi_eig(sym: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = sym.nrows();
    let mut a = sym.clone();
    let mut v = identity(n);
    let total = sym.norm();
    if total == 0.0 || n < 2 {
        return ((0..n).map(|i| a[(i, i)].re).collect(), v);
    }
    for _ in 0..40 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= 1e-15 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-16 * total {
                    continue;
                }
                let phase = apq / r;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let cs = re(c);
                let s_out = re(s) * phase.conj();
                let s_in = re(s) * phase;
                for i in 0..n {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = cs * x - s_out * y;
                    a[(i, q)] = re(s) * x + cs * phase.conj() * y;
                }
                for i in 0..n {
                    let (x, y) = (a[(p, i)], a[(q, i)]);
                    a[(p, i)] = cs * x - s_in * y;
                    a[(q, i)] = re(s) * x + cs * phase * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = cs * x - s_out * y;
                    v[(i, q)] = re(s) * x + cs * phase.conj() * y;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

/// Thin wrapper holding M = U diag(sigma) V*.
#[derive(Debug, Clone)]
pub struct SvdParts {
    pub u: CMatrix,
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

/// Singular values in descending order, to full precision.
///
/// Computed from the Hermitian augmented matrix [[0, M], [M*, 0]], whose
/// spectrum is {+sigma_i, -sigma_i} plus |rows-cols| zeros. This avoids
/// the precision loss of Gram-matrix squaring on small singular values.
pub fn singular_values(m: &CMatrix) -> Result<Vec<f64>> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let n = rows + cols;
    let mut h = CMatrix::zeros(n, n);
    h.view_mut((0, rows), (rows, cols)).copy_from(m);
    h.view_mut((rows, 0), (cols, rows)).copy_from(&m.adjoint());
    let (lam, _) = hermitian_eig(&h, 1e-12 * h.norm().max(1.0))?;
    let mut vals: Vec<f64> = lam.into_iter().map(|v| v.max(0.0)).collect();
    vals.truncate(rows.min(cols));
    Ok(vals)
}

fn complete_orthonormal(mat: &mut CMatrix, filled: &mut [bool]) {
    let rows = mat.nrows();
    for i in 0..filled.len() {
        if filled[i] {
            continue;
        }
        let mut best: Option<CVector> = None;
        let mut best_norm = -1.0;
        for cand in 0..rows {
            let mut v = CVector::zeros(rows);
            v[cand] = re(1.0);
            for j in 0..filled.len() {
                if j != i && filled[j] {
                    let overlap = mat.column(j).dotc(&v);
                    v -= mat.column(j) * overlap;
                }
            }
            let n = v.norm();
            if n > best_norm {
                best_norm = n;
                best = Some(v.unscale(n.max(1e-300)));
            }
        }
        mat.set_column(i, &best.expect("nonempty candidate set"));
        filled[i] = true;
    }
}

/// Singular value decomposition with a hard residual gate.
///
/// Factors come from the Hermitian eigendecomposition of the augmented
/// matrix: the eigenvector for +sigma_i is (u_i; v_i)/sqrt(2), so both
/// bases inherit the eigensolver's orthonormality even under degenerate
/// or tiny singular values. Reconstruction is gated at 1e-10 * ||M||_F.
pub fn svd(m: &CMatrix) -> Result<SvdParts> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let n = rows + cols;
    let mut h = CMatrix::zeros(n, n);
    h.view_mut((0, rows), (rows, cols)).copy_from(m);
    h.view_mut((rows, 0), (cols, rows)).copy_from(&m.adjoint());
    let scale = h.norm().max(1.0);
    let (lam, w) = hermitian_eig(&h, 1e-12 * scale)?;
    match svd_from_eig(m, &lam, &w) {
        Ok(parts) => Ok(parts),
        Err(_) => {
            let (values, vectors) = jacobi_eig(&h);
            let (lam, w) = sorted_gated(&h, values, vectors, f64::INFINITY)
                .expect("gate disabled");
            svd_from_eig(m, &lam, &w).map_err(|resid| {
                Error::ResidualGate(format!("svd reconstruction residual {:.3e}", resid))
            })
        }
    }
}

/// Factors M = U diag(sigma) V* out of an eigendecomposition of the
/// augmented matrix; the Err side carries the reconstruction residual.
fn svd_from_eig(
    m: &CMatrix,
    lam: &[f64],
    w: &CMatrix,
) -> std::result::Result<SvdParts, f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let k = rows.min(cols);
    let cutoff = lam.first().copied().unwrap_or(0.0).max(0.0) * 1e-12;
    let mut sigma = Vec::with_capacity(k);
    let mut u = CMatrix::zeros(rows, k);
    let mut v = CMatrix::zeros(cols, k);
    let mut filled = vec![false; k];
    for i in 0..k {
        sigma.push(lam[i].max(0.0));
        if lam[i] > cutoff {
            let wi = w.column(i);
            let ui = wi.rows(0, rows).into_owned();
            let vi = wi.rows(rows, cols).into_owned();
            let (nu, nv) = (ui.norm(), vi.norm());
            // a positive singular value forces ||u|| = ||v|| = 1/sqrt(2)
            if nu > 0.5 && nv > 0.5 {
                u.set_column(i, &ui.unscale(nu));
                v.set_column(i, &vi.unscale(nv));
                filled[i] = true;
            }
        }
    }
    let mut filled_u = filled.clone();
    complete_orthonormal(&mut u, &mut filled_u);
    complete_orthonormal(&mut v, &mut filled);
    let diag = CMatrix::from_fn(k, k, |i, j| if i == j { re(sigma[i]) } else { re(0.0) });
    let resid = (&u * diag * v.adjoint() - m).norm();
    if resid > 1e-10 * m.norm().max(1.0) {
        return Err(resid);
    }
    Ok(SvdParts { u, sigma, v })
}

/// Largest singular value.
pub fn op_norm_inf(m: &CMatrix) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// Sum of all singular values (trace norm for square inputs).
pub fn singular_value_sum(m: &CMatrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig(m: &CMatrix, eps_herm: f64) -> Result<f64> {
    let (values, _) = hermitian_eig(m, eps_herm)?;
    Ok(*values.last().expect("nonempty spectrum"))
}

/// Smallest eigenvalue with its eigenvector.
pub fn min_eig_vec(m: &CMatrix, eps_herm: f64) -> Result<(f64, CVector)> {
    let (values, vectors) = hermitian_eig(m, eps_herm)?;
    let last = values.len() - 1;
    Ok((values[last], vectors.column(last).into_owned()))
}

/// One uniform PSD rule: Hermitian and smallest eigenvalue >= -eps_psd.
pub fn is_psd(m: &CMatrix, tol: &ToleranceProfile) -> Result<bool> {
    Ok(min_eig(m, tol.eps_herm)? >= -tol.eps_psd)
}

/// Elementwise max-norm equality test.
pub fn mat_approx_eq(a: &CMatrix, b: &CMatrix, eps: f64) -> bool {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return false;
    }
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= eps)
}

// ---- seeded sampling helpers ----

/// Matrix of iid standard complex Gaussians.
pub fn random_complex_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Random PSD matrix G G* from a square Gaussian factor.
pub fn random_psd<R: Rng>(rng: &mut R, d: usize) -> CMatrix {
    let g = random_complex_matrix(rng, d, d);
    &g * g.adjoint()
}

/// Haar-ish random unitary: QR of a Gaussian with phase-fixed R diagonal.
pub fn random_unitary<R: Rng>(rng: &mut R, d: usize) -> CMatrix {
    let g = random_complex_matrix(rng, d, d);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            re(1.0)
        };
        let col = q.column(j) * phase;
        q.set_column(j, &col);
    }
    q
}

/// Random unit vector in C^d.
pub fn random_state_vector<R: Rng>(rng: &mut R, d: usize) -> CVector {
    let mut v = CVector::from_fn(d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let n = v.norm();
    if n > 0.0 {
        v /= re(n);
    } else {
        v[0] = re(1.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e11(d: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d, d);
        m[(0, 0)] = re(1.0);
        m
    }

    #[test]
    fn kron_identities() {
        assert_eq!(kron(&identity(2), &identity(3)), identity(6));
        assert_eq!(kron(&e11(2), &e11(2)), e11(4));
        let lhs = kron(&identity(2).scale(2.0), &identity(2).scale(3.0));
        assert!(mat_approx_eq(&lhs, &identity(4).scale(6.0), 1e-12));
    }

    #[test]
    fn omega_vector_matches_definition() {
        assert_eq!(omega_vector(1).as_slice(), &[re(1.0)]);
        assert_eq!(
            omega_vector(2).as_slice(),
            &[re(1.0), re(0.0), re(0.0), re(1.0)]
        );
        assert!((omega_vector(3).norm_squared() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn swap_operator_behaviour() {
        let d2 = swap_operator(2);
        let expect = from_rows(
            4,
            4,
            &[
                re(1.0),
                re(0.0),
                re(0.0),
                re(0.0),
                re(0.0),
                re(0.0),
                re(1.0),
                re(0.0),
                re(0.0),
                re(1.0),
                re(0.0),
                re(0.0),
                re(0.0),
                re(0.0),
                re(0.0),
                re(1.0),
            ],
        )
        .unwrap();
        assert_eq!(d2, expect);

        // Delta_3 (e1 (x) e2) = e2 (x) e1
        let mut e1e2 = CVector::zeros(9);
        e1e2[1] = re(1.0);
        let mut e2e1 = CVector::zeros(9);
        e2e1[3] = re(1.0);
        assert!((swap_operator(3) * e1e2 - e2e1).norm() < 1e-14);

        let (vals, _) = hermitian_eig(&swap_operator(3), 1e-10).unwrap();
        let plus = vals.iter().filter(|&&v| (v - 1.0).abs() < 1e-12).count();
        let minus = vals.iter().filter(|&&v| (v + 1.0).abs() < 1e-12).count();
        assert_eq!((plus, minus), (6, 3));
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_psd(&mut rng, 2);
        let mut b = random_psd(&mut rng, 3);
        b /= re(b.trace().re);
        let x = BipartiteOperator::new(kron(&a, &b), 2, 3).unwrap();
        assert!(mat_approx_eq(&partial_trace(&x, Side::Second), &a, 1e-12));

        let omega2 = BipartiteOperator::new(omega_projector(2), 2, 2).unwrap();
        assert!(mat_approx_eq(
            &partial_trace(&omega2, Side::First),
            &identity(2),
            1e-14
        ));

        let raw = random_psd(&mut rng, 6);
        let x = BipartiteOperator::new(raw.clone(), 2, 3).unwrap();
        let t2 = partial_trace(&x, Side::Second);
        assert!((t2.trace().re - raw.trace().re).abs() < 1e-10);
        let tol = ToleranceProfile::default();
        assert!(is_psd(&t2, &tol).unwrap());
        // elementwise summation oracle
        let mut oracle = CMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..3 {
                    oracle[(i, j)] += raw[(i * 3 + k, j * 3 + k)];
                }
            }
        }
        assert!(mat_approx_eq(&t2, &oracle, 1e-13));
    }

    #[test]
    fn partial_transpose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_complex_matrix(&mut rng, 2, 2);
        let b = random_complex_matrix(&mut rng, 3, 3);
        let x = BipartiteOperator::new(kron(&a, &b), 2, 3).unwrap();
        let pt = partial_transpose(&x, Side::Second);
        assert!(mat_approx_eq(&pt.mat, &kron(&a, &b.transpose()), 1e-12));

        for d in 2..=4 {
            let omega = BipartiteOperator::new(omega_projector(d), d, d).unwrap();
            let pt = partial_transpose(&omega, Side::Second);
            assert!(mat_approx_eq(&pt.mat, &swap_operator(d), 1e-14));
        }

        let raw = random_complex_matrix(&mut rng, 6, 6);
        let x = BipartiteOperator::new(raw.clone(), 3, 2).unwrap();
        for side in [Side::First, Side::Second] {
            let twice = partial_transpose(&partial_transpose(&x, side), side);
            assert!(mat_approx_eq(&twice.mat, &raw, 1e-13));
        }
    }

    #[test]
    fn realignment_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut a = random_psd(&mut rng, 2);
        a /= re(a.trace().re);
        let mut b = random_psd(&mut rng, 2);
        b /= re(b.trace().re);
        let x = BipartiteOperator::new(kron(&a, &b), 2, 2).unwrap();
        assert!(singular_value_sum(&realignment(&x)).unwrap() <= 1.0 + 1e-12);

        let omega2 = BipartiteOperator::new(omega_projector(2).scale(0.5), 2, 2).unwrap();
        assert!((singular_value_sum(&realignment(&omega2)).unwrap() - 2.0).abs() < 1e-12);

        let raw = random_complex_matrix(&mut rng, 6, 6);
        let x = BipartiteOperator::new(raw, 2, 3).unwrap();
        let back = realignment_inverse(&realignment(&x), 2, 3).unwrap();
        assert!(mat_approx_eq(&back.mat, &x.mat, 1e-14));
    }

    #[test]
    fn hermitian_eig_examples() {
        let (vals, _) = hermitian_eig(&identity(3), 1e-10).unwrap();
        assert!(vals.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let d = CMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                re([3.0, 1.0, 2.0][i])
            } else {
                re(0.0)
            }
        });
        let (vals, _) = hermitian_eig(&d, 1e-10).unwrap();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);

        let (vals, _) = hermitian_eig(&swap_operator(2), 1e-10).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12);
        assert!((vals[3] + 1.0).abs() < 1e-12);

        let bad = from_rows(2, 2, &[re(0.0), re(1.0), re(0.0), re(0.0)]).unwrap();
        assert!(matches!(
            hermitian_eig(&bad, 1e-10),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn jacobi_fallback_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for trial in 0..60 {
            let n = 2 + trial % 7;
            let h = if trial % 3 == 0 {
                let u = random_state_vector(&mut rng, n);
                identity(n) - (&u * u.adjoint()).scale(2.0)
            } else {
                let g = random_complex_matrix(&mut rng, n, n);
                &g + g.adjoint()
            };
            let (vals, vecs) = jacobi_eig(&h);
            let diag = CMatrix::from_fn(n, n, |i, j| if i == j { re(vals[i]) } else { re(0.0) });
            let resid = (&vecs * diag * vecs.adjoint() - &h).norm();
            assert!(resid <= 1e-12 * h.norm().max(1.0), "residual {resid:.3e}");
            let gram = vecs.adjoint() * &vecs;
            assert!(mat_approx_eq(&gram, &identity(n), 1e-12));
        }
    }

    #[test]
    fn svd_examples() {
        let parts = svd(&identity(4)).unwrap();
        assert!(parts.sigma.iter().all(|&s| (s - 1.0).abs() < 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_state_vector(&mut rng, 3).scale(2.0);
        let y = random_state_vector(&mut rng, 2).scale(1.5);
        let m = &x * y.adjoint();
        let parts = svd(&m).unwrap();
        assert!((parts.sigma[0] - 3.0).abs() < 1e-12);
        assert!(parts.sigma[1..].iter().all(|&s| s < 1e-12));

        // reconstruction gate on a random rectangular input
        let m = random_complex_matrix(&mut rng, 3, 2);
        svd(&m).unwrap();
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm_inf(&identity(5)).unwrap() - 1.0).abs() < 1e-12);
        let d = from_rows(2, 2, &[re(-5.0), re(0.0), re(0.0), re(2.0)]).unwrap();
        assert!((op_norm_inf(&d).unwrap() - 5.0).abs() < 1e-12);
        for d in 2..=4 {
            assert!((op_norm_inf(&swap_operator(d)).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_squares_to_identity_exactly() {
        for d in 1..=5 {
            let s = swap_operator(d);
            assert_eq!(&s * &s, identity(d * d));
        }
    }
}
