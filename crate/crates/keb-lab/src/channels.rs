//! Channel representations and the map calculus.
//!
//! A `ChannelRep` is a linear map M_{d1} -> M_{d2} carried as a Kraus list
//! (convention Ad_V(X) = V* X V with V of shape d1 x d2), a Choi matrix, or
//! a named parametric family. The Choi matrix is the canonical internal
//! form: it is computed on demand and cached, and every criterion downstream
//! is stated on it.

use std::sync::OnceLock;

use crate::core_linalg::{
    identity, kron, matrix_unit, re, BipartiteOperator, CMatrix, Side, ToleranceProfile,
};
use crate::{core_linalg, Error, Result};

/// Named parametric families from the k-EB literature.
#[derive(Debug, Clone)]
pub enum Family {
    /// W_lambda(X) = tr(X) I - lambda X^T on M_d.
    WernerHolevo { lambda: f64, d: usize },
    /// Phi_lambda(X) = tr(X) I + lambda (X + X^T) on M_d.
    PhiLambda { lambda: f64, d: usize },
    /// W_{lambda,Gamma}(X) = tr(X) I + lambda Gamma(X) for a positive map Gamma.
    WernerModified {
        lambda: f64,
        gamma: Box<ChannelRep>,
    },
    /// Schur multiplier S_A(X) = A hadamard X.
    Schur { a: CMatrix },
    /// Ad_V(X) = V* X V with V of shape d1 x d2.
    AdV { v: CMatrix },
    Identity { d: usize },
    Transpose { d: usize },
    /// X -> tr(X) I_d.
    TraceMap { d: usize },
    /// X -> diag(Phi_1(X), Phi_2(X)); both summands share dimIn.
    DirectSum {
        first: Box<ChannelRep>,
        second: Box<ChannelRep>,
    },
}

#[derive(Debug, Clone)]
pub enum ChannelBody {
    Kraus(Vec<CMatrix>),
    Choi(BipartiteOperator),
    Family(Family),
}

/// A linear map M_{d1} -> M_{d2} with a lazily cached Choi matrix.
#[derive(Debug, Clone)]
pub struct ChannelRep {
    pub dim_in: usize,
    pub dim_out: usize,
    pub body: ChannelBody,
    choi_cache: OnceLock<BipartiteOperator>,
}

impl ChannelRep {
    pub fn from_kraus(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidInput("empty Kraus list".into()))?;
        let (d1, d2) = (first.nrows(), first.ncols());
        if kraus.iter().any(|v| v.nrows() != d1 || v.ncols() != d2) {
            return Err(Error::DimensionMismatch(
                "all Kraus operators must share one shape".into(),
            ));
        }
        Ok(Self {
            dim_in: d1,
            dim_out: d2,
            body: ChannelBody::Kraus(kraus),
            choi_cache: OnceLock::new(),
        })
    }

    pub fn from_choi(choi: BipartiteOperator) -> Self {
        Self {
            dim_in: choi.dim_a,
            dim_out: choi.dim_b,
            body: ChannelBody::Choi(choi),
            choi_cache: OnceLock::new(),
        }
    }

    /// Apply the map to a dimIn x dimIn matrix.
    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        if x.nrows() != self.dim_in || x.ncols() != self.dim_in {
            return Err(Error::DimensionMismatch(format!(
                "apply expects {0}x{0}, got {1}x{2}",
                self.dim_in,
                x.nrows(),
                x.ncols()
            )));
        }
        match &self.body {
            ChannelBody::Kraus(vs) => {
                let mut out = CMatrix::zeros(self.dim_out, self.dim_out);
                for v in vs {
                    out += v.adjoint() * x * v;
                }
                Ok(out)
            }
            ChannelBody::Choi(c) => {
                let mut out = CMatrix::zeros(self.dim_out, self.dim_out);
                for i in 0..self.dim_in {
                    for j in 0..self.dim_in {
                        out += c.block(i, j).scale_cx(x[(i, j)]);
                    }
                }
                Ok(out)
            }
            ChannelBody::Family(f) => apply_family(f, x),
        }
    }

    /// The Choi matrix sum_ij E_ij (x) Phi(E_ij), cached after first use.
    pub fn choi(&self) -> &BipartiteOperator {
        self.choi_cache.get_or_init(|| {
            if let ChannelBody::Choi(c) = &self.body {
                return c.clone();
            }
            let (d1, d2) = (self.dim_in, self.dim_out);
            let mut m = CMatrix::zeros(d1 * d2, d1 * d2);
            for i in 0..d1 {
                for j in 0..d1 {
                    let block = self
                        .apply(&matrix_unit(d1, d1, i, j))
                        .expect("matrix unit has the declared input shape");
                    m.view_mut((i * d2, j * d2), (d2, d2)).copy_from(&block);
                }
            }
            BipartiteOperator::new(m, d1, d2).expect("square by construction")
        })
    }
}

trait ScaleCx {
    fn scale_cx(&self, s: num_complex::Complex64) -> CMatrix;
}

impl ScaleCx for CMatrix {
    fn scale_cx(&self, s: num_complex::Complex64) -> CMatrix {
        self.map(|x| x * s)
    }
}

fn apply_family(f: &Family, x: &CMatrix) -> Result<CMatrix> {
    Ok(match f {
        Family::WernerHolevo { lambda, d } => {
            identity(*d).scale_cx(x.trace()) - x.transpose().scale(*lambda)
        }
        Family::PhiLambda { lambda, d } => {
            identity(*d).scale_cx(x.trace()) + (x + x.transpose()).scale(*lambda)
        }
        Family::WernerModified { lambda, gamma } => {
            identity(gamma.dim_out).scale_cx(x.trace()) + gamma.apply(x)?.scale(*lambda)
        }
        Family::Schur { a } => CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * x[(i, j)]),
        Family::AdV { v } => v.adjoint() * x * v,
        Family::Identity { .. } => x.clone(),
        Family::Transpose { .. } => x.transpose(),
        Family::TraceMap { d } => identity(*d).scale_cx(x.trace()),
        Family::DirectSum { first, second } => {
            let a = first.apply(x)?;
            let b = second.apply(x)?;
            let n = a.nrows() + b.nrows();
            let mut out = CMatrix::zeros(n, n);
            out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(&a);
            out.view_mut((a.nrows(), a.ncols()), (b.nrows(), b.ncols()))
                .copy_from(&b);
            out
        }
    })
}

/// Validate family parameters and wrap them in a ChannelRep.
pub fn family_make(f: Family) -> Result<ChannelRep> {
    let (dim_in, dim_out) = match &f {
        Family::WernerHolevo { d, .. }
        | Family::PhiLambda { d, .. }
        | Family::Identity { d }
        | Family::Transpose { d }
        | Family::TraceMap { d } => {
            if *d == 0 {
                return Err(Error::InvalidInput("dimension must be positive".into()));
            }
            (*d, *d)
        }
        Family::WernerModified { gamma, .. } => {
            if gamma.dim_in != gamma.dim_out {
                return Err(Error::InvalidInput(
                    "WernerModified needs a square-domain Gamma".into(),
                ));
            }
            (gamma.dim_in, gamma.dim_out)
        }
        Family::Schur { a } => {
            if a.nrows() != a.ncols() {
                return Err(Error::InvalidInput("Schur multiplier must be square".into()));
            }
            (a.nrows(), a.ncols())
        }
        Family::AdV { v } => {
            if v.nrows() == 0 || v.ncols() == 0 {
                return Err(Error::InvalidInput("AdV needs a nonempty V".into()));
            }
            (v.nrows(), v.ncols())
        }
        Family::DirectSum { first, second } => {
            if first.dim_in != second.dim_in {
                return Err(Error::DimensionMismatch(
                    "DirectSum summands must share dimIn".into(),
                ));
            }
            (first.dim_in, first.dim_out + second.dim_out)
        }
    };
    Ok(ChannelRep {
        dim_in,
        dim_out,
        body: ChannelBody::Family(f),
        choi_cache: OnceLock::new(),
    })
}

/// Shorthand for the Choi matrix of a map.
pub fn choi_of(phi: &ChannelRep) -> BipartiteOperator {
    phi.choi().clone()
}

/// Kraus operators of a PSD Choi matrix: for each eigenpair (mu, w) with
/// mu > 0, V = conj(unvec(sqrt(mu) w)) reshaped row-major to d1 x d2.
pub fn kraus_from_choi(c: &BipartiteOperator, tol: &ToleranceProfile) -> Result<Vec<CMatrix>> {
    let (values, vectors) = core_linalg::hermitian_eig(&c.mat, tol.eps_herm)?;
    if values.last().copied().unwrap_or(0.0) < -tol.eps_psd {
        return Err(Error::InvalidInput(format!(
            "Choi matrix is not PSD (min eigenvalue {:.3e}); no Kraus form",
            values.last().unwrap()
        )));
    }
    let (d1, d2) = (c.dim_a, c.dim_b);
    let mut kraus = Vec::new();
    for (idx, &mu) in values.iter().enumerate() {
        if mu <= tol.eps_psd {
            continue;
        }
        let w = vectors.column(idx);
        let scale = mu.sqrt();
        let v = CMatrix::from_fn(d1, d2, |i, j| (w[i * d2 + j] * re(scale)).conj());
        kraus.push(v);
    }
    if kraus.is_empty() {
        kraus.push(CMatrix::zeros(d1, d2));
    }
    Ok(kraus)
}

/// Invert the Choi-Jamiolkowski isomorphism. PSD inputs come back with a
/// Kraus body (so Kraus ranks are available), everything else stays in
/// Choi form.
pub fn map_of_choi(c: &BipartiteOperator, tol: &ToleranceProfile) -> Result<ChannelRep> {
    match kraus_from_choi(c, tol) {
        Ok(kraus) => {
            let mut rep = ChannelRep::from_kraus(kraus)?;
            rep.dim_in = c.dim_a;
            rep.dim_out = c.dim_b;
            Ok(rep)
        }
        Err(Error::InvalidInput(_)) => Ok(ChannelRep::from_choi(c.clone())),
        Err(e) => Err(e),
    }
}

/// Composition Phi o Psi through C_{Phi o Psi} = (id (x) Phi)(C_Psi).
pub fn compose(phi: &ChannelRep, psi: &ChannelRep) -> Result<ChannelRep> {
    if psi.dim_out != phi.dim_in {
        return Err(Error::DimensionMismatch(format!(
            "compose: inner dims {} vs {}",
            psi.dim_out, phi.dim_in
        )));
    }
    let c_psi = psi.choi();
    let (d_in, d_out) = (psi.dim_in, phi.dim_out);
    let mut m = CMatrix::zeros(d_in * d_out, d_in * d_out);
    for i in 0..d_in {
        for j in 0..d_in {
            let block = phi.apply(&c_psi.block(i, j))?;
            m.view_mut((i * d_out, j * d_out), (d_out, d_out))
                .copy_from(&block);
        }
    }
    Ok(ChannelRep::from_choi(BipartiteOperator::new(
        m, d_in, d_out,
    )?))
}

/// id_k (x) Phi (side = First) or Phi (x) id_k (side = Second).
pub fn tensor_with_identity(phi: &ChannelRep, k: usize, side: Side) -> Result<ChannelRep> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    let (d1, d2) = (phi.dim_in, phi.dim_out);
    let blocks: Vec<Vec<CMatrix>> = (0..d1)
        .map(|i| {
            (0..d1)
                .map(|j| phi.choi().block(i, j))
                .collect::<Vec<_>>()
        })
        .collect();
    let (din, dout) = (k * d1, k * d2);
    let mut m = CMatrix::zeros(din * dout, din * dout);
    // C = sum over matrix units E_IJ of E_IJ (x) (extended map)(E_IJ)
    for a in 0..k {
        for b in 0..k {
            for i in 0..d1 {
                for j in 0..d1 {
                    let image = match side {
                        Side::First => kron(&matrix_unit(k, k, a, b), &blocks[i][j]),
                        Side::Second => kron(&blocks[i][j], &matrix_unit(k, k, a, b)),
                    };
                    let (row, col) = match side {
                        Side::First => (a * d1 + i, b * d1 + j),
                        Side::Second => (i * k + a, j * k + b),
                    };
                    m.view_mut((row * dout, col * dout), (dout, dout))
                        .copy_from(&image);
                }
            }
        }
    }
    Ok(ChannelRep::from_choi(BipartiteOperator::new(
        m, din, dout,
    )?))
}

/// Hilbert-Schmidt adjoint: tr(Phi(X)* Y) = tr(X* Phi*(Y)).
///
/// Kraus bodies swap Ad_V for Ad_{V*}; everything else goes through the
/// Choi identity C_{Phi*}[(k,i),(l,j)] = conj(C_Phi[(i,k),(j,l)]).
pub fn adjoint(phi: &ChannelRep) -> Result<ChannelRep> {
    if let ChannelBody::Kraus(vs) = &phi.body {
        let mut rep = ChannelRep::from_kraus(vs.iter().map(|v| v.adjoint()).collect())?;
        rep.dim_in = phi.dim_out;
        rep.dim_out = phi.dim_in;
        return Ok(rep);
    }
    let c = phi.choi();
    let (d1, d2) = (phi.dim_in, phi.dim_out);
    let mut m = CMatrix::zeros(d2 * d1, d2 * d1);
    for k in 0..d2 {
        for i in 0..d1 {
            for l in 0..d2 {
                for j in 0..d1 {
                    m[(k * d1 + i, l * d1 + j)] = c.mat[(i * d2 + k, j * d2 + l)].conj();
                }
            }
        }
    }
    Ok(ChannelRep::from_choi(BipartiteOperator::new(m, d2, d1)?))
}

/// T o Phi o T, realized as the global transpose of the Choi matrix.
pub fn transpose_conjugate(phi: &ChannelRep) -> Result<ChannelRep> {
    let c = phi.choi();
    Ok(ChannelRep::from_choi(BipartiteOperator::new(
        c.mat.transpose(),
        phi.dim_in,
        phi.dim_out,
    )?))
}
