//! Phase-space linear algebra shared by the rest of the crate.
//!
//! Quadratures are interleaved per mode, `(q_1, p_1, q_2, p_2, ...)`, with the
//! commutator `[q, p] = 2i` so that the vacuum covariance is the identity.
//! Zero-dimensional objects are allowed everywhere and behave as empty
//! products (a Gaussian density over no variables evaluates to 1).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

const SYMMETRY_RTOL: f64 = 1e-12;
const PHYSICALITY_TOL: f64 = 1e-9;
const PD_FLOOR: f64 = 1e-12;

/// Quadrature vector over `M` modes, length `2M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceVector(DVector<f64>);

impl PhaseSpaceVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() % 2 != 0 {
            return invalid(format!("phase-space vector has odd length {}", entries.len()));
        }
        Ok(Self(DVector::from_vec(entries)))
    }

    pub fn zeros(modes: usize) -> Self {
        Self(DVector::zeros(2 * modes))
    }

    pub fn modes(&self) -> usize {
        self.0.len() / 2
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Real symmetric `2M x 2M` covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Validates shape and symmetry; physicality is checked separately with
    /// [`CovarianceMatrix::is_physical`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() % 2 != 0 {
            return invalid(format!(
                "covariance must be square with even dimension, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_RTOL * scale {
            return invalid(format!("covariance is not symmetric (max deviation {asym:.3e})"));
        }
        Ok(Self(m))
    }

    /// Vacuum covariance over `modes` modes.
    pub fn vacuum(modes: usize) -> Self {
        Self(DMatrix::identity(2 * modes, 2 * modes))
    }

    pub(crate) fn from_raw(m: DMatrix<f64>) -> Self {
        debug_assert!(m.is_square() && m.nrows() % 2 == 0);
        Self(m)
    }

    pub fn modes(&self) -> usize {
        self.0.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Smallest eigenvalue of the Hermitian matrix `sigma + i Omega`.
    ///
    /// Computed through the real symmetric embedding
    /// `[[sigma, -Omega], [Omega, sigma]]`, whose spectrum is that of the
    /// Hermitian matrix with every eigenvalue doubled in multiplicity.
    pub fn min_uncertainty_eigenvalue(&self) -> f64 {
        let d = self.0.nrows();
        if d == 0 {
            return f64::INFINITY;
        }
        let omega = symplectic_form_unchecked(self.modes());
        let mut emb = DMatrix::zeros(2 * d, 2 * d);
        emb.view_mut((0, 0), (d, d)).copy_from(&self.0);
        emb.view_mut((d, d), (d, d)).copy_from(&self.0);
        emb.view_mut((0, d), (d, d)).copy_from(&(-&omega));
        emb.view_mut((d, 0), (d, d)).copy_from(&omega);
        SymmetricEigen::new(emb).eigenvalues.min()
    }

    /// `sigma + i Omega >= 0` up to a tolerance of 1e-9.
    pub fn is_physical(&self) -> bool {
        self.min_uncertainty_eigenvalue() >= -PHYSICALITY_TOL
    }
}

/// `Omega = (+)_{k=1}^{M} [[0, 1], [-1, 0]]`.
pub fn symplectic_form(modes: usize) -> Result<DMatrix<f64>> {
    if modes == 0 {
        return invalid("symplectic form needs at least one mode");
    }
    Ok(symplectic_form_unchecked(modes))
}

pub(crate) fn symplectic_form_unchecked(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// One term `w * E[V, xbar](Lambda)` of a Gaussian characteristic function.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCharTerm {
    pub weight: f64,
    pub cov: CovarianceMatrix,
    pub center: PhaseSpaceVector,
}

impl GaussianCharTerm {
    pub fn new(weight: f64, cov: CovarianceMatrix, center: PhaseSpaceVector) -> Result<Self> {
        if cov.modes() != center.modes() {
            return invalid(format!(
                "covariance has {} modes but center has {}",
                cov.modes(),
                center.modes()
            ));
        }
        Ok(Self { weight, cov, center })
    }

    pub fn centered(weight: f64, cov: CovarianceMatrix) -> Self {
        let center = PhaseSpaceVector::zeros(cov.modes());
        Self { weight, cov, center }
    }
}

/// `w * exp[-1/2 L^T Omega V Omega^T L - i (Omega xbar)^T L]`.
pub fn char_eval(term: &GaussianCharTerm, lambda: &PhaseSpaceVector) -> Result<Complex64> {
    let modes = term.cov.modes();
    if lambda.modes() != modes {
        return invalid(format!(
            "argument has {} modes but the term has {modes}",
            lambda.modes()
        ));
    }
    if modes == 0 {
        return Ok(Complex64::new(term.weight, 0.0));
    }
    let omega = symplectic_form_unchecked(modes);
    let l = lambda.as_vector();
    let rotated = omega.transpose() * l;
    let quad = rotated.dot(&(term.cov.matrix() * &rotated));
    let phase = (&omega * term.center.as_vector()).dot(l);
    Ok(Complex64::new(-0.5 * quad, -phase).exp() * term.weight)
}

/// Signed sum of Gaussian characteristic-function terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMixtureChar {
    pub terms: Vec<GaussianCharTerm>,
}

impl GaussianMixtureChar {
    pub fn eval(&self, lambda: &PhaseSpaceVector) -> Result<Complex64> {
        self.terms
            .iter()
            .try_fold(Complex64::new(0.0, 0.0), |acc, t| Ok(acc + char_eval(t, lambda)?))
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }
}

fn condition_number(v: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(v.clone()).eigenvalues;
    let max = eig.amax();
    let min = eig.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Zero-mean normal density `G[V, 0](x)`.
///
/// This is the hot path of every correlator and outcome probability; it uses
/// a Cholesky factorization for both the determinant and the quadratic form.
pub fn centered_normal_pdf(v: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let d = v.nrows();
    if d != x.len() || !v.is_square() {
        return invalid(format!(
            "density dimension mismatch: {}x{} covariance, point of length {}",
            v.nrows(),
            v.ncols(),
            x.len()
        ));
    }
    if d == 0 {
        return Ok(1.0);
    }
    let chol = match v.clone().cholesky() {
        Some(c) => c,
        None => {
            return Err(Error::SingularMatrix {
                condition: condition_number(v),
            })
        }
    };
    let l = chol.l_dirty();
    let mut log_det_half = 0.0;
    let mut min_pivot = f64::INFINITY;
    for i in 0..d {
        let p = l[(i, i)];
        min_pivot = min_pivot.min(p * p);
        log_det_half += p.ln();
    }
    if min_pivot <= PD_FLOOR {
        return Err(Error::SingularMatrix {
            condition: condition_number(v),
        });
    }
    let y = chol.solve(x);
    let quad = x.dot(&y);
    Ok((-0.5 * quad - log_det_half - 0.5 * d as f64 * (2.0 * PI).ln()).exp())
}

/// `G[V, xbar](X) = [(2 pi)^D |V|]^{-1/2} exp[-1/2 (X - xbar)^T V^{-1} (X - xbar)]`.
pub fn normal_pdf(v: &CovarianceMatrix, mean: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    if mean.len() != x.len() {
        return invalid("mean and evaluation point differ in length");
    }
    centered_normal_pdf(v.matrix(), &(x - mean))
}

fn selected_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &keep)| keep)
        .flat_map(|(k, _)| [2 * k, 2 * k + 1])
        .collect()
}

/// Marginal covariance of the modes flagged in `mask`, both quadratures each,
/// in the original order.
pub fn submatrix(v: &CovarianceMatrix, mask: &[bool]) -> Result<CovarianceMatrix> {
    if mask.len() != v.modes() {
        return invalid(format!(
            "mask has length {} but covariance has {} modes",
            mask.len(),
            v.modes()
        ));
    }
    let idx = selected_indices(mask);
    Ok(CovarianceMatrix(v.matrix().select_rows(&idx).select_columns(&idx)))
}

/// Entries of a phase-space vector for the modes flagged in `mask`.
pub fn subvector(x: &PhaseSpaceVector, mask: &[bool]) -> Result<PhaseSpaceVector> {
    if mask.len() != x.modes() {
        return invalid(format!(
            "mask has length {} but vector has {} modes",
            mask.len(),
            x.modes()
        ));
    }
    let idx = selected_indices(mask);
    Ok(PhaseSpaceVector(x.as_vector().select_rows(&idx)))
}

/// Checks `S Omega S^T = Omega` entrywise to `tol`.
pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> bool {
    if !s.is_square() || s.nrows() % 2 != 0 || s.nrows() == 0 {
        return false;
    }
    let omega = symplectic_form_unchecked(s.nrows() / 2);
    (s * &omega * s.transpose() - omega).amax() <= tol
}
