//! Conditioning on the swap event: a click at the last swap detector and no
//! click at the others, with dark counts.
//!
//! The effective heralding operator is
//! `(1-p)^{N-1} prod_{s != s_N} |0><0|_s (I - (1-p)|0><0|)_{s_N}`, so the
//! conditional state of the party modes is a signed mixture of two Gaussians:
//! one from projecting the first `N-1` swap modes on vacuum (with `s_N`
//! traced out) and one from projecting all swap modes on vacuum.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::gauss::{CovarianceMatrix, GaussianCharTerm, GaussianMixtureChar};
use crate::network::{GaussianState, ModeLabel};

/// Block decomposition of the network covariance with rows/columns ordered
/// `(P, S-bar, s_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePartition {
    pub sigma_p: DMatrix<f64>,
    pub k_bar: DMatrix<f64>,
    pub k_last: DMatrix<f64>,
    pub sigma_bar: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub sigma_last: DMatrix<f64>,
}

impl CovariancePartition {
    pub fn parties(&self) -> usize {
        self.sigma_p.nrows() / 2
    }

    /// `K_S = (K_bar  K_last)`.
    pub fn k_all(&self) -> DMatrix<f64> {
        let (rows, nb) = (self.k_bar.nrows(), self.k_bar.ncols());
        let mut k = DMatrix::zeros(rows, nb + 2);
        k.view_mut((0, 0), (rows, nb)).copy_from(&self.k_bar);
        k.view_mut((0, nb), (rows, 2)).copy_from(&self.k_last);
        k
    }

    /// `sigma_S = [[sigma_bar, C], [C^T, sigma_last]]`.
    pub fn sigma_s(&self) -> DMatrix<f64> {
        let nb = self.sigma_bar.nrows();
        let mut s = DMatrix::zeros(nb + 2, nb + 2);
        s.view_mut((0, 0), (nb, nb)).copy_from(&self.sigma_bar);
        s.view_mut((0, nb), (nb, 2)).copy_from(&self.c);
        s.view_mut((nb, 0), (2, nb)).copy_from(&self.c.transpose());
        s.view_mut((nb, nb), (2, 2)).copy_from(&self.sigma_last);
        s
    }

    /// The full covariance in `(P, S-bar, s_N)` order.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let np = self.sigma_p.nrows();
        let ns = np;
        let mut m = DMatrix::zeros(np + ns, np + ns);
        let k = self.k_all();
        m.view_mut((0, 0), (np, np)).copy_from(&self.sigma_p);
        m.view_mut((0, np), (np, ns)).copy_from(&k);
        m.view_mut((np, 0), (ns, np)).copy_from(&k.transpose());
        m.view_mut((np, np), (ns, ns)).copy_from(&self.sigma_s());
        m
    }
}

fn quadrature_indices(modes: &[usize]) -> Vec<usize> {
    modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect()
}

pub fn partition(state: &GaussianState) -> Result<CovariancePartition> {
    let n = state.parties();
    if n < 2 || state.labels.len() != 2 * n {
        return invalid(format!(
            "expected N party and N swap modes, found {} party modes among {}",
            n,
            state.labels.len()
        ));
    }
    let find = |l: ModeLabel| {
        state
            .position(l)
            .ok_or_else(|| Error::InvalidArgument(format!("missing mode label {l:?}")))
    };
    let p_modes = (0..n)
        .map(|p| find(ModeLabel::Party(p)))
        .collect::<Result<Vec<_>>>()?;
    let s_modes = (0..n)
        .map(|s| find(ModeLabel::Swap(s)))
        .collect::<Result<Vec<_>>>()?;

    let pi = quadrature_indices(&p_modes);
    let bi = quadrature_indices(&s_modes[..n - 1]);
    let li = quadrature_indices(&s_modes[n - 1..]);
    let m = state.cov.matrix();
    let block = |r: &[usize], c: &[usize]| m.select_rows(r).select_columns(c);
    Ok(CovariancePartition {
        sigma_p: block(&pi, &pi),
        k_bar: block(&pi, &bi),
        k_last: block(&pi, &li),
        sigma_bar: block(&bi, &bi),
        c: block(&bi, &li),
        sigma_last: block(&li, &li),
    })
}

/// Conditional party state after a successful swap.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldedState {
    /// Normalized weight of the `S-bar` Gaussian (positive).
    pub weight_bar: f64,
    pub cov_bar: CovarianceMatrix,
    /// Normalized weight of the all-vacuum Gaussian (negative).
    pub weight_all: f64,
    pub cov_all: CovarianceMatrix,
    /// Probability of the heralding pattern.
    pub p_success: f64,
    pub p_dark: f64,
}

impl HeraldedState {
    pub fn parties(&self) -> usize {
        self.cov_bar.modes()
    }

    /// `(weight, covariance)` pairs of the mixture.
    pub fn components(&self) -> [(f64, &CovarianceMatrix); 2] {
        [(self.weight_bar, &self.cov_bar), (self.weight_all, &self.cov_all)]
    }

    pub fn to_mixture(&self) -> GaussianMixtureChar {
        GaussianMixtureChar {
            terms: vec![
                GaussianCharTerm::centered(self.weight_bar, self.cov_bar.clone()),
                GaussianCharTerm::centered(self.weight_all, self.cov_all.clone()),
            ],
        }
    }
}

/// Returns `(V, |gamma|^{-1/2})` for `V = sigma_P - K gamma^{-1} K^T`, `gamma = sigma + I`.
fn vacuum_projection(
    sigma_p: &DMatrix<f64>,
    k: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let d = sigma.nrows();
    let gamma = sigma + DMatrix::identity(d, d);
    let chol = gamma.clone().cholesky().ok_or(Error::SingularMatrix {
        condition: f64::INFINITY,
    })?;
    let l = chol.l_dirty();
    let mut log_det_half = 0.0;
    for i in 0..d {
        log_det_half += l[(i, i)].ln();
    }
    let schur = sigma_p - k * chol.solve(&k.transpose());
    let schur = (&schur + schur.transpose()) * 0.5;
    Ok((schur, (-log_det_half).exp()))
}

/// Conditions the network state on the swap event.
pub fn herald_swap(state: &GaussianState, p_dark: f64) -> Result<HeraldedState> {
    if !(0.0..1.0).contains(&p_dark) {
        return invalid(format!("dark-count probability must lie in [0, 1), got {p_dark}"));
    }
    let part = partition(state)?;
    let n = part.parties();
    let (v_bar, inv_sqrt_bar) = vacuum_projection(&part.sigma_p, &part.k_bar, &part.sigma_bar)?;
    let (v_all, inv_sqrt_all) = vacuum_projection(&part.sigma_p, &part.k_all(), &part.sigma_s())?;

    let q = 1.0 - p_dark;
    let u_bar = q.powi(n as i32 - 1) * 2f64.powi(n as i32 - 1) * inv_sqrt_bar;
    let u_all = -q.powi(n as i32) * 2f64.powi(n as i32) * inv_sqrt_all;
    let p_success = u_bar + u_all;
    if !(p_success > 0.0) {
        return Err(Error::HeraldImpossible { p_success });
    }
    Ok(HeraldedState {
        weight_bar: u_bar / p_success,
        cov_bar: CovarianceMatrix::from_raw(v_bar),
        weight_all: u_all / p_success,
        cov_all: CovarianceMatrix::from_raw(v_all),
        p_success,
        p_dark,
    })
}

pub fn herald_probability(state: &GaussianState, p_dark: f64) -> Result<f64> {
    Ok(herald_swap(state, p_dark)?.p_success)
}
