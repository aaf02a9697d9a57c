//! Pre-measurement state of the swapping network: `N` two-mode squeezers,
//! channel losses and the `N`-port interferometer on the S modes.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::gauss::{is_symplectic, CovarianceMatrix};
use crate::measurement::MeasurementPlan;

pub const MAX_PARTIES: usize = 8;

/// Which arm of a two-mode squeezer a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeLabel {
    /// Mode sent to party `p` (zero-based).
    Party(usize),
    /// Mode sent to the swapping interferometer, input/output port `s`.
    Swap(usize),
}

/// Zero-mean Gaussian state with labelled modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub cov: CovarianceMatrix,
    pub labels: Vec<ModeLabel>,
}

impl GaussianState {
    pub fn new(cov: CovarianceMatrix, labels: Vec<ModeLabel>) -> Result<Self> {
        if cov.modes() != labels.len() {
            return invalid(format!(
                "{} labels for a {}-mode covariance",
                labels.len(),
                cov.modes()
            ));
        }
        Ok(Self { cov, labels })
    }

    pub fn parties(&self) -> usize {
        self.labels
            .iter()
            .filter(|l| matches!(l, ModeLabel::Party(_)))
            .count()
    }

    pub fn position(&self, label: ModeLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Mode indices of the swap arms, ordered by port.
    pub fn swap_modes(&self) -> Vec<usize> {
        let n = self.labels.len() - self.parties();
        (0..n).filter_map(|s| self.position(ModeLabel::Swap(s))).collect()
    }
}

/// `N` identical two-mode squeezers with per-party phases.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezerBank {
    pub r: f64,
    pub phases: Vec<f64>,
}

impl SqueezerBank {
    pub fn new(r: f64, phases: Vec<f64>) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return invalid(format!("squeezing parameter must be finite and >= 0, got {r}"));
        }
        let n = phases.len();
        if !(2..=MAX_PARTIES).contains(&n) {
            return invalid(format!("party count must lie in 2..={MAX_PARTIES}, got {n}"));
        }
        Ok(Self { r, phases })
    }

    /// All squeezer phases zero.
    pub fn in_phase(r: f64, parties: usize) -> Result<Self> {
        Self::new(r, vec![0.0; parties])
    }

    pub fn parties(&self) -> usize {
        self.phases.len()
    }

    /// `(v, a) = (cosh 2r, sinh 2r)`.
    pub fn moments(&self) -> (f64, f64) {
        ((2.0 * self.r).cosh(), (2.0 * self.r).sinh())
    }
}

/// Channel transmissions and detector efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub eta_p: f64,
    pub eta_s: f64,
    pub eta_d: f64,
}

impl ChannelConfig {
    pub fn lossless() -> Self {
        Self {
            eta_p: 1.0,
            eta_s: 1.0,
            eta_d: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, eta) in [("eta_p", self.eta_p), ("eta_s", self.eta_s)] {
            if !(0.0..=1.0).contains(&eta) {
                return invalid(format!("{name} must lie in [0, 1], got {eta}"));
            }
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return invalid(format!("eta_d must lie in (0, 1], got {}", self.eta_d));
        }
        Ok(())
    }
}

/// Covariance of the `2N` modes right after the squeezers.
///
/// Modes are ordered `p_1..p_N, s_1..s_N`; the `p_n`/`s_n` cross block is
/// `a [[cos phi, -sin phi], [-sin phi, -cos phi]]`.
pub fn build_tmsv_network(bank: &SqueezerBank) -> Result<GaussianState> {
    let n = bank.parties();
    if n < 2 {
        return invalid("network needs at least two parties");
    }
    let (v, a) = bank.moments();
    let mut cov = DMatrix::identity(4 * n, 4 * n) * v;
    for (p, &phi) in bank.phases.iter().enumerate() {
        let (s, c) = phi.sin_cos();
        let block = [[a * c, -a * s], [-a * s, -a * c]];
        let (i, j) = (2 * p, 2 * n + 2 * p);
        for (di, row) in block.iter().enumerate() {
            for (dj, &x) in row.iter().enumerate() {
                cov[(i + di, j + dj)] = x;
                cov[(j + dj, i + di)] = x;
            }
        }
    }
    let labels = (0..n)
        .map(ModeLabel::Party)
        .chain((0..n).map(ModeLabel::Swap))
        .collect();
    GaussianState::new(CovarianceMatrix::from_raw(cov), labels)
}

/// Mode-transformation matrix of the interferometer,
/// `U_{jk} = N^{-1/2} exp(2 pi i j k / N)` for rows `j = 1..N`, columns `k = 0..N-1`.
pub fn interferometer_unitary(parties: usize) -> Result<DMatrix<Complex64>> {
    if parties < 2 {
        return invalid("interferometer needs at least two ports");
    }
    let n = parties as f64;
    Ok(DMatrix::from_fn(parties, parties, |row, k| {
        let j = (row + 1) as f64;
        Complex64::from_polar(1.0 / n.sqrt(), 2.0 * PI * j * k as f64 / n)
    }))
}

/// Real embedding of a passive mode transformation `a -> U a` in the
/// interleaved quadrature ordering: `alpha + i beta -> [[alpha, -beta], [beta, alpha]]`.
pub fn passive_symplectic(u: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = u.nrows();
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            let z = u[(j, k)];
            s[(2 * j, 2 * k)] = z.re;
            s[(2 * j, 2 * k + 1)] = -z.im;
            s[(2 * j + 1, 2 * k)] = z.im;
            s[(2 * j + 1, 2 * k + 1)] = z.re;
        }
    }
    s
}

pub fn interferometer_symplectic(parties: usize) -> Result<DMatrix<f64>> {
    Ok(passive_symplectic(&interferometer_unitary(parties)?))
}

/// `sigma -> S~ sigma S~^T`, with `S` acting on `modes` (in the given order)
/// and the identity elsewhere.
pub fn apply_symplectic(
    state: &GaussianState,
    s: &DMatrix<f64>,
    modes: &[usize],
) -> Result<GaussianState> {
    if s.nrows() != 2 * modes.len() || !s.is_square() {
        return invalid(format!(
            "{}x{} symplectic for {} modes",
            s.nrows(),
            s.ncols(),
            modes.len()
        ));
    }
    if !is_symplectic(s, 1e-9) {
        return invalid("transformation is not symplectic");
    }
    let total = state.cov.modes();
    if modes.iter().any(|&m| m >= total) {
        return invalid("mode index out of range");
    }
    let mut full = DMatrix::identity(2 * total, 2 * total);
    for (a, &ma) in modes.iter().enumerate() {
        for (b, &mb) in modes.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    full[(2 * ma + i, 2 * mb + j)] = s[(2 * a + i, 2 * b + j)];
                }
            }
        }
    }
    let cov = &full * state.cov.matrix() * full.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianState::new(CovarianceMatrix::from_raw(cov), state.labels.clone())
}

/// Pure-loss channel on selected modes: `sigma -> G^{1/2} sigma G^{1/2} + (I - G)`
/// with `G = diag(eta_k, eta_k)` per mode.
pub fn apply_mode_loss(state: &GaussianState, transmissions: &[f64]) -> Result<GaussianState> {
    if transmissions.len() != state.cov.modes() {
        return invalid("one transmission per mode required");
    }
    if transmissions.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return invalid("transmissions must lie in [0, 1]");
    }
    let d = 2 * transmissions.len();
    let sqrt_g: Vec<f64> = transmissions.iter().flat_map(|t| [t.sqrt(); 2]).collect();
    let mut cov = state.cov.matrix().clone();
    for i in 0..d {
        for j in 0..d {
            cov[(i, j)] *= sqrt_g[i] * sqrt_g[j];
        }
        cov[(i, i)] += 1.0 - sqrt_g[i] * sqrt_g[i];
    }
    GaussianState::new(CovarianceMatrix::from_raw(cov), state.labels.clone())
}

/// Channel loss with `eta_p` on every party mode and `eta_s` on every swap mode.
/// Detector efficiency is not applied here; see [`fold_detector_efficiency`].
pub fn apply_loss(state: &GaussianState, cfg: &ChannelConfig) -> Result<GaussianState> {
    cfg.validate()?;
    let t: Vec<f64> = state
        .labels
        .iter()
        .map(|l| match l {
            ModeLabel::Party(_) => cfg.eta_p,
            ModeLabel::Swap(_) => cfg.eta_s,
        })
        .collect();
    apply_mode_loss(state, &t)
}

/// Moves detector inefficiency into the channels: both `eta_p` and `eta_s`
/// are multiplied by `eta_d`, and every displacement is scaled by
/// `sqrt(eta_d)` so the party-side loss can sit ahead of the displacement.
/// The returned config has `eta_d = 1`.
pub fn fold_detector_efficiency(
    cfg: &ChannelConfig,
    plan: &MeasurementPlan,
) -> Result<(ChannelConfig, MeasurementPlan)> {
    cfg.validate()?;
    let eta_d = cfg.eta_d;
    let folded_cfg = ChannelConfig {
        eta_p: cfg.eta_p * eta_d,
        eta_s: cfg.eta_s * eta_d,
        eta_d: 1.0,
    };
    Ok((folded_cfg, plan.scaled(eta_d.sqrt())))
}

/// State entering the swap detectors: squeezers, channel loss, interferometer.
pub fn prepare_network(bank: &SqueezerBank, cfg: &ChannelConfig) -> Result<GaussianState> {
    let state = build_tmsv_network(bank)?;
    let state = apply_loss(&state, cfg)?;
    let swap = state.swap_modes();
    apply_symplectic(&state, &interferometer_symplectic(bank.parties())?, &swap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::symplectic_form;
    use approx::assert_relative_eq;

    fn swap_block(state: &GaussianState) -> DMatrix<f64> {
        let n = state.parties();
        state.cov.matrix().view((2 * n, 2 * n), (2 * n, 2 * n)).into_owned()
    }

    #[test]
    fn vacuum_at_zero_squeezing() {
        let st = build_tmsv_network(&SqueezerBank::new(0.0, vec![0.3, 1.1, -0.4]).unwrap()).unwrap();
        assert_eq!(*st.cov.matrix(), DMatrix::identity(12, 12));
    }

    #[test]
    fn tmsv_blocks() {
        let st = build_tmsv_network(&SqueezerBank::in_phase(0.1, 2).unwrap()).unwrap();
        let m = st.cov.matrix();
        let v = 0.2f64.cosh();
        let a = 0.2f64.sinh();
        assert_relative_eq!(v, 1.020066755619076, epsilon = 1e-15);
        assert_relative_eq!(a, 0.201336002541094, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 0)], v);
        assert_relative_eq!(m[(0, 4)], a);
        assert_relative_eq!(m[(1, 5)], -a);
        assert_relative_eq!(m[(2, 6)], a);
        assert_eq!(m[(0, 6)], 0.0);
        assert_eq!(m[(0, 2)], 0.0);
        let (v2, a2) = SqueezerBank::in_phase(0.37, 2).unwrap().moments();
        assert_relative_eq!(v2 * v2 - a2 * a2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tmsv_is_physical() {
        for r in [0.0, 0.2, 1.0] {
            let st = build_tmsv_network(&SqueezerBank::new(r, vec![0.0, 0.7, 2.0]).unwrap()).unwrap();
            assert!(st.cov.is_physical(), "r = {r}");
        }
    }

    #[test]
    fn negative_squeezing_rejected() {
        assert!(SqueezerBank::new(-0.1, vec![0.0; 2]).is_err());
        assert!(SqueezerBank::new(0.1, vec![0.0; 1]).is_err());
        assert!(SqueezerBank::new(0.1, vec![0.0; 9]).is_err());
    }

    #[test]
    fn interferometer_two_ports() {
        let u = interferometer_unitary(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [[h, -h], [h, h]];
        for j in 0..2 {
            for k in 0..2 {
                assert_relative_eq!(u[(j, k)].re, expect[j][k], epsilon = 1e-15);
                assert!(u[(j, k)].im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn interferometer_three_ports_first_column() {
        let u = interferometer_unitary(3).unwrap();
        for j in 0..3 {
            assert_relative_eq!(u[(j, 0)].re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
            assert!(u[(j, 0)].im.abs() < 1e-15);
        }
        for k in 0..3 {
            assert_relative_eq!(u[(2, k)].re, 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn interferometer_is_symplectic_orthogonal() {
        for n in 2..=MAX_PARTIES {
            let s = interferometer_symplectic(n).unwrap();
            let omega = symplectic_form(n).unwrap();
            assert!((&s * &omega * s.transpose() - &omega).amax() < 1e-10, "n = {n}");
            assert!((&s * s.transpose() - DMatrix::identity(2 * n, 2 * n)).amax() < 1e-10);
        }
    }

    #[test]
    fn identity_and_vacuum_invariance() {
        let st = build_tmsv_network(&SqueezerBank::in_phase(0.3, 2).unwrap()).unwrap();
        let same = apply_symplectic(&st, &DMatrix::identity(4, 4), &[2, 3]).unwrap();
        assert_relative_eq!(*same.cov.matrix(), *st.cov.matrix(), epsilon = 1e-15);

        let vac = build_tmsv_network(&SqueezerBank::in_phase(0.0, 2).unwrap()).unwrap();
        let out = apply_symplectic(&vac, &interferometer_symplectic(2).unwrap(), &[2, 3]).unwrap();
        assert_relative_eq!(*out.cov.matrix(), DMatrix::identity(8, 8), epsilon = 1e-15);
    }

    #[test]
    fn non_symplectic_rejected() {
        let st = build_tmsv_network(&SqueezerBank::in_phase(0.3, 2).unwrap()).unwrap();
        let bad = DMatrix::identity(4, 4) * 2.0;
        assert!(apply_symplectic(&st, &bad, &[2, 3]).is_err());
    }

    #[test]
    fn interferometer_preserves_photon_number_proxy() {
        for n in 2..=6 {
            let st = build_tmsv_network(&SqueezerBank::new(0.4, (0..n).map(|k| 0.3 * k as f64).collect()).unwrap())
                .unwrap();
            let before = swap_block(&st).trace();
            let out = apply_symplectic(&st, &interferometer_symplectic(n).unwrap(), &st.swap_modes()).unwrap();
            let after = swap_block(&out).trace();
            assert!(((after - before) / 4.0).abs() < 1e-10);
            assert!(out.cov.is_physical());
        }
    }

    #[test]
    fn loss_map_examples() {
        let st = build_tmsv_network(&SqueezerBank::in_phase(0.2, 2).unwrap()).unwrap();
        let same = apply_loss(&st, &ChannelConfig::lossless()).unwrap();
        assert_relative_eq!(*same.cov.matrix(), *st.cov.matrix(), epsilon = 1e-15);

        let vac = build_tmsv_network(&SqueezerBank::in_phase(0.0, 2).unwrap()).unwrap();
        let cfg = ChannelConfig { eta_p: 0.3, eta_s: 0.6, eta_d: 1.0 };
        let out = apply_loss(&vac, &cfg).unwrap();
        assert_relative_eq!(*out.cov.matrix(), DMatrix::identity(8, 8), epsilon = 1e-15);

        let cfg = ChannelConfig { eta_p: 0.9, eta_s: 0.2, eta_d: 1.0 };
        let out = apply_loss(&st, &cfg).unwrap();
        let (v, a) = (0.4f64.cosh(), 0.4f64.sinh());
        let m = out.cov.matrix();
        assert_relative_eq!(m[(0, 0)], 0.9 * v + 0.1, epsilon = 1e-14);
        assert_relative_eq!(m[(4, 4)], 0.2 * v + 0.8, epsilon = 1e-14);
        assert_relative_eq!(m[(0, 4)], (0.9f64 * 0.2).sqrt() * a, epsilon = 1e-14);
        assert_relative_eq!(m[(1, 5)], -(0.9f64 * 0.2).sqrt() * a, epsilon = 1e-14);
        assert!(out.cov.is_physical());
    }

    #[test]
    fn loss_is_a_semigroup() {
        let st = build_tmsv_network(&SqueezerBank::new(0.5, vec![0.0, 0.4, 1.3]).unwrap()).unwrap();
        let c1 = ChannelConfig { eta_p: 0.7, eta_s: 0.5, eta_d: 1.0 };
        let c2 = ChannelConfig { eta_p: 0.8, eta_s: 0.3, eta_d: 1.0 };
        let c12 = ChannelConfig { eta_p: 0.56, eta_s: 0.15, eta_d: 1.0 };
        let twice = apply_loss(&apply_loss(&st, &c1).unwrap(), &c2).unwrap();
        let once = apply_loss(&st, &c12).unwrap();
        assert!((twice.cov.matrix() - once.cov.matrix()).amax() < 1e-12);
    }

    #[test]
    fn equal_loss_commutes_with_interferometer() {
        let bank = SqueezerBank::new(0.3, vec![0.0, 0.5, 1.0, 1.5]).unwrap();
        let st = build_tmsv_network(&bank).unwrap();
        let cfg = ChannelConfig { eta_p: 0.9, eta_s: 0.35, eta_d: 1.0 };
        let s = interferometer_symplectic(4).unwrap();
        let swap = st.swap_modes();
        let a = apply_symplectic(&apply_loss(&st, &cfg).unwrap(), &s, &swap).unwrap();
        let b = apply_loss(&apply_symplectic(&st, &s, &swap).unwrap(), &cfg).unwrap();
        assert!((a.cov.matrix() - b.cov.matrix()).amax() < 1e-12);
    }

    #[test]
    fn party_permutation_permutes_blocks() {
        let phases = vec![0.0, 0.8, -0.5];
        let st = build_tmsv_network(&SqueezerBank::new(0.3, phases.clone()).unwrap()).unwrap();
        let perm = [2usize, 0, 1];
        let permuted: Vec<f64> = perm.iter().map(|&p| phases[p]).collect();
        let sp = build_tmsv_network(&SqueezerBank::new(0.3, permuted).unwrap()).unwrap();
        // mode k of the permuted network is mode perm[k] (within each arm) of the original
        let n = 3;
        let map = |m: usize| if m < n { perm[m] } else { n + perm[m - n] };
        for i in 0..2 * n {
            for j in 0..2 * n {
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(
                            sp.cov.matrix()[(2 * i + a, 2 * j + b)],
                            st.cov.matrix()[(2 * map(i) + a, 2 * map(j) + b)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn prepared_network_is_physical() {
        let cfg = ChannelConfig { eta_p: 0.9, eta_s: 0.2, eta_d: 1.0 };
        for n in 2..=6 {
            let st = prepare_network(&SqueezerBank::in_phase(0.15, n).unwrap(), &cfg).unwrap();
            assert!(st.cov.is_physical());
        }
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelConfig { eta_p: 1.1, eta_s: 0.2, eta_d: 1.0 }.validate().is_err());
        assert!(ChannelConfig { eta_p: 0.9, eta_s: 0.2, eta_d: 0.0 }.validate().is_err());
        assert!(ChannelConfig { eta_p: 0.0, eta_s: 0.0, eta_d: 0.5 }.validate().is_ok());
    }

    #[test]
    fn folding_moves_detector_loss_into_channels() {
        let plan = crate::measurement::settings_from_reference(0.5, -0.2, &[0.0, 0.3]).unwrap();
        let cfg = ChannelConfig { eta_p: 0.9, eta_s: 0.2, eta_d: 0.81 };
        let (folded, scaled) = fold_detector_efficiency(&cfg, &plan).unwrap();
        assert_relative_eq!(folded.eta_s, 0.2 * 0.81, epsilon = 1e-15);
        assert_relative_eq!(folded.eta_p, 0.9 * 0.81, epsilon = 1e-15);
        assert_eq!(folded.eta_d, 1.0);
        assert_relative_eq!(scaled.displacement(1, 0).magnitude(), 0.45, epsilon = 1e-15);
        let (same, unscaled) = fold_detector_efficiency(&ChannelConfig { eta_d: 1.0, ..cfg }, &plan).unwrap();
        assert_eq!((same.eta_p, same.eta_s), (0.9, 0.2));
        assert_eq!(unscaled, plan);
    }
}
