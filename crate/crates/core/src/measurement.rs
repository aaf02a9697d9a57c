//! Displacement-based on/off observables and their correlators.
//!
//! Party `p` displaces its mode by `X_p^(n_p)` and records click (+1) or no
//! click (-1). With dark-count probability `p_d` the observable is
//! `I - 2 (1 - p_d) |-X><-X|`; amplitude and phase noise broaden the coherent
//! projector into a Gaussian with covariance `Delta`.
//!
//! Every correlator is a finite sum of zero-mean Gaussian densities over
//! marginals of the conditional state. Those densities only depend on which
//! parties are included and on their settings, i.e. on one of `3^N`
//! patterns, so they are tabulated once per conditional covariance and
//! reused by all `2^N` correlators and all `4^N` outcome probabilities.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::gauss::{centered_normal_pdf, CovarianceMatrix};
use crate::herald::HeraldedState;

/// Displacement `X = (x, y)`; the displaced vacuum is centred at `(2x, 2y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Displacement {
    pub x: f64,
    pub y: f64,
}

impl Displacement {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return invalid(format!("displacement must be finite, got ({x}, {y})"));
        }
        Ok(Self { x, y })
    }

    pub fn along_q(m: f64) -> Self {
        Self { x: m, y: 0.0 }
    }

    /// Counter-clockwise rotation by `angle` in phase space.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
        }
    }

    pub fn scaled(self, f: f64) -> Self {
        Self {
            x: f * self.x,
            y: f * self.y,
        }
    }

    pub fn magnitude(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// `2X`, the phase-space centre of the coherent state.
    pub fn center(self) -> Vector2<f64> {
        Vector2::new(2.0 * self.x, 2.0 * self.y)
    }
}

/// Per-party displacement pairs plus the observable noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPlan {
    /// `settings[p][n]` is the displacement of party `p` under setting `n`.
    pub settings: Vec<[Displacement; 2]>,
    pub phases: Vec<f64>,
    /// Variance of the relative amplitude.
    pub amp_variance: f64,
    /// Variance of the phase angle in rad^2.
    pub phase_variance: f64,
    /// Dark-count probability of the party detectors.
    pub p_dark: f64,
}

impl MeasurementPlan {
    pub fn new(settings: Vec<[Displacement; 2]>, phases: Vec<f64>) -> Result<Self> {
        if settings.len() != phases.len() {
            return invalid("one phase per party required");
        }
        if settings.is_empty() {
            return invalid("plan has no parties");
        }
        Ok(Self {
            settings,
            phases,
            amp_variance: 0.0,
            phase_variance: 0.0,
            p_dark: 0.0,
        })
    }

    pub fn with_noise(mut self, amp_variance: f64, phase_variance: f64, p_dark: f64) -> Result<Self> {
        if !(amp_variance >= 0.0 && phase_variance >= 0.0) {
            return invalid("noise variances must be non-negative");
        }
        if !(0.0..1.0).contains(&p_dark) {
            return invalid(format!("dark-count probability must lie in [0, 1), got {p_dark}"));
        }
        self.amp_variance = amp_variance;
        self.phase_variance = phase_variance;
        self.p_dark = p_dark;
        Ok(self)
    }

    pub fn parties(&self) -> usize {
        self.settings.len()
    }

    pub fn displacement(&self, party: usize, setting: usize) -> Displacement {
        self.settings[party][setting]
    }

    /// Every displacement multiplied by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        Self {
            settings: self
                .settings
                .iter()
                .map(|[a, b]| [a.scaled(f), b.scaled(f)])
                .collect(),
            ..self.clone()
        }
    }

    /// Same plan with setting labels 0 and 1 exchanged for every party.
    pub fn relabeled(&self) -> Self {
        Self {
            settings: self.settings.iter().map(|[a, b]| [*b, *a]).collect(),
            ..self.clone()
        }
    }

    pub fn noisy_cov(&self, party: usize, setting: usize) -> NoisyDispCov {
        noisy_disp_cov(self.displacement(party, setting), self.amp_variance, self.phase_variance)
    }
}

/// Reference displacements `(m0, 0)`, `(m1, 0)` for party 1; party `n` uses
/// the same pair rotated by `phi_1 - phi_n`.
pub fn settings_from_reference(m0: f64, m1: f64, phases: &[f64]) -> Result<MeasurementPlan> {
    if phases.is_empty() {
        return invalid("at least one party required");
    }
    let reference = [Displacement::new(m0, 0.0)?, Displacement::new(m1, 0.0)?];
    let settings = phases
        .iter()
        .map(|&phi| {
            let angle = phases[0] - phi;
            [reference[0].rotated(angle), reference[1].rotated(angle)]
        })
        .collect();
    MeasurementPlan::new(settings, phases.to_vec())
}

/// Covariance of the noisy coherent projector for one party and setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyDispCov(pub Matrix2<f64>);

/// `Delta = I + V_A (2X)(2X)^T + V_theta (w^T 2X)(w^T 2X)^T`.
pub fn noisy_disp_cov(x: Displacement, amp_variance: f64, phase_variance: f64) -> NoisyDispCov {
    let c = x.center();
    let orth = Vector2::new(-c.y, c.x);
    NoisyDispCov(Matrix2::identity() + c * c.transpose() * amp_variance + orth * orth.transpose() * phase_variance)
}

/// Expectation of `prod_p M_p` in a zero-mean Gaussian state `V` over the
/// party modes:
/// `f = sum_d [-8 pi (1 - p_d)]^{|d|} G[V^(d) + Delta^(d), 0](2 X^(d))`.
///
/// Straight sum over all `2^N` subsets; [`correlator_table`] uses the
/// tabulated form instead.
pub fn correlator_against_gaussian(
    v: &CovarianceMatrix,
    displacements: &[Displacement],
    deltas: &[NoisyDispCov],
    p_dark: f64,
) -> Result<f64> {
    let n = v.modes();
    if displacements.len() != n || deltas.len() != n {
        return invalid(format!(
            "{} modes but {} displacements and {} noise covariances",
            n,
            displacements.len(),
            deltas.len()
        ));
    }
    let coeff = -8.0 * PI * (1.0 - p_dark);
    let mut total = 0.0;
    for d in 0..(1usize << n) {
        let members: Vec<usize> = (0..n).filter(|&p| d >> p & 1 == 1).collect();
        let (m, x) = assemble(v.matrix(), &members, |k| (deltas[members[k]].0, displacements[members[k]].center()));
        total += coeff.powi(members.len() as i32) * centered_normal_pdf(&m, &x)?;
    }
    Ok(total)
}

/// `(V^(d) + Delta^(d), 2X^(d))` for the parties in `members`.
fn assemble(
    v: &DMatrix<f64>,
    members: &[usize],
    noise: impl Fn(usize) -> (Matrix2<f64>, Vector2<f64>),
) -> (DMatrix<f64>, DVector<f64>) {
    let k = members.len();
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    let mut x = DVector::zeros(2 * k);
    for (a, &pa) in members.iter().enumerate() {
        for (b, &pb) in members.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    m[(2 * a + i, 2 * b + j)] = v[(2 * pa + i, 2 * pb + j)];
                }
            }
        }
        let (delta, c) = noise(a);
        for i in 0..2 {
            for j in 0..2 {
                m[(2 * a + i, 2 * a + j)] += delta[(i, j)];
            }
            x[2 * a + i] = c[i];
        }
    }
    (m, x)
}

/// Single density `G[V^(d) + Delta^(d), 0](2 X^(d))` for the parties in
/// `subset`, each at its setting in `settings`.
pub(crate) fn subset_density(
    v: &CovarianceMatrix,
    plan: &MeasurementPlan,
    subset: usize,
    settings: usize,
) -> Result<f64> {
    let n = plan.parties();
    let members: Vec<usize> = (0..n).filter(|&p| subset >> p & 1 == 1).collect();
    let (m, x) = assemble(v.matrix(), &members, |k| {
        let (p, s) = (members[k], settings >> members[k] & 1);
        (plan.noisy_cov(p, s).0, plan.displacement(p, s).center())
    });
    centered_normal_pdf(&m, &x)
}

pub(crate) fn pow3(n: usize) -> usize {
    3usize.pow(n as u32)
}

/// Gaussian densities `G[V^(d) + Delta^(d), 0](2 X^(d))` for every pattern
/// `t in {absent, setting 0, setting 1}^N`, indexed in base 3 with party 0
/// as the least significant digit.
#[derive(Debug, Clone)]
pub(crate) struct TermTable {
    parties: usize,
    values: Vec<f64>,
}

impl TermTable {
    pub(crate) fn build(v: &CovarianceMatrix, plan: &MeasurementPlan) -> Result<Self> {
        let n = plan.parties();
        if v.modes() != n {
            return invalid(format!("state has {} modes, plan has {n} parties", v.modes()));
        }
        let deltas: Vec<[NoisyDispCov; 2]> = (0..n).map(|p| [plan.noisy_cov(p, 0), plan.noisy_cov(p, 1)]).collect();
        let eval = |t: usize| -> Result<f64> {
            let mut members = Vec::with_capacity(n);
            let mut chosen = Vec::with_capacity(n);
            let mut rest = t;
            for p in 0..n {
                let digit = rest % 3;
                rest /= 3;
                if digit > 0 {
                    members.push(p);
                    chosen.push(digit - 1);
                }
            }
            let (m, x) = assemble(v.matrix(), &members, |k| {
                let (p, s) = (members[k], chosen[k]);
                (deltas[p][s].0, plan.displacement(p, s).center())
            });
            centered_normal_pdf(&m, &x)
        };
        let count = pow3(n);
        let values = if count > 243 {
            (0..count).into_par_iter().map(eval).collect::<Result<Vec<_>>>()?
        } else {
            (0..count).map(eval).collect::<Result<Vec<_>>>()?
        };
        Ok(Self { parties: n, values })
    }

    /// Density for the parties in mask `subset`, each at its setting in `settings`.
    #[inline]
    pub(crate) fn get(&self, subset: usize, settings: usize) -> f64 {
        self.values[pattern_index(self.parties, subset, settings)]
    }
}

#[inline]
pub(crate) fn pattern_index(parties: usize, subset: usize, settings: usize) -> usize {
    let mut idx = 0;
    let mut w = 1;
    for p in 0..parties {
        if subset >> p & 1 == 1 {
            idx += w * (1 + (settings >> p & 1));
        }
        w *= 3;
    }
    idx
}

fn correlator_from_table(table: &TermTable, settings: usize, p_dark: f64) -> f64 {
    let coeff = -8.0 * PI * (1.0 - p_dark);
    let n = table.parties;
    let mut powers = vec![1.0; n + 1];
    for k in 1..=n {
        powers[k] = powers[k - 1] * coeff;
    }
    (0..(1usize << n))
        .map(|d| powers[d.count_ones() as usize] * table.get(d, settings))
        .sum()
}

/// Tabulated densities for both mixture components of a heralded state.
#[derive(Debug, Clone)]
pub(crate) struct HeraldedTerms {
    pub weights: [f64; 2],
    pub tables: [TermTable; 2],
    pub p_dark: f64,
}

impl HeraldedTerms {
    pub(crate) fn build(heralded: &HeraldedState, plan: &MeasurementPlan) -> Result<Self> {
        if heralded.parties() != plan.parties() {
            return invalid(format!(
                "heralded state has {} parties, plan has {}",
                heralded.parties(),
                plan.parties()
            ));
        }
        Ok(Self {
            weights: [heralded.weight_bar, heralded.weight_all],
            tables: [
                TermTable::build(&heralded.cov_bar, plan)?,
                TermTable::build(&heralded.cov_all, plan)?,
            ],
            p_dark: plan.p_dark,
        })
    }

    pub(crate) fn parties(&self) -> usize {
        self.tables[0].parties
    }

    pub(crate) fn correlator(&self, settings: usize) -> f64 {
        self.weights[0] * correlator_from_table(&self.tables[0], settings, self.p_dark)
            + self.weights[1] * correlator_from_table(&self.tables[1], settings, self.p_dark)
    }
}

/// `<prod_p M_p^(n_p)>` for the setting mask `settings` (bit `p` = setting of party `p`).
pub fn correlator(heralded: &HeraldedState, plan: &MeasurementPlan, settings: usize) -> Result<f64> {
    let n = plan.parties();
    if settings >> n != 0 {
        return invalid(format!("setting mask {settings:#b} has more than {n} bits"));
    }
    let deltas: Vec<NoisyDispCov> = (0..n).map(|p| plan.noisy_cov(p, settings >> p & 1)).collect();
    let disps: Vec<Displacement> = (0..n).map(|p| plan.displacement(p, settings >> p & 1)).collect();
    let mut total = 0.0;
    for (w, v) in heralded.components() {
        total += w * correlator_against_gaussian(v, &disps, &deltas, plan.p_dark)?;
    }
    Ok(total)
}

/// All `2^N` correlators, indexed by setting mask.
pub fn correlator_table(heralded: &HeraldedState, plan: &MeasurementPlan) -> Result<Vec<f64>> {
    let terms = HeraldedTerms::build(heralded, plan)?;
    Ok((0..(1usize << terms.parties())).map(|s| terms.correlator(s)).collect())
}

/// Monte-Carlo estimate of a correlator with amplitude and phase noise
/// sampled explicitly instead of folded into `Delta`.
///
/// Each sample draws `r_p ~ N(0, V_A)` and `theta_p ~ N(0, V_theta)` per
/// party and evaluates the noiseless correlator at the perturbed
/// displacements: `(1 + r_p) X + theta_p w X` when `exact_rotation` is
/// false (the linearized model) or `(1 + r_p) R(theta_p) X` otherwise.
/// Returns `(mean, standard error)`.
pub fn sampled_noise_correlator(
    heralded: &HeraldedState,
    plan: &MeasurementPlan,
    settings: usize,
    samples: usize,
    seed: u64,
    exact_rotation: bool,
) -> Result<(f64, f64)> {
    let n = plan.parties();
    if heralded.parties() != n {
        return invalid("party count mismatch");
    }
    if samples < 2 {
        return invalid("need at least two samples");
    }
    let amp = Normal::new(0.0, plan.amp_variance.sqrt()).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let phase = Normal::new(0.0, plan.phase_variance.sqrt()).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let identity = vec![NoisyDispCov(Matrix2::identity()); n];
    let base: Vec<Displacement> = (0..n).map(|p| plan.displacement(p, settings >> p & 1)).collect();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut disps = base.clone();
    for _ in 0..samples {
        for (d, x) in disps.iter_mut().zip(&base) {
            let r: f64 = amp.sample(&mut rng);
            let theta: f64 = phase.sample(&mut rng);
            *d = if exact_rotation {
                x.rotated(theta).scaled(1.0 + r)
            } else {
                // w X = (y, -x)
                Displacement {
                    x: (1.0 + r) * x.x + theta * x.y,
                    y: (1.0 + r) * x.y - theta * x.x,
                }
            };
        }
        let mut value = 0.0;
        for (w, v) in heralded.components() {
            value += w * correlator_against_gaussian(v, &disps, &identity, plan.p_dark)?;
        }
        sum += value;
        sum_sq += value * value;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}
