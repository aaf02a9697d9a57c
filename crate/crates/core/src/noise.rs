use crate::error::{invalid, Result};
use crate::measurement::MeasurementPlan;
use crate::network::ChannelConfig;

/// Every imperfection of the experiment in one place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Transmission of the channels to the party detectors.
    pub eta_p: f64,
    /// Transmission of the channels to the swapping interferometer.
    pub eta_s: f64,
    /// Detector efficiency, common to all detectors.
    pub eta_d: f64,
    /// Dark-count probability of the swap detectors.
    pub p_dark_s: f64,
    /// Dark-count probability of the party detectors.
    pub p_dark_p: f64,
    /// Relative-amplitude variance `sigma_A^2`.
    pub amp_variance: f64,
    /// Phase variance `sigma_theta^2` in rad^2.
    pub phase_variance: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl NoiseConfig {
    /// Standard operating point: 90% / 20% channel transmission, 3% amplitude
    /// noise, 100 mrad phase noise, 1e-4 dark counts, ideal detectors.
    pub fn standard() -> Self {
        Self {
            eta_p: 0.9,
            eta_s: 0.2,
            eta_d: 1.0,
            p_dark_s: 1e-4,
            p_dark_p: 1e-4,
            amp_variance: 0.03 * 0.03,
            phase_variance: 0.1 * 0.1,
        }
    }

    pub fn noiseless() -> Self {
        Self {
            eta_p: 1.0,
            eta_s: 1.0,
            eta_d: 1.0,
            p_dark_s: 0.0,
            p_dark_p: 0.0,
            amp_variance: 0.0,
            phase_variance: 0.0,
        }
    }

    pub fn sigma_a(&self) -> f64 {
        self.amp_variance.sqrt()
    }

    pub fn sigma_theta(&self) -> f64 {
        self.phase_variance.sqrt()
    }

    pub fn channels(&self) -> ChannelConfig {
        ChannelConfig {
            eta_p: self.eta_p,
            eta_s: self.eta_s,
            eta_d: self.eta_d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channels().validate()?;
        for (name, p) in [("p_dark_s", self.p_dark_s), ("p_dark_p", self.p_dark_p)] {
            if !(0.0..1.0).contains(&p) {
                return invalid(format!("{name} must lie in [0, 1), got {p}"));
            }
        }
        if !(self.amp_variance >= 0.0 && self.phase_variance >= 0.0) {
            return invalid("noise variances must be non-negative");
        }
        Ok(())
    }

    /// Copies the observable-side noise into `plan`.
    pub fn apply_to(&self, plan: MeasurementPlan) -> Result<MeasurementPlan> {
        plan.with_noise(self.amp_variance, self.phase_variance, self.p_dark_p)
    }
}
