//! W3ZB Bell functional and the end-to-end experiment evaluation.

use crate::error::{invalid, Result};
use crate::herald::{herald_swap, HeraldedState};
use crate::measurement::{HeraldedTerms, MeasurementPlan};
use crate::network::{fold_detector_efficiency, prepare_network, SqueezerBank};
use crate::noise::NoiseConfig;

/// Full-correlator table indexed by setting mask (bit `p` = setting of party `p`).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorTable {
    parties: usize,
    values: Vec<f64>,
}

impl CorrelatorTable {
    pub fn new(parties: usize, values: Vec<f64>) -> Result<Self> {
        if parties == 0 || values.len() != 1usize << parties {
            return invalid(format!(
                "correlator table for {parties} parties needs {} entries, got {}",
                1usize << parties.min(63),
                values.len()
            ));
        }
        Ok(Self { parties, values })
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, settings: usize) -> f64 {
        self.values[settings]
    }
}

/// `2^{-N} sum_b | sum_n (-1)^{<b, n>} <M^(n)> |`.
pub fn bell_value(table: &CorrelatorTable) -> f64 {
    let size = table.values.len();
    let total: f64 = (0..size)
        .map(|b| {
            table
                .values
                .iter()
                .enumerate()
                .map(|(n, c)| if (b & n).count_ones() % 2 == 0 { *c } else { -*c })
                .sum::<f64>()
                .abs()
        })
        .sum();
    total / size as f64
}

/// Local-realist bound of the functional.
pub const LOCAL_BOUND: f64 = 1.0;

/// Largest quantum value, `2^{(N-1)/2}`.
pub fn quantum_bound(parties: usize) -> f64 {
    2f64.powf((parties as f64 - 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub bell: f64,
    pub p_success: f64,
    pub correlators: CorrelatorTable,
}

/// Heralded party state and the effective (detector-efficiency folded) plan.
///
/// Observable-side noise of `plan` is overwritten from `noise`.
pub fn herald_experiment(
    bank: &SqueezerBank,
    noise: &NoiseConfig,
    plan: &MeasurementPlan,
) -> Result<(HeraldedState, MeasurementPlan)> {
    noise.validate()?;
    if plan.parties() != bank.parties() {
        return invalid(format!(
            "{} squeezers but {} parties in the measurement plan",
            bank.parties(),
            plan.parties()
        ));
    }
    let plan = noise.apply_to(plan.clone())?;
    let (channels, plan) = fold_detector_efficiency(&noise.channels(), &plan)?;
    let state = prepare_network(bank, &channels)?;
    Ok((herald_swap(&state, noise.p_dark_s)?, plan))
}

/// Squeezers -> loss -> interferometer -> herald -> correlators -> Bell value.
pub fn evaluate_experiment(
    bank: &SqueezerBank,
    noise: &NoiseConfig,
    plan: &MeasurementPlan,
) -> Result<ExperimentOutcome> {
    let (heralded, plan) = herald_experiment(bank, noise, plan)?;
    let terms = HeraldedTerms::build(&heralded, &plan)?;
    let values = (0..(1usize << terms.parties())).map(|s| terms.correlator(s)).collect();
    let correlators = CorrelatorTable::new(bank.parties(), values)?;
    Ok(ExperimentOutcome {
        bell: bell_value(&correlators),
        p_success: heralded.p_success,
        correlators,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::settings_from_reference;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn constant_tables() {
        for n in 1..=5 {
            let ones = CorrelatorTable::new(n, vec![1.0; 1 << n]).unwrap();
            assert_relative_eq!(bell_value(&ones), 1.0, epsilon = 1e-15);
            let zeros = CorrelatorTable::new(n, vec![0.0; 1 << n]).unwrap();
            assert_eq!(bell_value(&zeros), 0.0);
        }
    }

    #[test]
    fn chsh_optimal_table() {
        // E(0,0) = E(0,1) = E(1,0) = 1/sqrt2, E(1,1) = -1/sqrt2; bits: party 0 is bit 0
        let t = CorrelatorTable::new(2, vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2]).unwrap();
        assert_relative_eq!(bell_value(&t), 2f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(bell_value(&t), quantum_bound(2), epsilon = 1e-15);
    }

    #[test]
    fn incomplete_table_rejected() {
        assert!(CorrelatorTable::new(3, vec![0.0; 7]).is_err());
    }

    #[test]
    fn relabeling_settings_preserves_bell_value() {
        let bank = SqueezerBank::in_phase(0.13, 3).unwrap();
        let noise = NoiseConfig::standard();
        let plan = settings_from_reference(0.47, -0.2, &[0.0; 3]).unwrap();
        let a = evaluate_experiment(&bank, &noise, &plan).unwrap();
        let b = evaluate_experiment(&bank, &noise, &plan.relabeled()).unwrap();
        assert_relative_eq!(a.bell, b.bell, epsilon = 1e-12);
        for s in 0..8 {
            assert_relative_eq!(a.correlators.get(s), b.correlators.get(7 - s), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_squeezing_is_local() {
        for n in 2..=4 {
            let bank = SqueezerBank::in_phase(0.0, n).unwrap();
            let plan = settings_from_reference(0.5, -0.2, &vec![0.0; n]).unwrap();
            let out = evaluate_experiment(&bank, &NoiseConfig::standard(), &plan).unwrap();
            assert!(out.bell <= 1.0 + 1e-12, "n = {n}: {}", out.bell);
        }
    }

    #[test]
    fn ideal_two_party_violation() {
        let bank = SqueezerBank::in_phase(0.05, 2).unwrap();
        let plan = settings_from_reference(0.59, -0.18, &[0.0; 2]).unwrap();
        let mut noise = NoiseConfig::noiseless();
        noise.p_dark_s = 0.0;
        let out = evaluate_experiment(&bank, &noise, &plan).unwrap();
        assert!(out.bell > 1.0, "{}", out.bell);
    }

    #[test]
    fn party_count_mismatch() {
        let bank = SqueezerBank::in_phase(0.1, 3).unwrap();
        let plan = settings_from_reference(0.5, -0.2, &[0.0; 2]).unwrap();
        assert!(evaluate_experiment(&bank, &NoiseConfig::standard(), &plan).is_err());
    }
}
