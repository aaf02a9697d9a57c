use proptest::prelude::*;
use swapbell::bell::herald_experiment;
use swapbell::gauss::is_symplectic;
use swapbell::herald::{herald_swap, partition};
use swapbell::measurement::correlator_table;
use swapbell::network::{
    apply_mode_loss, apply_symplectic, build_tmsv_network, interferometer_symplectic, prepare_network,
};
use swapbell::polytope::lhv_feasible;
use swapbell::probabilities::build_outcome_table;
use swapbell::{
    bell_value, evaluate_experiment, quantum_bound, settings_from_reference, ChannelConfig, MeasurementPlan,
    NoiseConfig, SqueezerBank,
};

#[derive(Debug, Clone)]
struct Case {
    r: f64,
    phases: Vec<f64>,
    m: (f64, f64),
    noise: NoiseConfig,
}

impl Case {
    fn bank(&self) -> SqueezerBank {
        SqueezerBank::new(self.r, self.phases.clone()).unwrap()
    }

    fn plan(&self) -> MeasurementPlan {
        settings_from_reference(self.m.0, self.m.1, &self.phases).unwrap()
    }
}

fn noise() -> impl Strategy<Value = NoiseConfig> {
    (
        (0.05f64..1.0, 0.05f64..1.0, 0.3f64..1.0),
        (0.0f64..1e-2, 0.0f64..1e-2),
        (0.0f64..0.3, 0.0f64..0.5),
    )
        .prop_map(|((eta_p, eta_s, eta_d), (p_dark_s, p_dark_p), (sa, st))| NoiseConfig {
            eta_p,
            eta_s,
            eta_d,
            p_dark_s,
            p_dark_p,
            amp_variance: sa * sa,
            phase_variance: st * st,
        })
}

fn case(parties: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Case> {
    parties.prop_flat_map(|n| {
        (
            0.02f64..0.45,
            prop::collection::vec(-3.1f64..3.1, n),
            (-1.5f64..1.5, -1.5f64..1.5),
            noise(),
        )
            .prop_map(|(r, phases, m, noise)| Case { r, phases, m, noise })
    })
}

fn max_abs_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prepared_states_are_physical(c in case(2..=6)) {
        let state = prepare_network(&c.bank(), &c.noise.channels()).unwrap();
        prop_assert!(state.cov.min_uncertainty_eigenvalue() > -1e-10);
        prop_assert!(is_symplectic(&interferometer_symplectic(c.phases.len()).unwrap(), 1e-10));
    }

    #[test]
    fn loss_composes(c in case(2..=4), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let state = build_tmsv_network(&c.bank()).unwrap();
        let modes = state.labels.len();
        let twice = apply_mode_loss(&apply_mode_loss(&state, &vec![a; modes]).unwrap(), &vec![b; modes]).unwrap();
        let once = apply_mode_loss(&state, &vec![a * b; modes]).unwrap();
        prop_assert!(max_abs_diff(twice.cov.matrix(), once.cov.matrix()) < 1e-12);
    }

    #[test]
    fn interferometer_conserves_swap_photons(c in case(2..=6)) {
        let state = build_tmsv_network(&c.bank()).unwrap();
        let swap = state.swap_modes();
        let proxy = |m: &nalgebra::DMatrix<f64>| -> f64 {
            swap.iter().map(|&k| m[(2 * k, 2 * k)] + m[(2 * k + 1, 2 * k + 1)] - 2.0).sum::<f64>() / 4.0
        };
        let mixed = apply_symplectic(&state, &interferometer_symplectic(swap.len()).unwrap(), &swap).unwrap();
        prop_assert!((proxy(state.cov.matrix()) - proxy(mixed.cov.matrix())).abs() < 1e-10);
    }

    #[test]
    fn heralded_mixture_is_normalized_and_physical(c in case(2..=6)) {
        let (heralded, _) = herald_experiment(&c.bank(), &c.noise, &c.plan()).unwrap();
        let scale = heralded.weight_bar.abs().max(heralded.weight_all.abs());
        prop_assert!((heralded.weight_bar + heralded.weight_all - 1.0).abs() <= 4.0 * f64::EPSILON * scale);
        prop_assert!(heralded.p_success > 0.0 && heralded.p_success <= 1.0);
        for (_, v) in heralded.components() {
            prop_assert!(v.min_uncertainty_eigenvalue() > -1e-10);
        }
    }

    #[test]
    fn herald_gammas_are_invertible(c in case(2..=6)) {
        let state = prepare_network(&c.bank(), &c.noise.channels()).unwrap();
        let part = partition(&state).unwrap();
        for sigma in [part.sigma_bar.clone(), part.sigma_s()] {
            let min = sigma.symmetric_eigenvalues().min();
            prop_assert!(min + 1.0 >= 1.0 - 1e-10, "gamma eigenvalue {}", min + 1.0);
        }
    }

    #[test]
    fn vanishing_swap_dark_counts_are_continuous(c in case(2..=4)) {
        let channels = ChannelConfig { eta_d: 1.0, ..c.noise.channels() };
        let state = prepare_network(&c.bank(), &channels).unwrap();
        let ideal = herald_swap(&state, 0.0).unwrap();
        let tiny = herald_swap(&state, 1e-12).unwrap();
        // dark counts add at most N p_d to the heralding probability
        prop_assert!((ideal.p_success - tiny.p_success).abs() <= 1e-11);
        prop_assert_eq!(&ideal.cov_bar, &tiny.cov_bar);
        prop_assert_eq!(&ideal.cov_all, &tiny.cov_all);
    }

    #[test]
    fn correlators_and_bell_value_are_bounded(c in case(2..=5)) {
        let out = evaluate_experiment(&c.bank(), &c.noise, &c.plan()).unwrap();
        prop_assert!(out.correlators.values().iter().all(|e| e.abs() <= 1.0 + 1e-9));
        prop_assert!(out.bell >= 0.0 && out.bell <= quantum_bound(c.phases.len()) + 1e-9);
    }

    #[test]
    fn unsqueezed_sources_stay_local(c in case(2..=5)) {
        let noise = NoiseConfig { p_dark_s: c.noise.p_dark_s.max(1e-5), ..c.noise };
        let bank = SqueezerBank::new(0.0, c.phases.clone()).unwrap();
        prop_assert!(evaluate_experiment(&bank, &noise, &c.plan()).unwrap().bell <= 1.0 + 1e-12);
    }

    #[test]
    fn global_setting_relabeling_keeps_bell_value(c in case(2..=5)) {
        let a = evaluate_experiment(&c.bank(), &c.noise, &c.plan()).unwrap().bell;
        let b = evaluate_experiment(&c.bank(), &c.noise, &c.plan().relabeled()).unwrap().bell;
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn party_permutation_keeps_bell_value(c in case(3..=5), rot in 1usize..5) {
        let n = c.phases.len();
        let order: Vec<usize> = (0..n).map(|p| (p + rot) % n).collect();
        let phases: Vec<f64> = order.iter().map(|&p| c.phases[p]).collect();
        let plan = c.plan();
        let permuted = MeasurementPlan::new(order.iter().map(|&p| plan.settings[p]).collect(), phases.clone()).unwrap();
        let bank = SqueezerBank::new(c.r, phases).unwrap();
        let a = evaluate_experiment(&c.bank(), &c.noise, &plan).unwrap().bell;
        let b = evaluate_experiment(&bank, &c.noise, &permuted).unwrap().bell;
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn global_rotation_keeps_bell_value(c in case(2..=4), angle in -3.1f64..3.1) {
        let phases = vec![0.0; c.phases.len()];
        let plan = settings_from_reference(c.m.0, c.m.1, &phases).unwrap();
        let rotated = MeasurementPlan::new(
            plan.settings.iter().map(|s| [s[0].rotated(angle), s[1].rotated(angle)]).collect(),
            phases.clone(),
        )
        .unwrap();
        let bank = SqueezerBank::new(c.r, phases).unwrap();
        let a = evaluate_experiment(&bank, &c.noise, &plan).unwrap().bell;
        let b = evaluate_experiment(&bank, &c.noise, &rotated).unwrap().bell;
        // the two mixture weights cancel; rounding grows with their size
        let (h, _) = herald_experiment(&bank, &c.noise, &plan).unwrap();
        let scale = h.weight_bar.abs() + h.weight_all.abs();
        prop_assert!((a - b).abs() < 1e-12 * scale.max(100.0), "{a} vs {b}, weights {scale:.3e}");
    }

    #[test]
    fn outcome_tables_are_consistent(c in case(2..=5)) {
        let (heralded, plan) = herald_experiment(&c.bank(), &c.noise, &c.plan()).unwrap();
        let table = build_outcome_table(&heralded, &plan).unwrap();
        prop_assert!(table.as_slice().iter().all(|&p| p >= 0.0));
        for s in 0..table.size() {
            let total: f64 = (0..table.size()).map(|g| table.get(g, s)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-10);
        }
        prop_assert!(table.max_signalling() <= 1e-10);
        let direct = correlator_table(&heralded, &plan).unwrap();
        let from_table = table.correlators();
        let diff = direct.iter().zip(from_table.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-10);
        let bell = evaluate_experiment(&c.bank(), &c.noise, &c.plan()).unwrap().bell;
        prop_assert!((bell - bell_value(&from_table)).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn violation_implies_infeasible(c in case(2..=3)) {
        let (heralded, plan) = herald_experiment(&c.bank(), &c.noise, &c.plan()).unwrap();
        let table = build_outcome_table(&heralded, &plan).unwrap();
        let result = lhv_feasible(&table).unwrap();
        if bell_value(&table.correlators()) > 1.0 + 1e-6 {
            prop_assert!(!result.feasible);
        }
    }

    #[test]
    fn feasibility_ignores_labels(c in case(3..=3), party in 0usize..3, setting in 0usize..2) {
        let (heralded, plan) = herald_experiment(&c.bank(), &c.noise, &c.plan()).unwrap();
        let table = build_outcome_table(&heralded, &plan).unwrap();
        let base = lhv_feasible(&table).unwrap().feasible;
        let relabeled = table.outcome_relabeled(party, setting).unwrap();
        prop_assert_eq!(lhv_feasible(&relabeled).unwrap().feasible, base);
        let permuted = table.permuted(&[2, 0, 1]).unwrap();
        prop_assert_eq!(lhv_feasible(&permuted).unwrap().feasible, base);
    }
}
