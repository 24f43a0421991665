mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use qtps::annealer::{calibrate, CalibrationConfig, SimulatedAnnealer, Calibration, DELTA_FLOOR};
use qtps::qubo::{encode_default, enumerate_paths};
use qtps::tps::{log_flux, run_chain, ChainConfig, Point};
use qtps::{Exec, StreamSeed};

fn calibration() -> Calibration {
    Calibration {
        budgets: vec![100.0, 150.0, 200.0],
        mean: vec![3.0, 2.5, 2.2],
        delta: vec![0.8, 0.6, 0.5],
        success_rate: vec![0.5, 0.6, 0.7],
        valid: vec![10, 12, 14],
        attempts: vec![20, 20, 20],
        delta_floor: DELTA_FLOOR,
        reads_per_call: 1,
        backend: "table".into(),
    }
}

fn chain() -> ChainConfig {
    ChainConfig {
        t0: 150.0,
        k: 2e-4,
        dt: 25.0,
        n_steps: 100,
        seed: 0,
        initial_budget: None,
        reads_per_call: 1,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn forward_and_backward_flux_balance(
        sa in 0.5f64..6.0, sb in 0.5f64..6.0,
        ta in 100.0f64..200.0, tb in 100.0f64..200.0,
    ) {
        let (cal, cfg) = (calibration(), chain());
        let a = Point { action: sa, budget: ta };
        let b = Point { action: sb, budget: tb };
        let residual = log_flux(a, b, &cal, &cfg).unwrap() - log_flux(b, a, &cal, &cfg).unwrap();
        prop_assert!(residual.abs() < 1e-10, "residual {residual}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn chain_stays_on_valid_paths_and_counts_add_up(g in common::graph(3..=6, 20), seed in any::<u64>()) {
        let q = encode_default(&g).unwrap();
        let sa = SimulatedAnnealer::new(5.0);
        let cal_cfg = CalibrationConfig {
            budgets: vec![2.0, 5.0, 8.0],
            samples_per_budget: 20,
            reads_per_call: 1,
            delta_floor: DELTA_FLOOR,
        };
        let cal = calibrate(&q, &cal_cfg, &sa, StreamSeed::new(seed), Exec::Sequential).unwrap();
        let cfg = ChainConfig { t0: 5.0, k: 0.5, dt: 0.5, n_steps: 150, seed, initial_budget: None, reads_per_call: 1 };
        let run = run_chain(&q, &cal, &sa, &cfg, StreamSeed::new(seed)).unwrap();
        let valid: HashSet<Vec<usize>> = enumerate_paths(&g, g.node_count())
            .unwrap()
            .paths
            .into_iter()
            .map(|p| p.nodes)
            .collect();
        for state in run.states() {
            prop_assert!(valid.contains(state));
        }
        let s = run.summary;
        prop_assert_eq!(s.accepted + s.rejected + s.wrong_topology + s.backend_failure, cfg.n_steps);
        prop_assert!(s.reconciles());
    }
}
