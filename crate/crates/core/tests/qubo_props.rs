mod common;

use proptest::prelude::*;
use qtps::graph::dijkstra;
use qtps::qubo::{brute_force_ground, decode, default_alpha, encode, enumerate_paths};
use qtps::Exec;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn valid_paths_sit_on_the_constraint_floor(g in common::graph(3..=8, 40), alpha in 0.5f64..20.0) {
        let q = encode(&g, alpha).unwrap();
        for p in &enumerate_paths(&g, g.node_count()).unwrap().paths {
            let bits = q.path_bits(&p.nodes).unwrap();
            prop_assert!((q.energy(&bits) - (-2.0 * alpha + p.action)).abs() < 1e-9);
            let back = decode(&q, &bits).unwrap();
            prop_assert_eq!(&back.nodes, &p.nodes);
            prop_assert!((back.action - p.action).abs() < 1e-12);
        }
    }

    #[test]
    fn coefficients_match_the_direct_formula(
        g in common::graph(3..=6, 24),
        alpha in 0.1f64..10.0,
        raw in proptest::collection::vec(any::<bool>(), 24),
    ) {
        let q = encode(&g, alpha).unwrap();
        let bits: Vec<u8> = raw[..q.num_bits()].iter().map(|&b| b as u8).collect();
        prop_assert!((q.energy(&bits) - q.direct_energy(&bits)).abs() < 1e-9);
        for k in 0..bits.len() {
            let mut flipped = bits.clone();
            flipped[k] ^= 1;
            let delta = q.energy(&flipped) - q.energy(&bits);
            prop_assert!((q.flip_delta(&bits, k) - delta).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ground_state_is_the_shortest_path(g in common::graph(3..=6, 18)) {
        let q = encode(&g, default_alpha(&g)).unwrap();
        let ground = brute_force_ground(&q, Exec::default()).unwrap();
        let path = decode(&q, &ground.bits).unwrap();
        prop_assert_eq!(path.nodes, dijkstra(&g).unwrap().nodes);
    }

    /// Below `-2 alpha + S_min + gap` only valid paths remain, where `gap`
    /// is the lighter of the smallest possible cycle (three edges) and the
    /// distance to the next constraint level (`H_C >= -1`).
    #[test]
    fn low_energy_states_are_valid(g in common::graph(3..=5, 15)) {
        let alpha = default_alpha(&g) + 1.0;
        let q = encode(&g, alpha).unwrap();
        let s_min = dijkstra(&g).unwrap().action;
        let w_min = g.edges.iter().map(|e| e.w_renorm).fold(f64::INFINITY, f64::min);
        let gap = (3.0 * w_min).min(alpha - s_min);
        let threshold = -2.0 * alpha + s_min + gap - 1e-9;
        let n = q.num_bits();
        for code in 0u32..(1 << n) {
            let bits: Vec<u8> = (0..n).map(|k| ((code >> k) & 1) as u8).collect();
            if q.energy(&bits) < threshold {
                prop_assert!(decode(&q, &bits).is_ok(), "invalid state below threshold: {:?}", bits);
            }
        }
    }
}
