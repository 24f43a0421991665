use proptest::prelude::*;
use qtps::dynamics::{burst, burst_strided, effective_potential, LangevinParams, Potential};
use qtps::StreamSeed;
use statrs::distribution::{ContinuousCDF, Normal};

fn params(kbt: f64, dt: f64) -> LangevinParams {
    LangevinParams { mass: 1.0, friction: 2.0, kbt, dt, dim: 2, n_atoms: 1 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_effective_potential_matches_closed_form(
        k in proptest::collection::vec(0.1f64..5.0, 2),
        q in proptest::collection::vec(-2.0f64..2.0, 2),
        kbt in 0.1f64..2.0,
    ) {
        let lp = params(kbt, 1e-3);
        let v = effective_potential(&q, &Potential::harmonic(k.clone()), &lp).unwrap();
        let g2: f64 = k.iter().zip(&q).map(|(k, x)| k * k * x * x).sum();
        let lap: f64 = k.iter().sum();
        let hbar = 2.0 * kbt / lp.friction;
        let expected = (g2 - hbar * lp.friction * lap) / (2.0 * lp.mass * lp.friction * lp.friction);
        prop_assert!((v - expected).abs() <= 1e-12 * expected.abs().max(1e-12));
    }

    #[test]
    fn same_seed_same_trajectory(seed in any::<u64>(), stream in any::<u64>()) {
        let p = Potential::double_well(5.0);
        let s = StreamSeed { seed, stream };
        let a = burst(&[-1.0, 0.0], 200, &p, &params(0.5, 1e-3), s).unwrap();
        let b = burst(&[-1.0, 0.0], 200, &p, &params(0.5, 1e-3), s).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn free_diffusion_msd_matches_fluctuation_dissipation() {
    let lp = params(0.7, 1e-3);
    let flat = Potential::constant(2, 0.0);
    let traj = burst(&[0.0, 0.0], 100_000, &flat, &lp, StreamSeed::new(5)).unwrap();
    let expected = 2.0 * lp.diffusion() * lp.dt;
    for c in 0..2 {
        let msd = traj.points.windows(2).map(|w| (w[1][c] - w[0][c]).powi(2)).sum::<f64>()
            / (traj.len() - 1) as f64;
        assert!((msd / expected - 1.0).abs() < 0.05, "coordinate {c}: {msd} vs {expected}");
    }
}

#[test]
fn harmonic_samples_pass_ks_against_boltzmann() {
    let k = 2.0;
    let lp = LangevinParams { mass: 1.0, friction: 1.0, kbt: 0.5, dt: 5e-3, dim: 1, n_atoms: 1 };
    let p = Potential::harmonic(vec![k]);
    // Relaxation time m*gamma/k = 0.5, i.e. 100 steps; keep every 400th.
    let traj = burst_strided(&[0.0], 400_000, 400, &p, &lp, StreamSeed::new(17)).unwrap();
    let mut xs: Vec<f64> = traj.points[10..].iter().map(|q| q[0]).collect();
    xs.sort_by(f64::total_cmp);
    let law = Normal::new(0.0, (lp.kbt / k).sqrt()).unwrap();
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let critical = 1.628 / n.sqrt();
    assert!(d < critical, "KS D = {d}, critical {critical}");
}
