//! Transition path sampling on a coarse-grained graph of an explored energy
//! landscape, with trial paths generated by annealing a QUBO encoding of the
//! path problem and corrected by a Metropolis rule over (path, budget) pairs.
//!
//! The pipeline stages map onto modules:
//!
//! * [`dynamics`]: analytic landscapes, overdamped Langevin bursts, effective potential
//! * [`manifold`]: diffusion maps, hull boundary, shooting, exploration loop
//! * [`graph`]: node reduction, edge construction, action weights, Dijkstra
//! * [`qubo`]: path Hamiltonian encoding, decoding, exhaustive oracles
//! * [`annealer`]: backend contract, simulated annealing, remote client, calibration
//! * [`tps`]: the Markov chain over (path, sweep budget)
//! * [`analysis`]: autocorrelation, path density, report bundle
//! * [`pipeline`]: end-to-end helpers shared by the CLI and tests

pub mod analysis;
pub mod annealer;
pub mod dynamics;
pub mod graph;
pub mod manifold;
pub mod par;
pub mod pipeline;
pub mod qubo;
pub mod rng;
pub mod tps;

pub use par::Exec;
pub use rng::StreamSeed;

/// Euclidean distance between two points of equal dimension.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Linear-interpolated quantile of unsorted data, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(v[lo] + (v[hi] - v[lo]) * frac)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0], 0.5), Some(2.0));
        assert_eq!(quantile(&[4.0, 1.0, 2.0, 3.0], 0.5), Some(2.5));
        assert_eq!(quantile(&[], 0.5), None);
    }
}
