//! Trial-path generators behind one backend contract, and calibration of the
//! outcome-action distribution per sweep budget.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mean_std;
use crate::par::{self, Exec};
use crate::qubo::{self, BinaryAssignment, QuboProblem, QuboWire};
use crate::rng::StreamSeed;

pub const DELTA_FLOOR: f64 = 1e-3;
pub const MIN_SAMPLES_PER_BUDGET: usize = 20;
pub const REMOTE_URL_VAR: &str = "QTPS_REMOTE_URL";
pub const REMOTE_TOKEN_VAR: &str = "QTPS_REMOTE_TOKEN";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out after {seconds} s")]
    Timeout { seconds: f64 },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    Request(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("budget {budget} produced no valid path in {attempts} attempts")]
    NoValidOutcome { budget: f64, attempts: usize },
    #[error("budget grid must be non-empty, positive and strictly increasing")]
    Grid,
    #[error("need at least {MIN_SAMPLES_PER_BUDGET} samples per budget, got {0}")]
    TooFewSamples(usize),
    #[error("budget {budget} lies outside the calibrated range [{lo}, {hi}]")]
    OutOfRange { budget: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy)]
pub struct AnnealRequest<'a> {
    pub problem: &'a QuboProblem,
    /// Effort budget `t_sweep`.
    pub budget: f64,
    pub seed: StreamSeed,
    pub reads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome {
    pub best: BinaryAssignment,
    pub reads: Vec<BinaryAssignment>,
    pub wall_time: Duration,
    pub backend: String,
}

impl AnnealOutcome {
    /// Build from raw bit vectors; energies are evaluated here, never trusted.
    pub fn from_bits(
        problem: &QuboProblem,
        reads: Vec<Vec<u8>>,
        wall_time: Duration,
        backend: String,
    ) -> Result<Self, BackendError> {
        if reads.is_empty() {
            return Err(BackendError::Malformed("no samples".into()));
        }
        let n = problem.num_bits();
        for (k, bits) in reads.iter().enumerate() {
            if bits.len() != n {
                return Err(BackendError::Malformed(format!(
                    "sample {k} has {} bits, expected {n}",
                    bits.len()
                )));
            }
            if bits.iter().any(|&b| b > 1) {
                return Err(BackendError::Malformed(format!("sample {k} is not binary")));
            }
        }
        let reads: Vec<BinaryAssignment> = reads.into_iter().map(|b| problem.assignment(b)).collect();
        let best = reads
            .iter()
            .min_by(|a, b| a.energy.total_cmp(&b.energy))
            .cloned()
            .expect("non-empty");
        Ok(AnnealOutcome {
            best,
            reads,
            wall_time,
            backend,
        })
    }
}

/// Anything that turns a QUBO and a budget into sampled bit vectors.
pub trait Backend: Sync {
    fn id(&self) -> String;
    fn anneal(&self, req: &AnnealRequest) -> Result<AnnealOutcome, BackendError>;
}

/// Single-spin-flip Metropolis annealing over the bits with a geometric
/// temperature schedule from hot to cold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedAnnealer {
    /// Sweeps per unit budget.
    pub kappa: f64,
    /// Inverse temperatures `[hot, cold]`; derived from the coefficients if absent.
    #[serde(default)]
    pub beta_range: Option<[f64; 2]>,
}

impl SimulatedAnnealer {
    pub fn new(kappa: f64) -> Self {
        SimulatedAnnealer {
            kappa,
            beta_range: None,
        }
    }

    pub fn sweeps(&self, budget: f64) -> usize {
        ((self.kappa * budget).round() as usize).max(1)
    }

    /// Hot end accepts the largest single flip with probability 1/2, cold
    /// end accepts the smallest with probability 1/100.
    pub fn default_beta_range(problem: &QuboProblem) -> [f64; 2] {
        let mut max_delta: f64 = 0.0;
        for bit in 0..problem.num_bits() {
            let total = problem.linear[bit].abs()
                + problem.neighbors(bit).iter().map(|&(_, c)| c.abs()).sum::<f64>();
            max_delta = max_delta.max(total);
        }
        if max_delta == 0.0 {
            return [1.0, 1.0];
        }
        // The constraint terms are all of order alpha; the cold end has to
        // resolve the smallest path weight instead.
        let min_weight = problem
            .weights
            .iter()
            .copied()
            .filter(|&w| w > 0.0)
            .fold(f64::INFINITY, f64::min);
        let min_delta = if min_weight.is_finite() { min_weight } else { max_delta };
        [2f64.ln() / max_delta, (100f64.ln() / min_delta).max(2f64.ln() / max_delta)]
    }

    /// One read from a uniformly random start.
    pub fn read(&self, problem: &QuboProblem, budget: f64, seed: StreamSeed) -> Vec<u8> {
        let mut rng = seed.rng();
        let n = problem.num_bits();
        let mut bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let [hot, cold] = self
            .beta_range
            .unwrap_or_else(|| Self::default_beta_range(problem));
        let sweeps = self.sweeps(budget);
        let ratio = if sweeps > 1 {
            (cold / hot).powf(1.0 / (sweeps - 1) as f64)
        } else {
            1.0
        };
        let mut beta = if sweeps > 1 { hot } else { cold };
        for _ in 0..sweeps {
            for bit in 0..n {
                let delta = problem.flip_delta(&bits, bit);
                if delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp() {
                    bits[bit] ^= 1;
                }
            }
            beta *= ratio;
        }
        bits
    }
}

impl Backend for SimulatedAnnealer {
    fn id(&self) -> String {
        format!("simulated-annealing(kappa={})", self.kappa)
    }

    fn anneal(&self, req: &AnnealRequest) -> Result<AnnealOutcome, BackendError> {
        if !(req.budget > 0.0 && req.budget.is_finite()) {
            return Err(BackendError::Request(format!("budget {} must be > 0", req.budget)));
        }
        let start = Instant::now();
        let reads = (0..req.reads.max(1))
            .map(|r| self.read(req.problem, req.budget, req.seed.split(r as u64)))
            .collect();
        AnnealOutcome::from_bits(req.problem, reads, start.elapsed(), self.id())
    }
}

#[derive(Debug, Serialize)]
struct SolveRequest<'a> {
    qubo: &'a QuboWire,
    budget_seconds: f64,
    num_reads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct SolveResponse {
    samples: Vec<Sample>,
    #[allow(dead_code)]
    solver_time_seconds: f64,
}

#[derive(Debug, Deserialize)]
struct Sample {
    bits: Vec<u8>,
    #[allow(dead_code)]
    energy: f64,
}

/// Client for a remote QUBO service speaking `POST {base}/solve`.
///
/// Each call waits at most `2 * budget + timeout_floor`. There are no
/// retries: a retried trial move would bias the proposal distribution.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    base_url: String,
    token: Option<String>,
    timeout_floor: Duration,
    send_seed: bool,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(RemoteBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            timeout_floor: Duration::from_secs(10),
            send_seed: true,
            client,
        })
    }

    /// Endpoint and token from the environment.
    pub fn from_env() -> Result<Self, BackendError> {
        let url = std::env::var(REMOTE_URL_VAR)
            .map_err(|_| BackendError::Request(format!("{REMOTE_URL_VAR} is not set")))?;
        Self::new(url, std::env::var(REMOTE_TOKEN_VAR).ok())
    }

    pub fn with_timeout_floor(mut self, floor: Duration) -> Self {
        self.timeout_floor = floor;
        self
    }

    pub fn without_seed(mut self) -> Self {
        self.send_seed = false;
        self
    }

    pub fn timeout(&self, budget: f64) -> Duration {
        Duration::from_secs_f64(2.0 * budget) + self.timeout_floor
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote({})", self.base_url)
    }

    fn anneal(&self, req: &AnnealRequest) -> Result<AnnealOutcome, BackendError> {
        if !(req.budget > 0.0 && req.budget.is_finite()) {
            return Err(BackendError::Request(format!("budget {} must be > 0", req.budget)));
        }
        let wire = req.problem.wire();
        let body = SolveRequest {
            qubo: &wire,
            budget_seconds: req.budget,
            num_reads: req.reads.max(1),
            seed: self.send_seed.then(|| req.seed.as_u64()),
        };
        let timeout = self.timeout(req.budget);
        let mut call = self
            .client
            .post(format!("{}/solve", self.base_url))
            .timeout(timeout)
            .json(&body);
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let start = Instant::now();
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::Timeout {
                    seconds: timeout.as_secs_f64(),
                }
            } else if e.is_decode() {
                BackendError::Malformed(e.to_string())
            } else {
                BackendError::Transport(e.to_string())
            }
        };
        let resp = call.send().map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(classify)?;
        let parsed: SolveResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let reads = parsed.samples.into_iter().map(|s| s.bits).collect();
        AnnealOutcome::from_bits(req.problem, reads, start.elapsed(), self.id())
    }
}

/// Per-budget Gaussian model of the action of valid trial paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub budgets: Vec<f64>,
    pub mean: Vec<f64>,
    pub delta: Vec<f64>,
    pub success_rate: Vec<f64>,
    /// Valid outcomes per budget.
    pub valid: Vec<usize>,
    /// Anneal calls per budget.
    pub attempts: Vec<usize>,
    pub delta_floor: f64,
    pub reads_per_call: usize,
    pub backend: String,
}

impl Calibration {
    pub fn range(&self) -> (f64, f64) {
        (self.budgets[0], *self.budgets.last().expect("non-empty grid"))
    }

    pub fn contains(&self, budget: f64) -> bool {
        let (lo, hi) = self.range();
        budget >= lo && budget <= hi
    }

    /// Mean and spread at `budget`, linearly interpolated on the grid.
    pub fn interpolate(&self, budget: f64) -> Result<(f64, f64), CalibrationError> {
        let (lo, hi) = self.range();
        if !(budget >= lo && budget <= hi) {
            return Err(CalibrationError::OutOfRange { budget, lo, hi });
        }
        let k = self.budgets.partition_point(|&b| b < budget);
        if self.budgets[k] == budget {
            return Ok((self.mean[k], self.delta[k]));
        }
        let (b0, b1) = (self.budgets[k - 1], self.budgets[k]);
        let f = (budget - b0) / (b1 - b0);
        let lerp = |v: &[f64]| v[k - 1] + (v[k] - v[k - 1]) * f;
        Ok((lerp(&self.mean), lerp(&self.delta)))
    }

    /// Overall fraction of anneal calls that returned a valid path.
    pub fn overall_success_rate(&self) -> f64 {
        let valid: usize = self.valid.iter().sum();
        let attempts: usize = self.attempts.iter().sum();
        valid as f64 / attempts as f64
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let n = self.budgets.len();
        if n == 0
            || self.budgets.windows(2).any(|w| !(w[0] < w[1]))
            || self.budgets[0] <= 0.0
            || [self.mean.len(), self.delta.len(), self.success_rate.len()]
                .iter()
                .any(|&m| m != n)
        {
            return Err(CalibrationError::Grid);
        }
        Ok(())
    }
}

/// `log P(E | budget)` under the Gaussian surrogate.
pub fn log_outcome_density(cal: &Calibration, energy: f64, budget: f64) -> Result<f64, CalibrationError> {
    let (mean, delta) = cal.interpolate(budget)?;
    let z = (energy - mean) / delta;
    Ok(-0.5 * z * z - delta.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
}

pub fn outcome_density(cal: &Calibration, energy: f64, budget: f64) -> Result<f64, CalibrationError> {
    log_outcome_density(cal, energy, budget).map(f64::exp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub budgets: Vec<f64>,
    pub samples_per_budget: usize,
    #[serde(default = "one")]
    pub reads_per_call: usize,
    #[serde(default = "default_floor")]
    pub delta_floor: f64,
}

fn one() -> usize {
    1
}

fn default_floor() -> f64 {
    DELTA_FLOOR
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.budgets.is_empty()
            || self.budgets[0] <= 0.0
            || self.budgets.windows(2).any(|w| !(w[0] < w[1]))
            || self.budgets.iter().any(|b| !b.is_finite())
        {
            return Err(CalibrationError::Grid);
        }
        if self.samples_per_budget < MIN_SAMPLES_PER_BUDGET {
            return Err(CalibrationError::TooFewSamples(self.samples_per_budget));
        }
        Ok(())
    }
}

/// Raw outcome of a calibration run: the action of every valid best read,
/// grouped by budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub budgets: Vec<f64>,
    pub attempts: usize,
    pub actions: Vec<Vec<f64>>,
    pub reads_per_call: usize,
    pub backend: String,
}

impl Campaign {
    pub fn success_rates(&self) -> Vec<f64> {
        self.actions
            .iter()
            .map(|a| a.len() as f64 / self.attempts as f64)
            .collect()
    }

    /// Valid outcomes over all attempts, pooled across budgets.
    pub fn overall_success_rate(&self) -> f64 {
        let valid: usize = self.actions.iter().map(Vec::len).sum();
        valid as f64 / (self.attempts * self.budgets.len()) as f64
    }

    /// Fit mean and spread per budget; a budget without any valid outcome
    /// is an error.
    pub fn fit(&self, delta_floor: f64) -> Result<Calibration, CalibrationError> {
        let mut cal = Calibration {
            budgets: self.budgets.clone(),
            mean: Vec::new(),
            delta: Vec::new(),
            success_rate: self.success_rates(),
            valid: self.actions.iter().map(Vec::len).collect(),
            attempts: vec![self.attempts; self.budgets.len()],
            delta_floor,
            reads_per_call: self.reads_per_call,
            backend: self.backend.clone(),
        };
        for (b, valid) in self.actions.iter().enumerate() {
            if valid.is_empty() {
                return Err(CalibrationError::NoValidOutcome {
                    budget: self.budgets[b],
                    attempts: self.attempts,
                });
            }
            let (mean, std) = mean_std(valid);
            cal.mean.push(mean);
            cal.delta.push(std.max(delta_floor));
        }
        Ok(cal)
    }
}

/// Anneal `samples_per_budget` times at every budget and record the action
/// of each valid best read.
pub fn run_campaign<B: Backend + ?Sized>(
    problem: &QuboProblem,
    cfg: &CalibrationConfig,
    backend: &B,
    seed: StreamSeed,
    exec: Exec,
) -> Result<Campaign, CalibrationError> {
    cfg.validate()?;
    let m = cfg.samples_per_budget;
    let jobs = cfg.budgets.len() * m;
    let outcomes: Vec<Result<Option<f64>, BackendError>> = par::map_range(exec, jobs, |job| {
        let (b, k) = (job / m, job % m);
        let req = AnnealRequest {
            problem,
            budget: cfg.budgets[b],
            seed: seed.split(b as u64).split(k as u64),
            reads: cfg.reads_per_call,
        };
        let out = backend.anneal(&req)?;
        Ok(qubo::decode(problem, &out.best.bits).ok().map(|p| p.action))
    });
    let mut actions = Vec::with_capacity(cfg.budgets.len());
    for chunk in outcomes.chunks(m) {
        let mut valid = Vec::new();
        for a in chunk {
            if let Some(s) = a.clone()? {
                valid.push(s);
            }
        }
        actions.push(valid);
    }
    Ok(Campaign {
        budgets: cfg.budgets.clone(),
        attempts: m,
        actions,
        reads_per_call: cfg.reads_per_call,
        backend: backend.id(),
    })
}

/// Run the campaign and fit the per-budget Gaussian model.
pub fn calibrate<B: Backend + ?Sized>(
    problem: &QuboProblem,
    cfg: &CalibrationConfig,
    backend: &B,
    seed: StreamSeed,
    exec: Exec,
) -> Result<Calibration, CalibrationError> {
    run_campaign(problem, cfg, backend, seed, exec)?.fit(cfg.delta_floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::from_weighted_edges;
    use crate::qubo::{brute_force_ground, encode, encode_default};

    fn cal() -> Calibration {
        Calibration {
            budgets: vec![1.0, 3.0],
            mean: vec![2.0, 4.0],
            delta: vec![0.5, 1.5],
            success_rate: vec![1.0, 1.0],
            valid: vec![20, 20],
            attempts: vec![20, 20],
            delta_floor: DELTA_FLOOR,
            reads_per_call: 1,
            backend: "test".into(),
        }
    }

    #[test]
    fn density_peak_and_one_sigma() {
        let c = cal();
        let peak = outcome_density(&c, 2.0, 1.0).unwrap();
        assert!((peak - 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * 0.5)).abs() < 1e-12);
        let side = outcome_density(&c, 2.5, 1.0).unwrap();
        assert!((side - peak * (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn midpoint_interpolation() {
        assert_eq!(cal().interpolate(2.0).unwrap(), (3.0, 1.0));
    }

    #[test]
    fn out_of_grid_budget_errors() {
        assert!(matches!(
            outcome_density(&cal(), 1.0, 3.5),
            Err(CalibrationError::OutOfRange { .. })
        ));
    }

    #[test]
    fn density_integrates_to_one() {
        let c = cal();
        let (lo, hi, n) = (-20.0, 30.0, 200_000);
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..=n)
            .map(|i| {
                let e = lo + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * outcome_density(&c, e, 2.2).unwrap()
            })
            .sum::<f64>()
            * h;
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn local_backend_is_deterministic() {
        let g = from_weighted_edges(4, &[(0, 1, 1.0), (1, 3, 0.6), (0, 2, 0.8), (2, 3, 0.5)], 0, 3).unwrap();
        let q = encode_default(&g).unwrap();
        let sa = SimulatedAnnealer::new(10.0);
        let req = AnnealRequest {
            problem: &q,
            budget: 5.0,
            seed: StreamSeed::new(12),
            reads: 3,
        };
        let a = sa.anneal(&req).unwrap();
        let b = sa.anneal(&req).unwrap();
        assert_eq!(a.reads, b.reads);
        assert!(a.reads.iter().all(|r| r.energy >= a.best.energy));
    }

    #[test]
    fn single_edge_found_with_generous_budget() {
        let g = from_weighted_edges(2, &[(0, 1, 1.0)], 0, 1).unwrap();
        let q = encode(&g, 10.0).unwrap();
        let ground = brute_force_ground(&q, Exec::Sequential).unwrap();
        let sa = SimulatedAnnealer::new(10.0);
        let hits = (0..100)
            .filter(|&s| {
                let req = AnnealRequest {
                    problem: &q,
                    budget: 10.0,
                    seed: StreamSeed::new(s),
                    reads: 1,
                };
                sa.anneal(&req).unwrap().best.bits == ground.bits
            })
            .count();
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn single_path_calibration_hits_floor() {
        let g = from_weighted_edges(3, &[(0, 1, 0.4), (1, 2, 1.0)], 0, 2).unwrap();
        let q = encode_default(&g).unwrap();
        let cfg = CalibrationConfig {
            budgets: vec![5.0, 10.0],
            samples_per_budget: 20,
            reads_per_call: 2,
            delta_floor: DELTA_FLOOR,
        };
        let c = calibrate(&q, &cfg, &SimulatedAnnealer::new(10.0), StreamSeed::new(1), Exec::Parallel).unwrap();
        for k in 0..2 {
            assert_eq!(c.delta[k], DELTA_FLOOR);
            assert!((c.mean[k] - 1.4).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_rejects_small_campaigns() {
        let g = from_weighted_edges(2, &[(0, 1, 1.0)], 0, 1).unwrap();
        let q = encode_default(&g).unwrap();
        let cfg = CalibrationConfig {
            budgets: vec![1.0],
            samples_per_budget: 5,
            reads_per_call: 1,
            delta_floor: DELTA_FLOOR,
        };
        assert_eq!(
            calibrate(&q, &cfg, &SimulatedAnnealer::new(1.0), StreamSeed::new(0), Exec::Sequential).unwrap_err(),
            CalibrationError::TooFewSamples(5)
        );
    }

    #[test]
    fn sweep_count_rounds_and_floors() {
        let sa = SimulatedAnnealer::new(0.5);
        assert_eq!(sa.sweeps(0.1), 1);
        assert_eq!(sa.sweeps(10.0), 5);
    }
}
