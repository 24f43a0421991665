//! Markov chain over (path, sweep budget) pairs.
//!
//! Each step proposes a budget by an Ornstein–Uhlenbeck update, asks the
//! backend for a trial path at that budget, and accepts it with a
//! Metropolis rule that corrects for the non-uniform proposal, using the
//! calibrated Gaussian model of trial-path actions. The budget's target law
//! is the stationary law of its own proposal, `N(t0, 1/k)`.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annealer::{log_outcome_density, AnnealRequest, Backend, Calibration, CalibrationError};
use crate::graph::CoarsePath;
use crate::par::{self, Exec};
use crate::qubo::{self, QuboProblem};
use crate::rng::StreamSeed;

const INIT_ATTEMPTS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TpsError {
    #[error("invalid chain setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("no valid initial path in {0} anneals")]
    NoInitialPath(usize),
    #[error("chain aborted after {failures} backend failures in {steps} steps")]
    Aborted { failures: usize, steps: usize },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Budget the drift pulls towards.
    pub t0: f64,
    /// Drift stiffness; the stationary variance is `1/k`.
    pub k: f64,
    /// Proposal time step.
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Starting budget; defaults to `t0`.
    #[serde(default)]
    pub initial_budget: Option<f64>,
    #[serde(default = "one")]
    pub reads_per_call: usize,
}

fn one() -> usize {
    1
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), TpsError> {
        for (field, v) in [("t0", self.t0), ("k", self.k), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TpsError::Config {
                    field,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        if self.n_steps == 0 {
            return Err(TpsError::Config {
                field: "n_steps",
                reason: "must be > 0".into(),
            });
        }
        Ok(())
    }

    pub fn start_budget(&self) -> f64 {
        self.initial_budget.unwrap_or(self.t0)
    }
}

/// `t - dt k (t - t0) + sqrt(2 dt) xi`
pub fn propose_budget(t: f64, cfg: &ChainConfig, xi: f64) -> f64 {
    t - cfg.dt * cfg.k * (t - cfg.t0) + (2.0 * cfg.dt).sqrt() * xi
}

fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Log density of proposing `to` from `from`.
pub fn log_transition(to: f64, from: f64, cfg: &ChainConfig) -> f64 {
    log_normal(to, from - cfg.dt * cfg.k * (from - cfg.t0), 2.0 * cfg.dt)
}

/// Log density of the budget's target law `N(t0, 1/k)`.
pub fn log_p0(t: f64, cfg: &ChainConfig) -> f64 {
    log_normal(t, cfg.t0, 1.0 / cfg.k)
}

/// A chain state or a candidate: path action and budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub action: f64,
    pub budget: f64,
}

/// Log acceptance probability of moving from `old` to `new`, `<= 0`.
pub fn log_acceptance(old: Point, new: Point, cal: &Calibration, cfg: &ChainConfig) -> Result<f64, TpsError> {
    let budget_term = log_p0(new.budget, cfg) + log_transition(old.budget, new.budget, cfg)
        - log_p0(old.budget, cfg)
        - log_transition(new.budget, old.budget, cfg);
    let proposal_term = log_outcome_density(cal, old.action, old.budget)?
        - log_outcome_density(cal, new.action, new.budget)?;
    let r = budget_term + proposal_term + old.action - new.action;
    Ok(r.min(0.0))
}

pub fn acceptance(old: Point, new: Point, cal: &Calibration, cfg: &ChainConfig) -> Result<f64, TpsError> {
    log_acceptance(old, new, cal, cfg).map(f64::exp)
}

/// Log of the full forward flux `pi(a) q(b|a) acc(a->b)`, where the proposal
/// draws the budget first and then a path with the calibrated action law.
pub fn log_flux(a: Point, b: Point, cal: &Calibration, cfg: &ChainConfig) -> Result<f64, TpsError> {
    Ok(-a.action
        + log_p0(a.budget, cfg)
        + log_transition(b.budget, a.budget, cfg)
        + log_outcome_density(cal, b.action, b.budget)?
        + log_acceptance(a, b, cal, cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Accepted,
    Rejected,
    WrongTopology,
    BackendFailure,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Accepted => "accepted",
            Outcome::Rejected => "rejected",
            Outcome::WrongTopology => "wrong-topology",
            Outcome::BackendFailure => "backend-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Proposed budget.
    pub t_sweep: f64,
    pub outcome: Outcome,
    /// Action of the proposed path, when one was decoded.
    pub action: Option<f64>,
    pub accept_prob: f64,
    /// Proposed path, when one was decoded.
    pub proposed: Option<Vec<usize>>,
    /// Chain state after the step.
    pub state: Vec<usize>,
    pub state_budget: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub steps: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub wrong_topology: usize,
    pub backend_failure: usize,
}

impl ChainSummary {
    pub fn from_records(records: &[StepRecord]) -> Self {
        let mut s = ChainSummary {
            steps: records.len(),
            ..Default::default()
        };
        for r in records {
            match r.outcome {
                Outcome::Accepted => s.accepted += 1,
                Outcome::Rejected => s.rejected += 1,
                Outcome::WrongTopology => s.wrong_topology += 1,
                Outcome::BackendFailure => s.backend_failure += 1,
            }
        }
        s
    }

    pub fn reconciles(&self) -> bool {
        self.accepted + self.rejected + self.wrong_topology + self.backend_failure == self.steps
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRun {
    pub seed: StreamSeed,
    pub initial: CoarsePath,
    pub initial_budget: f64,
    pub records: Vec<StepRecord>,
    pub summary: ChainSummary,
}

impl ChainRun {
    /// Chain state path at every step.
    pub fn states(&self) -> impl Iterator<Item = &[usize]> {
        self.records.iter().map(|r| r.state.as_slice())
    }

    /// `step,t_sweep,action,outcome,accept_prob`
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,t_sweep,action,outcome,accept_prob")?;
        for r in &self.records {
            let action = r.action.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                r.step,
                r.t_sweep,
                action,
                r.outcome.as_str(),
                r.accept_prob
            )?;
        }
        Ok(())
    }
}

/// Run one chain. The state starts from the first valid path found by
/// annealing at the initial budget.
pub fn run_chain<B: Backend + ?Sized>(
    problem: &QuboProblem,
    cal: &Calibration,
    backend: &B,
    cfg: &ChainConfig,
    seed: StreamSeed,
) -> Result<ChainRun, TpsError> {
    cfg.validate()?;
    let mut budget = cfg.start_budget();
    if !cal.contains(budget) {
        let (lo, hi) = cal.range();
        return Err(CalibrationError::OutOfRange { budget, lo, hi }.into());
    }
    let init_seed = seed.split(0);
    let mut state = None;
    for attempt in 0..INIT_ATTEMPTS {
        let req = AnnealRequest {
            problem,
            budget,
            seed: init_seed.split(attempt as u64),
            reads: cfg.reads_per_call,
        };
        if let Ok(out) = backend.anneal(&req) {
            if let Ok(p) = qubo::decode(problem, &out.best.bits) {
                state = Some(p);
                break;
            }
        }
    }
    let mut state = state.ok_or(TpsError::NoInitialPath(INIT_ATTEMPTS))?;
    let initial = state.clone();
    let initial_budget = budget;

    let mut noise = seed.split(1).rng();
    let anneal_seed = seed.split(2);
    let mut records = Vec::with_capacity(cfg.n_steps);
    let mut failures = 0usize;
    for step in 0..cfg.n_steps {
        let xi: f64 = noise.sample(StandardNormal);
        let u: f64 = noise.random();
        let proposed_budget = propose_budget(budget, cfg, xi);
        let mut rec = StepRecord {
            step,
            t_sweep: proposed_budget,
            outcome: Outcome::Rejected,
            action: None,
            accept_prob: 0.0,
            proposed: None,
            state: Vec::new(),
            state_budget: budget,
            error: None,
        };
        if cal.contains(proposed_budget) {
            let req = AnnealRequest {
                problem,
                budget: proposed_budget,
                seed: anneal_seed.split(step as u64),
                reads: cfg.reads_per_call,
            };
            match backend.anneal(&req) {
                Err(e) => {
                    failures += 1;
                    rec.outcome = Outcome::BackendFailure;
                    rec.error = Some(e.to_string());
                    if 2 * failures > cfg.n_steps {
                        return Err(TpsError::Aborted {
                            failures,
                            steps: step + 1,
                        });
                    }
                }
                Ok(out) => match qubo::decode(problem, &out.best.bits) {
                    Err(_) => rec.outcome = Outcome::WrongTopology,
                    Ok(path) => {
                        let old = Point {
                            action: state.action,
                            budget,
                        };
                        let new = Point {
                            action: path.action,
                            budget: proposed_budget,
                        };
                        let a = acceptance(old, new, cal, cfg)?;
                        rec.action = Some(path.action);
                        rec.accept_prob = a;
                        rec.proposed = Some(path.nodes.clone());
                        if u < a {
                            rec.outcome = Outcome::Accepted;
                            state = path;
                            budget = proposed_budget;
                        }
                    }
                },
            }
        }
        rec.state = state.nodes.clone();
        rec.state_budget = budget;
        records.push(rec);
    }
    let summary = ChainSummary::from_records(&records);
    Ok(ChainRun {
        seed,
        initial,
        initial_budget,
        records,
        summary,
    })
}

/// Independent chains on split seeds.
pub fn run_chains<B: Backend + ?Sized>(
    problem: &QuboProblem,
    cal: &Calibration,
    backend: &B,
    cfg: &ChainConfig,
    n_chains: usize,
    exec: Exec,
) -> Vec<Result<ChainRun, TpsError>> {
    let root = StreamSeed::new(cfg.seed);
    par::map_range(exec, n_chains, |c| {
        run_chain(problem, cal, backend, cfg, root.split(c as u64))
    })
}

/// Budget trajectory of a chain that accepts every proposal.
pub fn free_budget_trajectory(cfg: &ChainConfig, n: usize, seed: StreamSeed) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut t = cfg.start_budget();
    (0..n)
        .map(|_| {
            t = propose_budget(t, cfg, rng.sample(StandardNormal));
            t
        })
        .collect()
}
