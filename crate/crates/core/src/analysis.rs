//! Post-chain statistics: edge-occupation autocorrelation, node path
//! density, and the summary bundle written after sampling.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annealer::Calibration;
use crate::graph::{CoarsePath, TransitionGraph};
use crate::tps::{ChainRun, ChainSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("chain {0} has no steps")]
    EmptyChain(usize),
    #[error("no chains to analyze")]
    NoChains,
    #[error("step {step}: {nodes:?} is not a path on the graph")]
    NotAPath { step: usize, nodes: Vec<usize> },
}

/// Edge indicator vectors of the chain state, one per step.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeOccupationSeries {
    pub n_edges: usize,
    pub steps: Vec<Vec<u8>>,
}

impl EdgeOccupationSeries {
    pub fn from_paths<'a>(
        g: &TransitionGraph,
        paths: impl IntoIterator<Item = &'a [usize]>,
    ) -> Result<Self, AnalysisError> {
        let index = g.edge_index();
        let steps = paths
            .into_iter()
            .enumerate()
            .map(|(step, nodes)| {
                let mut v = vec![0u8; g.edge_count()];
                for w in nodes.windows(2) {
                    let k = index
                        .get(&(w[0].min(w[1]), w[0].max(w[1])))
                        .ok_or_else(|| AnalysisError::NotAPath {
                            step,
                            nodes: nodes.to_vec(),
                        })?;
                    v[*k] = 1;
                }
                Ok(v)
            })
            .collect::<Result<_, _>>()?;
        Ok(EdgeOccupationSeries {
            n_edges: g.edge_count(),
            steps,
        })
    }

    pub fn from_run(g: &TransitionGraph, run: &ChainRun) -> Result<Self, AnalysisError> {
        Self::from_paths(g, run.states())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `G(N) = (1/|E|) sum_e [ <Gamma_e(k) Gamma_e(k+N)>_k - <Gamma_e>^2 ]`
/// with periodic wrap in `k`, for `N = 0..=max_lag`.
pub fn autocorrelation(series: &EdgeOccupationSeries, max_lag: usize) -> Vec<f64> {
    let m = series.len();
    let e = series.n_edges;
    if m == 0 || e == 0 {
        return vec![0.0; max_lag + 1];
    }
    let means: Vec<f64> = (0..e)
        .map(|j| series.steps.iter().map(|s| s[j] as f64).sum::<f64>() / m as f64)
        .collect();
    (0..=max_lag)
        .map(|lag| {
            let mut total = 0.0;
            for (j, mean) in means.iter().enumerate() {
                let mut c = 0usize;
                for k in 0..m {
                    c += (series.steps[k][j] & series.steps[(k + lag) % m][j]) as usize;
                }
                total += c as f64 / m as f64 - mean * mean;
            }
            total / e as f64
        })
        .collect()
}

/// Fraction of chain states whose path visits each node.
pub fn path_density<'a>(g: &TransitionGraph, paths: impl IntoIterator<Item = &'a [usize]>) -> Vec<f64> {
    let mut counts = vec![0usize; g.node_count()];
    let mut seen = vec![usize::MAX; g.node_count()];
    let mut m = 0usize;
    for (step, nodes) in paths.into_iter().enumerate() {
        m += 1;
        for &v in nodes {
            if seen[v] != step {
                seen[v] = step;
                counts[v] += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|c| if m == 0 { 0.0 } else { c as f64 / m as f64 })
        .collect()
}

/// Share of the top-decile density nodes lying within one hop of `path`.
pub fn corridor_fraction(g: &TransitionGraph, density: &[f64], path: &[usize]) -> f64 {
    let n = density.len();
    let top = n.div_ceil(10).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(a.cmp(&b)));
    let hops = g.hop_distance(path);
    let near = order[..top].iter().filter(|&&v| hops[v] <= 1).count();
    near as f64 / top as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub budget: f64,
    pub attempts: usize,
    pub valid: usize,
    pub wrong_topology: usize,
    pub success_rate: f64,
    pub mean: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub lag: usize,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "G_over_G0")]
    pub ratio: f64,
    /// Lag beyond a quarter of the chain, where the estimate is unreliable.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub summary: ChainSummary,
    pub autocorrelation: Vec<LagRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub calibration: Vec<CalibrationRow>,
    pub chains: Vec<ChainReport>,
    pub totals: ChainSummary,
    pub density: Vec<f64>,
    pub most_probable: CoarsePath,
    pub corridor_fraction: f64,
}

/// Assemble the report for a set of chains on one graph.
pub fn report(
    g: &TransitionGraph,
    runs: &[ChainRun],
    cal: &Calibration,
    most_probable: &CoarsePath,
    max_lag: usize,
) -> Result<Report, AnalysisError> {
    if runs.is_empty() {
        return Err(AnalysisError::NoChains);
    }
    let mut chains = Vec::with_capacity(runs.len());
    let mut totals = ChainSummary::default();
    for (c, run) in runs.iter().enumerate() {
        if run.records.is_empty() {
            return Err(AnalysisError::EmptyChain(c));
        }
        let series = EdgeOccupationSeries::from_run(g, run)?;
        let m = series.len();
        let lags = max_lag.min(m - 1);
        let gs = autocorrelation(&series, lags);
        let g0 = gs[0];
        chains.push(ChainReport {
            summary: run.summary,
            autocorrelation: gs
                .iter()
                .enumerate()
                .map(|(lag, &v)| LagRow {
                    lag,
                    g: v,
                    ratio: if g0 > 0.0 { v / g0 } else { f64::NAN },
                    unreliable: 4 * lag > m,
                })
                .collect(),
        });
        totals.steps += run.summary.steps;
        totals.accepted += run.summary.accepted;
        totals.rejected += run.summary.rejected;
        totals.wrong_topology += run.summary.wrong_topology;
        totals.backend_failure += run.summary.backend_failure;
    }
    let density = path_density(g, runs.iter().flat_map(|r| r.states()));
    let corridor = corridor_fraction(g, &density, &most_probable.nodes);
    let calibration = (0..cal.budgets.len())
        .map(|k| CalibrationRow {
            budget: cal.budgets[k],
            attempts: cal.attempts[k],
            valid: cal.valid[k],
            wrong_topology: cal.attempts[k] - cal.valid[k],
            success_rate: cal.success_rate[k],
            mean: cal.mean[k],
            delta: cal.delta[k],
        })
        .collect();
    Ok(Report {
        calibration,
        chains,
        totals,
        density,
        most_probable: most_probable.clone(),
        corridor_fraction: corridor,
    })
}

impl Report {
    /// `node,density`
    pub fn write_density_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "node,density")?;
        for (v, d) in self.density.iter().enumerate() {
            writeln!(out, "{v},{d}")?;
        }
        Ok(())
    }

    /// `lag,G,G_over_G0` for one chain.
    pub fn write_autocorrelation_csv<W: Write>(&self, chain: usize, mut out: W) -> io::Result<()> {
        writeln!(out, "lag,G,G_over_G0")?;
        for row in &self.chains[chain].autocorrelation {
            writeln!(out, "{},{},{}", row.lag, row.g, row.ratio)?;
        }
        Ok(())
    }

    /// Calibration summary, one row per budget.
    pub fn write_calibration_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "budget,attempts,valid,wrong_topology,success_rate,mean,delta")?;
        for r in &self.calibration {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.budget, r.attempts, r.valid, r.wrong_topology, r.success_rate, r.mean, r.delta
            )?;
        }
        Ok(())
    }

    /// Chain summary, one row per chain.
    pub fn write_chains_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "chain,steps,accepted,wrong_topology,rejected,backend_failure")?;
        for (c, ch) in self.chains.iter().enumerate() {
            let s = ch.summary;
            writeln!(
                out,
                "{c},{},{},{},{},{}",
                s.steps, s.accepted, s.wrong_topology, s.rejected, s.backend_failure
            )?;
        }
        Ok(())
    }
}
