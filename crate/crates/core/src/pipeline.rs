//! End-to-end stages shared by the command-line tool and the tests, plus
//! small graph fixtures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, AnalysisError, Report};
use crate::annealer::{self, Backend, Calibration, CalibrationConfig, CalibrationError, Campaign, SimulatedAnnealer};
use crate::dynamics::{DynamicsError, LangevinParams, Potential};
use crate::graph::{self, CoarsePath, GraphConfig, GraphError, Threshold, TransitionGraph, WeightForm};
use crate::manifold::{self, ExploreConfig, Exploration, ManifoldError};
use crate::par::Exec;
use crate::qubo::{self, QuboError, QuboProblem};
use crate::rng::StreamSeed;
use crate::tps::{self, ChainConfig, ChainRun, TpsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("manifold: {0}")]
    Manifold(#[from] ManifoldError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("qubo: {0}")]
    Qubo(#[from] QuboError),
    #[error("annealer: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("tps: {0}")]
    Tps(#[from] TpsError),
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSection {
    pub potential: Potential,
    pub langevin: LangevinParams,
    /// Configurations of the two metastable states.
    pub endpoints: [Vec<f64>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Local,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealerSection {
    #[serde(default)]
    pub backend: BackendKind,
    /// Local backend settings.
    pub local: SimulatedAnnealer,
    /// Constraint strength; defaults to the sum of renormalized weights.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub calibration: CalibrationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsSection {
    pub chain: ChainConfig,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
}

fn default_chains() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSection {
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
}

fn default_max_lag() -> usize {
    20
}

/// Every stage's settings. `seed` is the root of all random streams and
/// replaces the seeds inside the sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dynamics: DynamicsSection,
    pub manifold: ExploreConfig,
    pub graph: GraphConfig,
    pub annealer: AnnealerSection,
    pub tps: TpsSection,
    #[serde(default = "default_analysis")]
    pub analysis: AnalysisSection,
}

fn default_analysis() -> AnalysisSection {
    AnalysisSection {
        max_lag: default_max_lag(),
    }
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Explore = 0,
    Calibrate = 1,
    Sample = 2,
}

impl PipelineConfig {
    fn stream(&self, stage: Stage) -> StreamSeed {
        StreamSeed::new(self.seed).split(stage as u64)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.dynamics.langevin.validate()?;
        self.manifold.validate()?;
        self.graph.validate()?;
        if let Some(a) = self.annealer.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(QuboError::Alpha(a).into());
            }
        }
        self.annealer.calibration.validate()?;
        self.tps.chain.validate()?;
        Ok(())
    }

    pub fn explore(&self, exec: Exec) -> Result<Exploration, PipelineError> {
        let mut cfg = self.manifold.clone();
        cfg.seed = self.stream(Stage::Explore).as_u64();
        let d = &self.dynamics;
        Ok(manifold::explore(
            &d.potential,
            &d.langevin,
            [&d.endpoints[0], &d.endpoints[1]],
            &cfg,
            exec,
        )?)
    }

    pub fn build_graph(&self, cloud: &manifold::PointCloud) -> Result<TransitionGraph, PipelineError> {
        let d = &self.dynamics;
        Ok(graph::build(
            cloud,
            &d.potential,
            &d.langevin,
            &self.graph,
            [&d.endpoints[0], &d.endpoints[1]],
        )?)
    }

    pub fn encode(&self, g: &TransitionGraph) -> Result<QuboProblem, PipelineError> {
        let alpha = self.annealer.alpha.unwrap_or_else(|| qubo::default_alpha(g));
        Ok(qubo::encode(g, alpha)?)
    }

    /// The raw calibration anneals, before any fit.
    pub fn campaign<B: Backend + ?Sized>(
        &self,
        q: &QuboProblem,
        backend: &B,
        exec: Exec,
    ) -> Result<Campaign, PipelineError> {
        Ok(annealer::run_campaign(
            q,
            &self.annealer.calibration,
            backend,
            self.stream(Stage::Calibrate),
            exec,
        )?)
    }

    pub fn calibrate<B: Backend + ?Sized>(
        &self,
        q: &QuboProblem,
        backend: &B,
        exec: Exec,
    ) -> Result<Calibration, PipelineError> {
        let campaign = self.campaign(q, backend, exec)?;
        Ok(campaign.fit(self.annealer.calibration.delta_floor)?)
    }

    pub fn sample<B: Backend + ?Sized>(
        &self,
        q: &QuboProblem,
        cal: &Calibration,
        backend: &B,
        exec: Exec,
    ) -> Result<Vec<ChainRun>, PipelineError> {
        let mut chain = self.tps.chain.clone();
        chain.seed = self.stream(Stage::Sample).as_u64();
        tps::run_chains(q, cal, backend, &chain, self.tps.n_chains, exec)
            .into_iter()
            .map(|r| r.map_err(PipelineError::from))
            .collect()
    }

    pub fn analyze(
        &self,
        g: &TransitionGraph,
        runs: &[ChainRun],
        cal: &Calibration,
    ) -> Result<Report, PipelineError> {
        let best = graph::dijkstra(g)?;
        Ok(analysis::report(g, runs, cal, &best, self.analysis.max_lag)?)
    }
}

/// Everything one local end-to-end run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub exploration: Exploration,
    pub graph: TransitionGraph,
    pub problem: QuboProblem,
    pub calibration: Calibration,
    pub runs: Vec<ChainRun>,
    pub most_probable: CoarsePath,
    pub report: Report,
}

/// Run every stage with the local annealer.
pub fn run_local(cfg: &PipelineConfig, exec: Exec) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let exploration = cfg.explore(exec)?;
    let graph = cfg.build_graph(&exploration.cloud)?;
    let problem = cfg.encode(&graph)?;
    let backend = &cfg.annealer.local;
    let calibration = cfg.calibrate(&problem, backend, exec)?;
    let runs = cfg.sample(&problem, &calibration, backend, exec)?;
    let most_probable = graph::dijkstra(&graph)?;
    let report = cfg.analyze(&graph, &runs, &calibration)?;
    Ok(PipelineOutput {
        exploration,
        graph,
        problem,
        calibration,
        runs,
        most_probable,
        report,
    })
}

/// Two-dimensional double well with settings sized for a graph of roughly
/// a hundred nodes.
pub fn double_well_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        seed,
        dynamics: DynamicsSection {
            potential: Potential::double_well(5.0),
            langevin: LangevinParams {
                mass: 1.0,
                friction: 1.0,
                kbt: 0.5,
                dt: 1e-3,
                dim: 2,
                n_atoms: 1,
            },
            endpoints: [vec![-1.0, 0.0], vec![1.0, 0.0]],
        },
        manifold: ExploreConfig {
            initial_steps: 1500,
            burst_steps: 400,
            stride: 10,
            shoot_distance: 0.1,
            overlap_threshold: 0.05,
            max_iterations: 30,
            n_dims: 2,
            neighbor_radius: None,
            max_dmap_points: 400,
            seed: 0,
        },
        graph: GraphConfig {
            energy_quantile: 0.95,
            diffusion_threshold: Threshold::NodeCount { target_nodes: 80 },
            diffusion_cutoff: Threshold::Pairwise {
                pairwise_quantile: 0.5,
            },
            cartesian_cutoff: Threshold::Pairwise {
                pairwise_quantile: 0.15,
            },
            weight_form: WeightForm::HamiltonJacobi,
            s0: None,
            coarse_dt: 0.05,
            sigma: None,
            ct: None,
            cv: None,
            diffusion: None,
            smoothing_radius: None,
            max_points: 1500,
            bandwidth: Some(0.5),
        },
        annealer: AnnealerSection {
            backend: BackendKind::Local,
            local: SimulatedAnnealer::new(10.0),
            alpha: None,
            calibration: CalibrationConfig {
                budgets: vec![50.0, 100.0, 150.0, 200.0, 250.0],
                samples_per_budget: 60,
                reads_per_call: 1,
                delta_floor: annealer::DELTA_FLOOR,
            },
        },
        tps: TpsSection {
            chain: ChainConfig {
                t0: 150.0,
                k: 2e-4,
                dt: 25.0,
                n_steps: 500,
                seed: 0,
                initial_budget: None,
                reads_per_call: 1,
            },
            n_chains: 3,
        },
        analysis: default_analysis(),
    }
}

/// Small hand-made graphs with known path laws.
pub mod fixtures {
    use crate::graph::{from_weighted_edges, TransitionGraph};

    /// Square `s=0, a=1, b=2, t=3`: two paths with actions 1.6 and 1.3.
    pub fn two_path() -> TransitionGraph {
        from_weighted_edges(4, &[(0, 1, 1.0), (1, 3, 0.6), (0, 2, 0.8), (2, 3, 0.5)], 0, 3)
            .expect("valid fixture")
    }

    /// Three disjoint two-hop routes from 0 to 4 with actions 1.5, 1.3, 1.8.
    pub fn three_path() -> TransitionGraph {
        from_weighted_edges(
            5,
            &[
                (0, 1, 1.0),
                (1, 4, 0.5),
                (0, 2, 0.7),
                (2, 4, 0.6),
                (0, 3, 0.9),
                (3, 4, 0.9),
            ],
            0,
            4,
        )
        .expect("valid fixture")
    }

    /// Six nodes, two rungs between two three-hop rails.
    pub fn six_node() -> TransitionGraph {
        from_weighted_edges(
            6,
            &[
                (0, 1, 0.4),
                (1, 2, 0.5),
                (2, 5, 0.3),
                (0, 3, 0.6),
                (3, 4, 0.7),
                (4, 5, 0.6),
                (1, 3, 1.0),
                (2, 4, 0.9),
            ],
            0,
            5,
        )
        .expect("valid fixture")
    }
}
