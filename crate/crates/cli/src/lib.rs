//! Stage commands behind the `qtps` binary.
//!
//! Every stage reads one JSON config, checks that its upstream artifacts were
//! produced from the same config (by SHA-256 of the canonical config), runs,
//! and writes artifacts that embed the config echo, its hash and the seed.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use qtps::analysis::{AnalysisError, Report};
use qtps::annealer::{Backend, BackendError, Calibration, CalibrationError, RemoteBackend};
use qtps::graph::{self, CoarsePath, TransitionGraph};
use qtps::manifold::Exploration;
use qtps::pipeline::{BackendKind, PipelineConfig, PipelineError};
use qtps::qubo::{self, BinaryAssignment, PathLaw, QuboError, Violation};
use qtps::tps::{ChainRun, TpsError};
use qtps::Exec;

pub const CLOUD_FILE: &str = "cloud.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const CHAINS_FILE: &str = "chains.json";
pub const REPORT_FILE: &str = "report.json";
pub const ORACLE_FILE: &str = "oracle.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("config section `{section}`: {message}")]
    Section { section: &'static str, message: String },
    #[error("missing {what}: {path} does not exist")]
    MissingInput { what: &'static str, path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: unreadable artifact: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("{path} is stale: built from config {found}, current config is {expected}")]
    Provenance {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("oracle refused: {0}")]
    Oracle(QuboError),
    #[error("brute-force ground state is not a path: {0}")]
    GroundNotPath(Violation),
    #[error("remote backend: {0}")]
    Remote(BackendError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    /// 0 success, 2 usage/config, 3 numeric/validation, 4 remote backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Config { .. }
            | CliError::Section { .. }
            | CliError::MissingInput { .. }
            | CliError::Io { .. } => 2,
            CliError::Artifact { .. }
            | CliError::Provenance { .. }
            | CliError::Oracle(_)
            | CliError::GroundNotPath(_) => 3,
            CliError::Remote(_) => 4,
            CliError::Pipeline(e) => match e {
                PipelineError::Calibration(CalibrationError::Backend(_))
                | PipelineError::Tps(TpsError::Aborted { .. })
                | PipelineError::Tps(TpsError::Calibration(CalibrationError::Backend(_))) => 4,
                _ => 3,
            },
        }
    }
}

/// The pipeline config plus where artifacts go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("qtps-out")
}

/// A loaded config with its verbatim echo and hash.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub run: RunConfig,
    pub echo: serde_json::Value,
    pub hash: String,
}

/// SHA-256 over the compact serialization of the pipeline sections. The
/// output directory is excluded so artifacts can be moved.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn load_config(path: &Path) -> Result<Loaded, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("config file {} not found", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let echo: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let run: RunConfig = serde_json::from_value(echo.clone()).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    validate_sections(&run.pipeline)?;
    let hash = config_hash(&run.pipeline);
    Ok(Loaded { run, echo, hash })
}

fn section<E: std::fmt::Display>(section: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Section {
        section,
        message: e.to_string(),
    }
}

/// Check every section before any stage runs.
pub fn validate_sections(cfg: &PipelineConfig) -> Result<(), CliError> {
    cfg.dynamics.langevin.validate().map_err(section("dynamics"))?;
    cfg.manifold.validate().map_err(section("manifold"))?;
    cfg.graph.validate().map_err(section("graph"))?;
    if let Some(a) = cfg.annealer.alpha {
        if !(a > 0.0 && a.is_finite()) {
            return Err(section("annealer")(QuboError::Alpha(a)));
        }
    }
    cfg.annealer.calibration.validate().map_err(section("annealer"))?;
    cfg.tps.chain.validate().map_err(section("tps"))?;
    if cfg.tps.n_chains == 0 {
        return Err(CliError::Section {
            section: "tps",
            message: "`n_chains` must be at least 1".into(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool: String,
}

/// A stage output: provenance, the config echo, and the payload's own
/// fields at the top level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub config_echo: serde_json::Value,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainsFile {
    pub chains: Vec<ChainRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub ground: BinaryAssignment,
    pub ground_path: CoarsePath,
    pub dijkstra: CoarsePath,
    pub law: PathLaw,
}

impl Loaded {
    fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash.clone(),
            seed: self.run.pipeline.seed,
            tool: concat!("qtps ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    fn csv_header(&self) -> String {
        format!("# qtps config_hash={} seed={}\n", self.hash, self.run.pipeline.seed)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.run.output_dir.join(name)
    }

    fn input(&self, given: Option<&Path>, name: &str) -> PathBuf {
        given.map(Path::to_path_buf).unwrap_or_else(|| self.out(name))
    }

    pub fn write<T: Serialize>(&self, name: &str, body: T) -> Result<PathBuf, CliError> {
        let artifact = Artifact {
            provenance: self.provenance(),
            config_echo: self.echo.clone(),
            body,
        };
        let path = self.out(name);
        let mut text = serde_json::to_string_pretty(&artifact).expect("artifact serializes");
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn write_csv(&self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.out(name);
        let mut buf = self.csv_header().into_bytes();
        fill(&mut buf).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        write_file(&path, &buf)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    /// Read an upstream artifact and insist it came from this config.
    pub fn read<T: DeserializeOwned>(&self, path: &Path, what: &'static str) -> Result<T, CliError> {
        if !path.exists() {
            return Err(CliError::MissingInput {
                what,
                path: path.to_path_buf(),
            });
        }
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let artifact: Artifact<T> = serde_json::from_str(&text).map_err(|e| CliError::Artifact {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if artifact.provenance.config_hash != self.hash {
            return Err(CliError::Provenance {
                path: path.to_path_buf(),
                found: artifact.provenance.config_hash,
                expected: self.hash.clone(),
            });
        }
        Ok(artifact.body)
    }

    fn backend(&self) -> Result<Box<dyn Backend>, CliError> {
        match self.run.pipeline.annealer.backend {
            BackendKind::Local => Ok(Box::new(self.run.pipeline.annealer.local.clone())),
            BackendKind::Remote => Ok(Box::new(RemoteBackend::from_env().map_err(CliError::Remote)?)),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut f = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    f.write_all(bytes).map_err(io_err)?;
    f.flush().map_err(io_err)
}

/// Upstream paths; `None` means the default file in the output directory.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub cloud: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub chains: Option<PathBuf>,
}

pub fn cmd_explore(cfg: &Loaded, exec: Exec) -> Result<PathBuf, CliError> {
    let ex = cfg.run.pipeline.explore(exec)?;
    info!(
        "explored {} points in {} iterations (converged: {})",
        ex.cloud.len(),
        ex.iterations,
        ex.converged
    );
    cfg.write(CLOUD_FILE, ex)
}

pub fn cmd_graph(cfg: &Loaded, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let ex: Exploration = cfg.read(&cfg.input(inputs.cloud.as_deref(), CLOUD_FILE), "cloud")?;
    let g = cfg.run.pipeline.build_graph(&ex.cloud)?;
    info!("graph: {} nodes, {} edges", g.node_count(), g.edge_count());
    cfg.write(GRAPH_FILE, g)
}

fn load_graph(cfg: &Loaded, inputs: &Inputs) -> Result<TransitionGraph, CliError> {
    cfg.read(&cfg.input(inputs.graph.as_deref(), GRAPH_FILE), "graph")
}

pub fn cmd_calibrate(cfg: &Loaded, inputs: &Inputs, exec: Exec) -> Result<PathBuf, CliError> {
    let g = load_graph(cfg, inputs)?;
    let problem = cfg.run.pipeline.encode(&g)?;
    let backend = cfg.backend()?;
    let cal = cfg.run.pipeline.calibrate(&problem, backend.as_ref(), exec)?;
    info!("success rate per budget: {:?}", cal.success_rate);
    cfg.write(CALIBRATION_FILE, cal)
}

pub fn cmd_sample(cfg: &Loaded, inputs: &Inputs, exec: Exec) -> Result<PathBuf, CliError> {
    let g = load_graph(cfg, inputs)?;
    let cal: Calibration = cfg.read(
        &cfg.input(inputs.calibration.as_deref(), CALIBRATION_FILE),
        "calibration",
    )?;
    let problem = cfg.run.pipeline.encode(&g)?;
    let backend = cfg.backend()?;
    let chains = cfg.run.pipeline.sample(&problem, &cal, backend.as_ref(), exec)?;
    for (c, run) in chains.iter().enumerate() {
        info!("chain {c}: {:?}", run.summary);
        cfg.write_csv(&format!("chain_{c}.csv"), |buf| run.write_csv(buf))?;
    }
    cfg.write(CHAINS_FILE, ChainsFile { chains })
}

pub fn cmd_analyze(cfg: &Loaded, inputs: &Inputs) -> Result<PathBuf, CliError> {
    let g = load_graph(cfg, inputs)?;
    let cal: Calibration = cfg.read(
        &cfg.input(inputs.calibration.as_deref(), CALIBRATION_FILE),
        "calibration",
    )?;
    let chains: ChainsFile = cfg.read(&cfg.input(inputs.chains.as_deref(), CHAINS_FILE), "chains")?;
    if chains.chains.is_empty() {
        return Err(PipelineError::Analysis(AnalysisError::NoChains).into());
    }
    let report: Report = cfg.run.pipeline.analyze(&g, &chains.chains, &cal)?;
    info!("corridor fraction {}", report.corridor_fraction);
    cfg.write_csv("density.csv", |buf| report.write_density_csv(buf))?;
    cfg.write_csv("calibration.csv", |buf| report.write_calibration_csv(buf))?;
    cfg.write_csv("chains.csv", |buf| report.write_chains_csv(buf))?;
    for c in 0..report.chains.len() {
        cfg.write_csv(&format!("autocorrelation_{c}.csv"), |buf| {
            report.write_autocorrelation_csv(c, buf)
        })?;
    }
    cfg.write(REPORT_FILE, report)
}

pub fn cmd_oracle(cfg: &Loaded, inputs: &Inputs, exec: Exec) -> Result<PathBuf, CliError> {
    let g = load_graph(cfg, inputs)?;
    let problem = cfg.run.pipeline.encode(&g)?;
    let law = qubo::enumerate_paths(&g, g.node_count()).map_err(CliError::Oracle)?;
    let ground = qubo::brute_force_ground(&problem, exec).map_err(CliError::Oracle)?;
    let ground_path = qubo::decode(&problem, &ground.bits).map_err(CliError::GroundNotPath)?;
    let dijkstra = graph::dijkstra(&g).map_err(PipelineError::from)?;
    cfg.write(
        ORACLE_FILE,
        OracleFile {
            ground,
            ground_path,
            dijkstra,
            law,
        },
    )
}
