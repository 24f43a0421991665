use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qtps::pipeline::{double_well_config, fixtures, PipelineConfig};
use qtps_cli::{load_config, ChainsFile, OracleFile, RunConfig, GRAPH_FILE};
use tempfile::TempDir;

fn qtps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, pipeline: PipelineConfig) -> PathBuf {
    let run = RunConfig {
        output_dir: dir.join("out"),
        pipeline,
    };
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&run).unwrap()).unwrap();
    path
}

/// Settings sized for the six-node fixture.
fn fixture_config(seed: u64) -> PipelineConfig {
    let mut cfg = double_well_config(seed);
    cfg.annealer.calibration.budgets = vec![2.0, 5.0, 8.0];
    cfg.annealer.calibration.samples_per_budget = 20;
    cfg.tps.chain.t0 = 5.0;
    cfg.tps.chain.k = 0.5;
    cfg.tps.chain.dt = 0.5;
    cfg.tps.chain.n_steps = 400;
    cfg.tps.n_chains = 2;
    cfg
}

fn seed_graph(config: &Path) {
    let loaded = load_config(config).unwrap();
    loaded.write(GRAPH_FILE, fixtures::six_node()).unwrap();
}

fn run_ok(args: &[&str]) {
    let o = qtps(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = qtps(&["explore", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"));
}

#[test]
fn invalid_section_names_the_section() {
    let dir = TempDir::new().unwrap();
    let mut cfg = double_well_config(1);
    cfg.dynamics.langevin.dt = -1.0;
    let config = write_config(dir.path(), "bad.json", cfg);
    let o = qtps(&["explore", "-c", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dynamics"), "{}", stderr(&o));
}

#[test]
fn explore_is_reproducible_and_tags_both_basins() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "dw.json", double_well_config(1));
    let c = config.to_str().unwrap();
    run_ok(&["explore", "-c", c]);
    let first = fs::read(dir.path().join("out/cloud.json")).unwrap();
    run_ok(&["explore", "-c", c]);
    let second = fs::read(dir.path().join("out/cloud.json")).unwrap();
    assert_eq!(first, second);

    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let basins: std::collections::BTreeSet<String> = v["cloud"]["basin"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.to_string())
        .collect();
    assert!(basins.len() >= 2, "basins {basins:?}");
    assert_eq!(v["provenance"]["seed"], 1);
    assert_eq!(v["config_echo"]["seed"], 1);
}

#[test]
fn edited_config_makes_upstream_stale() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "a.json", fixture_config(3));
    seed_graph(&config);
    let mut edited = fixture_config(3);
    edited.annealer.calibration.samples_per_budget = 25;
    let config = write_config(dir.path(), "a.json", edited);
    let o = qtps(&["calibrate", "-c", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stale"), "{}", stderr(&o));
}

#[test]
fn analyze_without_chains_reports_missing_input() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "a.json", fixture_config(4));
    seed_graph(&config);
    let c = config.to_str().unwrap();
    run_ok(&["calibrate", "-c", c]);
    let o = qtps(&["analyze", "-c", c]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing chains"), "{}", stderr(&o));
}

#[test]
fn oracle_refuses_large_graphs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "a.json", fixture_config(5));
    let edges: Vec<(usize, usize, f64)> = (0..15).map(|i| (i, i + 1, 1.0)).collect();
    let line = qtps::graph::from_weighted_edges(16, &edges, 0, 15).unwrap();
    load_config(&config).unwrap().write(GRAPH_FILE, line).unwrap();
    let o = qtps(&["oracle", "-c", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("oracle refused"), "{}", stderr(&o));
}

#[test]
fn six_node_fixture_oracle_matches_sampled_mode() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "six.json", fixture_config(11));
    seed_graph(&config);
    let c = config.to_str().unwrap();
    for stage in ["calibrate", "sample", "analyze", "oracle"] {
        run_ok(&[stage, "-c", c]);
    }
    let out = dir.path().join("out");
    let oracle: OracleFile = serde_json::from_str(&fs::read_to_string(out.join("oracle.json")).unwrap()).unwrap();
    assert_eq!(oracle.ground_path.nodes, oracle.dijkstra.nodes);

    let chains: ChainsFile = serde_json::from_str(&fs::read_to_string(out.join("chains.json")).unwrap()).unwrap();
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for run in &chains.chains {
        for s in run.states() {
            *counts.entry(s.to_vec()).or_default() += 1;
        }
    }
    let mode = counts.into_iter().max_by_key(|(_, n)| *n).unwrap().0;
    assert_eq!(mode, oracle.ground_path.nodes);

    for name in ["chain_0.csv", "density.csv", "autocorrelation_1.csv", "report.json"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.contains("config_hash"), "{name} lacks provenance");
    }
}
