//! Coarse-grained transition graph: node reduction, edge construction,
//! renormalized path-action weights and the most probable path.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, EnergySurface, LangevinParams};
use crate::manifold::{self, DiffusionEmbedding, DiffusionOptions, ManifoldError, PointCloud};
use crate::{euclidean, quantile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("the cloud carries no per-point energies")]
    MissingEnergy,
    #[error("cloud has {cloud} points but the embedding has {embedding}")]
    Misaligned { cloud: usize, embedding: usize },
    #[error("no points left after the energy filter")]
    EmptyFilter,
    #[error("both endpoints map to the same point {point}")]
    DegenerateEndpoints { point: usize },
    #[error("need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("source and target are disconnected; components: {components:?}")]
    Disconnected { components: Vec<Vec<usize>> },
    #[error("node {node}: C_V * V_eff + s0 = {radicand} < 0; s0 must exceed {required_s0}")]
    Radicand {
        node: usize,
        radicand: f64,
        required_s0: f64,
    },
    #[error("edge ({i}, {j}) has non-positive weight {w}")]
    NonPositiveWeight { i: usize, j: usize, w: f64 },
    #[error("invalid graph setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("no path from {from} to {to}")]
    NoPath { from: usize, to: usize },
    #[error("node {0} is not in the graph")]
    UnknownNode(usize),
    #[error("nodes {0} and {1} are not adjacent")]
    NotAnEdge(usize, usize),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// A distance threshold, either absolute or read off a distance histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Absolute(f64),
    /// Quantile of nearest-neighbor distances.
    NearestNeighbor { nn_quantile: f64 },
    /// Quantile of all pairwise distances.
    Pairwise { pairwise_quantile: f64 },
    /// Node thinning only: the smallest threshold that leaves at most this
    /// many nodes, found by bisection.
    NodeCount { target_nodes: usize },
}

impl Threshold {
    /// Resolve against a point set. `f64::INFINITY` is a valid absolute value.
    pub fn resolve(&self, points: &[Vec<f64>]) -> Result<f64, GraphError> {
        match *self {
            Threshold::Absolute(v) => Ok(v),
            Threshold::NearestNeighbor { nn_quantile } => {
                let nn: Vec<f64> = (0..points.len())
                    .map(|i| {
                        (0..points.len())
                            .filter(|&j| j != i)
                            .map(|j| euclidean(&points[i], &points[j]))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                quantile(&nn, nn_quantile).ok_or(GraphError::TooFewNodes(points.len()))
            }
            Threshold::Pairwise { pairwise_quantile } => {
                let all: Vec<f64> = (0..points.len())
                    .flat_map(|i| (i + 1..points.len()).map(move |j| (i, j)))
                    .map(|(i, j)| euclidean(&points[i], &points[j]))
                    .collect();
                quantile(&all, pairwise_quantile).ok_or(GraphError::TooFewNodes(points.len()))
            }
            Threshold::NodeCount { .. } => Err(GraphError::Config {
                field: "threshold",
                reason: "a node count only applies to the thinning threshold".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightForm {
    /// Frequency-regularized (Laplace) form built on the Hamilton–Jacobi functional.
    HamiltonJacobi,
    /// Fixed-time-step form, symmetrized over the two endpoints.
    TimeLocal,
}

fn default_quantile() -> f64 {
    0.5
}

fn default_form() -> WeightForm {
    WeightForm::HamiltonJacobi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Points above this energy quantile are discarded.
    #[serde(default = "default_quantile")]
    pub energy_quantile: f64,
    /// Minimum diffusion distance between kept nodes.
    pub diffusion_threshold: Threshold,
    /// Edge requires diffusion distance below this.
    pub diffusion_cutoff: Threshold,
    /// Edge requires Cartesian distance below this.
    pub cartesian_cutoff: Threshold,
    #[serde(default = "default_form")]
    pub weight_form: WeightForm,
    /// Frequency offset of the Hamilton–Jacobi form.
    #[serde(default)]
    pub s0: Option<f64>,
    /// Coarse time resolution.
    pub coarse_dt: f64,
    /// Spatial resolution; when set and `ct` is not, `C_T` follows from it.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub ct: Option<f64>,
    #[serde(default)]
    pub cv: Option<f64>,
    /// Diffusion coefficient; defaults to `k_B T / (m gamma)`.
    #[serde(default)]
    pub diffusion: Option<f64>,
    /// Radius in diffusion space for effective-potential averaging;
    /// defaults to the resolved `diffusion_threshold`.
    #[serde(default)]
    pub smoothing_radius: Option<f64>,
    /// The diffusion map runs on at most this many filtered points, evenly
    /// subsampled.
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    /// Kernel bandwidth of the graph's diffusion map; `None` uses the
    /// neighborhood scale of the filtered cloud.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

fn default_max_points() -> usize {
    1500
}

impl GraphConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |field: &'static str, reason: &str| GraphError::Config {
            field,
            reason: reason.into(),
        };
        if !(0.0..=1.0).contains(&self.energy_quantile) {
            return Err(bad("energy_quantile", "must lie in [0, 1]"));
        }
        for (field, t) in [
            ("diffusion_threshold", self.diffusion_threshold),
            ("diffusion_cutoff", self.diffusion_cutoff),
            ("cartesian_cutoff", self.cartesian_cutoff),
        ] {
            match t {
                Threshold::Absolute(v) if v.is_nan() || v < 0.0 => {
                    return Err(bad(field, "must be >= 0"))
                }
                Threshold::NearestNeighbor { nn_quantile: q } | Threshold::Pairwise { pairwise_quantile: q }
                    if !(0.0..=1.0).contains(&q) =>
                {
                    return Err(bad(field, "quantile must lie in [0, 1]"))
                }
                Threshold::NodeCount { target_nodes } if field != "diffusion_threshold" || target_nodes < 2 => {
                    return Err(bad(field, "a node count of at least 2 only applies to diffusion_threshold"))
                }
                _ => {}
            }
        }
        if self.max_points < 3 {
            return Err(bad("max_points", "must be at least 3"));
        }
        if !(self.coarse_dt > 0.0) {
            return Err(bad("coarse_dt", "must be > 0"));
        }
        for (field, v) in [
            ("s0", self.s0),
            ("sigma", self.sigma),
            ("ct", self.ct),
            ("cv", self.cv),
            ("diffusion", self.diffusion),
            ("smoothing_radius", self.smoothing_radius),
            ("bandwidth", self.bandwidth),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(bad(field, "must be finite and > 0"));
                }
            }
        }
        Ok(())
    }
}

/// `C_T = (1 + m sigma^2 / (hbar_eff dt))^-1`
pub fn kinetic_renormalization(mass: f64, sigma: f64, hbar_eff: f64, dt: f64) -> f64 {
    1.0 / (1.0 + mass * sigma * sigma / (hbar_eff * dt))
}

/// Reduced node set, before edges exist.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    /// Cartesian coordinates per node.
    pub coords: Vec<Vec<f64>>,
    /// First diffusion coordinates per node.
    pub dmap: Vec<Vec<f64>>,
    /// Smoothed effective potential per node (empty until computed).
    pub veff: Vec<f64>,
    /// Index of each node in the cloud it was drawn from.
    pub source: Vec<usize>,
    pub s: usize,
    pub t: usize,
    /// Thinning threshold actually used, in diffusion units.
    pub threshold: f64,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Indices of points whose energy does not exceed the `q`-quantile.
pub fn energy_filter(cloud: &PointCloud, q: f64) -> Result<Vec<usize>, GraphError> {
    let energy = cloud.energy.as_ref().ok_or(GraphError::MissingEnergy)?;
    let cut = quantile(energy, q).ok_or(GraphError::EmptyFilter)?;
    let kept: Vec<usize> = (0..energy.len()).filter(|&i| energy[i] <= cut).collect();
    if kept.is_empty() {
        return Err(GraphError::EmptyFilter);
    }
    Ok(kept)
}

fn nearest(points: &[Vec<f64>], candidates: &[usize], q: &[f64]) -> usize {
    *candidates
        .iter()
        .min_by(|&&a, &&b| euclidean(&points[a], q).total_cmp(&euclidean(&points[b], q)))
        .expect("non-empty candidates")
}

/// Greedy thinning in diffusion space: starting at `start`, drop every
/// remaining candidate within `threshold` of the current node, move to the
/// nearest survivor, repeat. `end` is re-appended if it was dropped.
pub fn thin_by_diffusion(
    dmap: &[Vec<f64>],
    candidates: &[usize],
    start: usize,
    end: usize,
    threshold: f64,
) -> Vec<usize> {
    let mut remaining: Vec<usize> = candidates.iter().copied().filter(|&i| i != start).collect();
    let mut kept = vec![start];
    let mut current = start;
    loop {
        remaining.retain(|&i| euclidean(&dmap[i], &dmap[current]) > threshold);
        let Some(pos) = remaining
            .iter()
            .enumerate()
            .min_by(|a, b| {
                euclidean(&dmap[*a.1], &dmap[current])
                    .total_cmp(&euclidean(&dmap[*b.1], &dmap[current]))
                    .then(a.1.cmp(b.1))
            })
            .map(|(pos, _)| pos)
        else {
            break;
        };
        current = remaining.remove(pos);
        kept.push(current);
    }
    if !kept.contains(&end) {
        kept.push(end);
    }
    kept
}

/// Energy filter plus diffusion-space thinning. `embedding` must be aligned
/// index-wise with `cloud`. Returns the kept cloud indices; the first is
/// endpoint A's representative.
pub fn reduce(
    cloud: &PointCloud,
    embedding: &DiffusionEmbedding,
    cfg: &GraphConfig,
    endpoints: [&[f64]; 2],
) -> Result<NodeSet, GraphError> {
    if embedding.len() != cloud.len() {
        return Err(GraphError::Misaligned {
            cloud: cloud.len(),
            embedding: embedding.len(),
        });
    }
    let kept = energy_filter(cloud, cfg.energy_quantile)?;
    let dmap = embedding.coords(2);
    reduce_filtered(cloud, &dmap, &kept, cfg, endpoints)
}

fn reduce_filtered(
    cloud: &PointCloud,
    dmap: &[Vec<f64>],
    candidates: &[usize],
    cfg: &GraphConfig,
    endpoints: [&[f64]; 2],
) -> Result<NodeSet, GraphError> {
    let a = nearest(&cloud.points, candidates, endpoints[0]);
    let b = nearest(&cloud.points, candidates, endpoints[1]);
    if a == b {
        return Err(GraphError::DegenerateEndpoints { point: a });
    }
    let threshold = match cfg.diffusion_threshold {
        Threshold::NodeCount { target_nodes } => {
            let mut lo = 0.0;
            let mut hi = candidates
                .iter()
                .map(|&i| euclidean(&dmap[i], &dmap[a]))
                .fold(0.0, f64::max);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if thin_by_diffusion(dmap, candidates, a, b, mid).len() > target_nodes {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        }
        t => {
            let sub: Vec<Vec<f64>> = candidates.iter().map(|&i| dmap[i].clone()).collect();
            t.resolve(&sub)?
        }
    };
    let source = thin_by_diffusion(dmap, candidates, a, b, threshold);
    let t = source.iter().position(|&i| i == b).expect("end is always kept");
    Ok(NodeSet {
        coords: source.iter().map(|&i| cloud.points[i].clone()).collect(),
        dmap: source.iter().map(|&i| dmap[i].clone()).collect(),
        veff: Vec::new(),
        source,
        s: 0,
        t,
        threshold,
    })
}

/// Connected components of an undirected edge list over `n` nodes, each
/// sorted, ordered by smallest member.
pub fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Edge `(i, j)`, `i < j`, iff both the diffusion distance and the Cartesian
/// distance are below their cutoffs.
pub fn connect(nodes: &NodeSet, cfg: &GraphConfig) -> Result<Vec<(usize, usize)>, GraphError> {
    let n = nodes.len();
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    let dcut = cfg.diffusion_cutoff.resolve(&nodes.dmap)?;
    let ccut = cfg.cartesian_cutoff.resolve(&nodes.coords)?;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if euclidean(&nodes.dmap[i], &nodes.dmap[j]) < dcut
                && euclidean(&nodes.coords[i], &nodes.coords[j]) < ccut
            {
                edges.push((i, j));
            }
        }
    }
    let comps = components(n, &edges);
    let together = comps
        .iter()
        .any(|c| c.contains(&nodes.s) && c.contains(&nodes.t));
    if !together {
        return Err(GraphError::Disconnected { components: comps });
    }
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub coords: Vec<f64>,
    pub veff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
    pub w_renorm: f64,
}

/// Constants actually used to compute the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConstants {
    pub form: WeightForm,
    pub diffusion: f64,
    pub coarse_dt: f64,
    pub ct: f64,
    pub cv: f64,
    pub s0: f64,
    pub w_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub s: usize,
    pub t: usize,
    pub constants: WeightConstants,
    #[serde(default)]
    pub config: serde_json::Value,
}

/// An ordered node sequence and its action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarsePath {
    pub nodes: Vec<usize>,
    pub action: f64,
}

/// Hamilton–Jacobi link weight `|Qi - Qj| (Li + Lj) / (2 sqrt(D))`.
pub fn hj_weight(qi: &[f64], qj: &[f64], li: f64, lj: f64, diffusion: f64) -> f64 {
    euclidean(qi, qj) * (li + lj) / (2.0 * diffusion.sqrt())
}

/// Directed time-local weight `C_T |Qi - Qj|^2 / (4 D dt) + C_V V_i dt`.
pub fn time_local_weight(qi: &[f64], qj: &[f64], vi: f64, c: &WeightConstants) -> f64 {
    let d2 = euclidean(qi, qj).powi(2);
    c.ct * d2 / (4.0 * c.diffusion * c.coarse_dt) + c.cv * vi * c.coarse_dt
}

/// Assign raw and renormalized weights. `nodes.veff` must hold the smoothed
/// effective potential.
pub fn weigh(
    nodes: &NodeSet,
    edges: &[(usize, usize)],
    cfg: &GraphConfig,
    lp: &LangevinParams,
) -> Result<TransitionGraph, GraphError> {
    cfg.validate()?;
    let n = nodes.len();
    if nodes.veff.len() != n {
        return Err(GraphError::Config {
            field: "veff",
            reason: format!("{} values for {} nodes", nodes.veff.len(), n),
        });
    }
    if edges.is_empty() {
        return Err(GraphError::Disconnected {
            components: components(n, edges),
        });
    }
    let diffusion = cfg.diffusion.unwrap_or_else(|| lp.diffusion());
    let dt = cfg.coarse_dt;
    let ct = cfg.ct.unwrap_or_else(|| match cfg.sigma {
        Some(sigma) => kinetic_renormalization(lp.mass, sigma, lp.hbar_eff(), dt),
        None => 1.0 / lp.n_atoms as f64,
    });
    let cv = cfg.cv.unwrap_or_else(|| {
        let med = quantile(&nodes.veff, 0.5).unwrap_or(0.0) * dt;
        if med != 0.0 && med.is_finite() {
            1.0 / med.abs()
        } else {
            1.0
        }
    });
    let vreg: Vec<f64> = nodes.veff.iter().map(|v| cv * v).collect();
    let vmin = vreg.iter().copied().fold(f64::INFINITY, f64::min);
    let s0 = cfg
        .s0
        .unwrap_or(if vmin < 0.0 { 1.1 * vmin.abs() } else { 0.1 / dt });
    let mut constants = WeightConstants {
        form: cfg.weight_form,
        diffusion,
        coarse_dt: dt,
        ct,
        cv,
        s0,
        w_max: 0.0,
    };

    let raw: Vec<f64> = match cfg.weight_form {
        WeightForm::HamiltonJacobi => {
            let mut l = Vec::with_capacity(n);
            for (node, v) in vreg.iter().enumerate() {
                let radicand = v + s0;
                if radicand < 0.0 {
                    return Err(GraphError::Radicand {
                        node,
                        radicand,
                        required_s0: -v,
                    });
                }
                l.push(radicand.sqrt());
            }
            edges
                .iter()
                .map(|&(i, j)| hj_weight(&nodes.coords[i], &nodes.coords[j], l[i], l[j], diffusion))
                .collect()
        }
        WeightForm::TimeLocal => edges
            .iter()
            .map(|&(i, j)| {
                let wij = time_local_weight(&nodes.coords[i], &nodes.coords[j], nodes.veff[i], &constants);
                let wji = time_local_weight(&nodes.coords[j], &nodes.coords[i], nodes.veff[j], &constants);
                0.5 * (wij + wji)
            })
            .collect(),
    };
    for (&(i, j), &w) in edges.iter().zip(&raw) {
        if !(w > 0.0 && w.is_finite()) {
            return Err(GraphError::NonPositiveWeight { i, j, w });
        }
    }
    let w_max = raw.iter().copied().fold(0.0_f64, f64::max);
    constants.w_max = w_max;
    let graph = TransitionGraph {
        nodes: (0..n)
            .map(|id| Node {
                id,
                coords: nodes.coords[id].clone(),
                veff: nodes.veff[id],
            })
            .collect(),
        edges: edges
            .iter()
            .zip(&raw)
            .map(|(&(i, j), &w)| Edge {
                i: i.min(j),
                j: i.max(j),
                w,
                w_renorm: w / w_max,
            })
            .collect(),
        s: nodes.s,
        t: nodes.t,
        constants,
        config: serde_json::to_value(cfg).unwrap_or_default(),
    };
    Ok(graph)
}

/// Smoothed effective potential per node: the mean of the raw values over
/// cloud points within `radius` of the node in diffusion space.
pub fn node_effective_potential<P: EnergySurface + ?Sized>(
    nodes: &NodeSet,
    cloud_points: &[Vec<f64>],
    cloud_dmap: &[Vec<f64>],
    radius: f64,
    p: &P,
    lp: &LangevinParams,
) -> Result<Vec<f64>, GraphError> {
    let raw: Vec<f64> = cloud_points
        .iter()
        .map(|q| dynamics::effective_potential(q, p, lp))
        .collect::<Result<_, _>>()?;
    let hoods: Vec<Vec<usize>> = nodes
        .dmap
        .iter()
        .zip(&nodes.source)
        .map(|(z, &own)| {
            let mut hood: Vec<usize> = (0..cloud_dmap.len())
                .filter(|&k| euclidean(&cloud_dmap[k], z) <= radius)
                .collect();
            if !hood.contains(&own) {
                hood.push(own);
            }
            hood
        })
        .collect();
    Ok(dynamics::smooth_effective_potential(&raw, &hoods)?)
}

/// Full graph construction from an explored cloud: energy filter, diffusion
/// map of the survivors, thinning, effective potential, edges, weights.
pub fn build<P: EnergySurface + ?Sized>(
    cloud: &PointCloud,
    p: &P,
    lp: &LangevinParams,
    cfg: &GraphConfig,
    endpoints: [&[f64]; 2],
) -> Result<TransitionGraph, GraphError> {
    cfg.validate()?;
    let mut kept = energy_filter(cloud, cfg.energy_quantile)?;
    if kept.len() > cfg.max_points {
        let m = kept.len();
        kept = (0..cfg.max_points).map(|i| kept[i * m / cfg.max_points]).collect();
    }
    let sub = cloud.select(&kept);
    let opts = DiffusionOptions {
        bandwidth: cfg.bandwidth,
        ..Default::default()
    };
    let emb = manifold::diffusion_map_with(&sub, 2, &opts)?;
    let dmap = emb.coords(2);
    let all: Vec<usize> = (0..sub.len()).collect();
    let mut nodes = reduce_filtered(&sub, &dmap, &all, cfg, endpoints)?;
    let radius = match cfg.smoothing_radius {
        Some(r) => r,
        None => nodes.threshold,
    };
    nodes.veff = node_effective_potential(&nodes, &sub.points, &dmap, radius, p, lp)?;
    let edges = connect(&nodes, cfg)?;
    weigh(&nodes, &edges, cfg, lp)
}

impl TransitionGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Map from unordered node pair `(min, max)` to edge index.
    pub fn edge_index(&self) -> HashMap<(usize, usize), usize> {
        self.edges
            .iter()
            .enumerate()
            .map(|(k, e)| ((e.i.min(e.j), e.i.max(e.j)), k))
            .collect()
    }

    /// Adjacency lists of `(neighbor, edge index)`, sorted by neighbor.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.i].push((e.j, k));
            adj[e.j].push((e.i, k));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    fn action_with(&self, path: &[usize], pick: impl Fn(&Edge) -> f64) -> Result<f64, GraphError> {
        let index = self.edge_index();
        let mut s = 0.0;
        for w in path.windows(2) {
            let k = index
                .get(&(w[0].min(w[1]), w[0].max(w[1])))
                .ok_or(GraphError::NotAnEdge(w[0], w[1]))?;
            s += pick(&self.edges[*k]);
        }
        Ok(s)
    }

    /// Action of a node sequence under renormalized weights.
    pub fn path_action(&self, path: &[usize]) -> Result<f64, GraphError> {
        self.action_with(path, |e| e.w_renorm)
    }

    /// Action of a node sequence under raw weights.
    pub fn raw_path_action(&self, path: &[usize]) -> Result<f64, GraphError> {
        self.action_with(path, |e| e.w)
    }

    /// Sum of all renormalized weights.
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.w_renorm).sum()
    }

    /// Shortest graph distance (hop count) from every node to the set `from`.
    pub fn hop_distance(&self, from: &[usize]) -> Vec<usize> {
        let adj = self.adjacency();
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = std::collections::VecDeque::new();
        for &v in from {
            dist[v] = 0;
            queue.push_back(v);
        }
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

#[derive(Debug, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap; ties pop the smaller node id first
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-action path from `s` to `t` under renormalized weights.
pub fn dijkstra(g: &TransitionGraph) -> Result<CoarsePath, GraphError> {
    dijkstra_between(g, g.s, g.t)
}

/// Minimum-action path between two nodes. Among equal-cost predecessors the
/// smaller node id wins.
pub fn dijkstra_between(g: &TransitionGraph, from: usize, to: usize) -> Result<CoarsePath, GraphError> {
    let n = g.nodes.len();
    for v in [from, to] {
        if v >= n {
            return Err(GraphError::UnknownNode(v));
        }
    }
    let adj = g.adjacency();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(HeapEntry { cost: 0.0, node: from });
    while let Some(HeapEntry { cost, node: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == to {
            break;
        }
        for &(v, k) in &adj[u] {
            if done[v] {
                continue;
            }
            let nd = cost + g.edges[k].w_renorm;
            if nd < dist[v] || (nd == dist[v] && u < pred[v]) {
                dist[v] = nd;
                pred[v] = u;
                heap.push(HeapEntry { cost: nd, node: v });
            }
        }
    }
    if !dist[to].is_finite() {
        return Err(GraphError::NoPath { from, to });
    }
    let mut nodes = vec![to];
    let mut v = to;
    while v != from {
        v = pred[v];
        nodes.push(v);
    }
    nodes.reverse();
    let action = g.path_action(&nodes)?;
    Ok(CoarsePath { nodes, action })
}

/// Build a graph directly from an edge list with raw weights; used for
/// fixtures and tests. Coordinates are placeholders.
pub fn from_weighted_edges(
    n: usize,
    edges: &[(usize, usize, f64)],
    s: usize,
    t: usize,
) -> Result<TransitionGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    for &(i, j, w) in edges {
        if i >= n || j >= n {
            return Err(GraphError::UnknownNode(i.max(j)));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(GraphError::NonPositiveWeight { i, j, w });
        }
    }
    let w_max = edges.iter().map(|e| e.2).fold(0.0_f64, f64::max);
    Ok(TransitionGraph {
        nodes: (0..n)
            .map(|id| Node {
                id,
                coords: vec![id as f64],
                veff: 0.0,
            })
            .collect(),
        edges: edges
            .iter()
            .map(|&(i, j, w)| Edge {
                i: i.min(j),
                j: i.max(j),
                w,
                w_renorm: w / w_max,
            })
            .collect(),
        s,
        t,
        constants: WeightConstants {
            form: WeightForm::HamiltonJacobi,
            diffusion: 1.0,
            coarse_dt: 1.0,
            ct: 1.0,
            cv: 1.0,
            s0: 1.0,
            w_max,
        },
        config: serde_json::Value::Null,
    })
}
