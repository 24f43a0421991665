//! Collective-variable-free exploration of the low-dimensional manifold:
//! diffusion maps, boundary detection in the embedding, shooting beyond the
//! boundary, and the sample/shoot iteration between two metastable basins.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, EnergySurface, LangevinParams};
use crate::par::{self, Exec};
use crate::rng::StreamSeed;
use crate::{euclidean, mean_std, quantile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("point cloud needs at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("point {index} has {got} coordinates, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("{field} has {got} entries for {points} points")]
    TagLength {
        field: &'static str,
        got: usize,
        points: usize,
    },
    #[error("kernel bandwidth is not positive (mean distance {mean}, std {std})")]
    Bandwidth { mean: f64, std: f64 },
    #[error("eigensolver did not converge")]
    Eigen,
    #[error("hull dimension must be 2 or 3, got {0}")]
    HullDims(usize),
    #[error("embedding is degenerate in {dims} dimensions; no proper hull")]
    DegenerateHull { dims: usize },
    #[error("boundary point {index} has {found} neighbors within the radius (need 2)")]
    Neighborhood { index: usize, found: usize },
    #[error("boundary point {index} coincides with its neighbor centroid")]
    Direction { index: usize },
    #[error("invalid exploration setting `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// M configurations in d dimensions, optionally tagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<Vec<f64>>,
    #[serde(default)]
    pub basin: Vec<usize>,
    #[serde(default)]
    pub iteration: Vec<usize>,
}

impl PointCloud {
    /// Validated, deduplicated cloud without energies.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, ManifoldError> {
        let n = points.len();
        let mut cloud = Self {
            points,
            energy: None,
            basin: vec![0; n],
            iteration: vec![0; n],
        };
        cloud.dedup();
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn with_energy<P: EnergySurface + ?Sized>(mut self, p: &P) -> Self {
        self.energy = Some(self.points.iter().map(|q| p.energy(q)).collect());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), ManifoldError> {
        let m = self.points.len();
        if m < 2 {
            return Err(ManifoldError::TooFewPoints { need: 2, got: m });
        }
        let d = self.dim();
        for (index, q) in self.points.iter().enumerate() {
            if q.len() != d {
                return Err(ManifoldError::Dimension {
                    index,
                    expected: d,
                    got: q.len(),
                });
            }
            if q.iter().any(|x| !x.is_finite()) {
                return Err(ManifoldError::NonFinite { index });
            }
        }
        if let Some(e) = &self.energy {
            if e.len() != m {
                return Err(ManifoldError::TagLength {
                    field: "energy",
                    got: e.len(),
                    points: m,
                });
            }
        }
        for (field, tags) in [("basin", &self.basin), ("iteration", &self.iteration)] {
            if tags.len() != m {
                return Err(ManifoldError::TagLength {
                    field,
                    got: tags.len(),
                    points: m,
                });
            }
        }
        Ok(())
    }

    /// Drop exact duplicates, keeping the first occurrence.
    pub fn dedup(&mut self) {
        let mut seen = BTreeSet::new();
        let keep: Vec<usize> = (0..self.points.len())
            .filter(|&i| {
                let key: Vec<u64> = self.points[i].iter().map(|x| x.to_bits()).collect();
                seen.insert(key)
            })
            .collect();
        if keep.len() != self.points.len() {
            *self = self.select(&keep);
        }
    }

    /// Sub-cloud with the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |v: &Vec<usize>| {
            if v.len() == self.points.len() {
                idx.iter().map(|&i| v[i]).collect()
            } else {
                Vec::new()
            }
        };
        Self {
            points: idx.iter().map(|&i| self.points[i].clone()).collect(),
            energy: self
                .energy
                .as_ref()
                .map(|e| idx.iter().map(|&i| e[i]).collect()),
            basin: pick(&self.basin),
            iteration: pick(&self.iteration),
        }
    }
}

/// Pluggable distance between configurations.
pub type Metric = fn(&[f64], &[f64]) -> f64;

/// Dense symmetric distance matrix.
pub fn pairwise_distances(points: &[Vec<f64>], metric: Metric) -> DMatrix<f64> {
    let m = points.len();
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let v = metric(&points[i], &points[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// `mean - std` of the off-diagonal distances, falling back to the median
/// when that is not positive.
pub fn neighborhood_scale(distances: &DMatrix<f64>) -> Result<f64, ManifoldError> {
    let m = distances.nrows();
    let off: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| distances[(i, j)])
        .collect();
    if off.is_empty() {
        return Err(ManifoldError::TooFewPoints { need: 2, got: m });
    }
    let (mean, std) = mean_std(&off);
    let eps = mean - std;
    if eps > 0.0 {
        return Ok(eps);
    }
    match quantile(&off, 0.5) {
        Some(med) if med > 0.0 => Ok(med),
        _ => Err(ManifoldError::Bandwidth { mean, std }),
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionOptions {
    pub metric: Metric,
    /// Fixed kernel bandwidth; `None` uses [`neighborhood_scale`].
    pub bandwidth: Option<f64>,
    pub keep_transition: bool,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        Self {
            metric: euclidean,
            bandwidth: None,
            keep_transition: false,
        }
    }
}

/// Spectral embedding of a point cloud.
///
/// `psi[k][i]` is component `i` of eigenvector `k`; `psi[0]` is the trivial
/// constant eigenvector. Eigenvectors are normalised to unit norm under the
/// stationary measure of the kernel walk, so `psi[0]` is identically one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionEmbedding {
    pub eigenvalues: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub transition: Option<DMatrix<f64>>,
}

impl DiffusionEmbedding {
    pub fn len(&self) -> usize {
        self.psi.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nontrivial diffusion coordinates `(psi_1(i), ..., psi_n(i))` per point.
    pub fn coords(&self, n: usize) -> Vec<Vec<f64>> {
        let n = n.min(self.psi.len().saturating_sub(1));
        (0..self.len())
            .map(|i| (1..=n).map(|k| self.psi[k][i]).collect())
            .collect()
    }
}

pub fn diffusion_map(cloud: &PointCloud, n_keep: usize) -> Result<DiffusionEmbedding, ManifoldError> {
    diffusion_map_with(cloud, n_keep, &DiffusionOptions::default())
}

pub fn diffusion_map_with(
    cloud: &PointCloud,
    n_keep: usize,
    opts: &DiffusionOptions,
) -> Result<DiffusionEmbedding, ManifoldError> {
    let m = cloud.points.len();
    if m < n_keep + 1 || m < 2 {
        return Err(ManifoldError::TooFewPoints {
            need: (n_keep + 1).max(2),
            got: m,
        });
    }
    let dist = pairwise_distances(&cloud.points, opts.metric);
    let epsilon = match opts.bandwidth {
        Some(e) if e > 0.0 => e,
        Some(e) => {
            return Err(ManifoldError::Bandwidth { mean: e, std: 0.0 });
        }
        None => neighborhood_scale(&dist)?,
    };
    let kernel = dist.map(|d| (-(d * d) / (epsilon * epsilon)).exp());
    let degree: Vec<f64> = (0..m).map(|i| kernel.row(i).sum()).collect();
    let total: f64 = degree.iter().sum();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let sym = DMatrix::from_fn(m, m, |i, j| kernel[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let eig = SymmetricEigen::try_new(sym, 1e-14, 10_000).ok_or(ManifoldError::Eigen)?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut eigenvalues = Vec::with_capacity(n_keep + 1);
    let mut psi = Vec::with_capacity(n_keep + 1);
    for &k in order.iter().take(n_keep + 1) {
        let phi = eig.eigenvectors.column(k);
        let mut v: Vec<f64> = (0..m).map(|i| phi[i] * inv_sqrt[i]).collect();
        let norm = v
            .iter()
            .zip(&degree)
            .map(|(x, d)| x * x * d / total)
            .sum::<f64>()
            .sqrt();
        let lead = v
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for x in &mut v {
            *x *= sign / norm;
        }
        eigenvalues.push(eig.eigenvalues[k]);
        psi.push(v);
    }
    let transition = opts.keep_transition.then(|| {
        DMatrix::from_fn(m, m, |i, j| kernel[(i, j)] / degree[i])
    });
    Ok(DiffusionEmbedding {
        eigenvalues,
        psi,
        epsilon,
        transition,
    })
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Indices of the strict vertices of the 2-D convex hull (monotone chain).
pub fn hull_vertices_2d(points: &[Vec<f64>]) -> Result<Vec<usize>, ManifoldError> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return Err(ManifoldError::DegenerateHull { dims: 2 });
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(idx.iter())
        } else {
            Box::new(idx.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2
                && cross(&points[hull[hull.len() - 2]], &points[hull[hull.len() - 1]], &points[i]) <= 0.0
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    let set: BTreeSet<usize> = hull.into_iter().collect();
    if set.len() < 3 {
        return Err(ManifoldError::DegenerateHull { dims: 2 });
    }
    Ok(set.into_iter().collect())
}

fn sub3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Indices of the vertices of the 3-D convex hull (incremental algorithm).
pub fn hull_vertices_3d(points: &[Vec<f64>]) -> Result<Vec<usize>, ManifoldError> {
    let degenerate = ManifoldError::DegenerateHull { dims: 3 };
    let n = points.len();
    if n < 4 {
        return Err(degenerate);
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter().take(3))
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;

    let p0 = (0..n)
        .min_by(|&a, &b| points[a][0].total_cmp(&points[b][0]))
        .unwrap();
    let p1 = (0..n)
        .max_by(|&a, &b| {
            euclidean(&points[a][..3], &points[p0][..3])
                .total_cmp(&euclidean(&points[b][..3], &points[p0][..3]))
        })
        .unwrap();
    let axis = sub3(&points[p1], &points[p0]);
    if norm3(axis) <= tol {
        return Err(degenerate);
    }
    let line_dist = |i: usize| norm3(cross3(axis, sub3(&points[i], &points[p0]))) / norm3(axis);
    let p2 = (0..n).max_by(|&a, &b| line_dist(a).total_cmp(&line_dist(b))).unwrap();
    if line_dist(p2) <= tol {
        return Err(degenerate);
    }
    let normal = cross3(axis, sub3(&points[p2], &points[p0]));
    let plane_dist = |i: usize| dot3(normal, sub3(&points[i], &points[p0])) / norm3(normal);
    let p3 = (0..n)
        .max_by(|&a, &b| plane_dist(a).abs().total_cmp(&plane_dist(b).abs()))
        .unwrap();
    if plane_dist(p3).abs() <= tol {
        return Err(degenerate);
    }

    let centroid: Vec<f64> = (0..3)
        .map(|k| (points[p0][k] + points[p1][k] + points[p2][k] + points[p3][k]) / 4.0)
        .collect();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let orient = |f: [usize; 3]| -> [usize; 3] {
        let n = cross3(sub3(&points[f[1]], &points[f[0]]), sub3(&points[f[2]], &points[f[0]]));
        if dot3(n, sub3(&centroid, &points[f[0]])) > 0.0 {
            [f[0], f[2], f[1]]
        } else {
            f
        }
    };
    for f in [[p0, p1, p2], [p0, p1, p3], [p0, p2, p3], [p1, p2, p3]] {
        faces.push(orient(f));
    }
    let signed = |f: &[usize; 3], i: usize| -> f64 {
        let n = cross3(sub3(&points[f[1]], &points[f[0]]), sub3(&points[f[2]], &points[f[0]]));
        let len = norm3(n);
        if len == 0.0 {
            return f64::NEG_INFINITY;
        }
        dot3(n, sub3(&points[i], &points[f[0]])) / len
    };
    let seeds = [p0, p1, p2, p3];
    for i in 0..n {
        if seeds.contains(&i) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| signed(f, i) > tol).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut vis_edges = BTreeSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for e in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                vis_edges.insert(e);
            }
        }
        let horizon: Vec<(usize, usize)> = vis_edges
            .iter()
            .copied()
            .filter(|&(a, b)| !vis_edges.contains(&(b, a)))
            .collect();
        let mut kept: Vec<[usize; 3]> = faces
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| !v)
            .map(|(f, _)| *f)
            .collect();
        kept.extend(horizon.into_iter().map(|(a, b)| [a, b, i]));
        faces = kept;
    }
    let set: BTreeSet<usize> = faces.iter().flatten().copied().collect();
    Ok(set.into_iter().collect())
}

/// Indices of points on the convex hull of the first `n_dims` diffusion
/// coordinates.
pub fn boundary(embedding: &DiffusionEmbedding, n_dims: usize) -> Result<Vec<usize>, ManifoldError> {
    if !(2..=3).contains(&n_dims) {
        return Err(ManifoldError::HullDims(n_dims));
    }
    if embedding.psi.len() < n_dims + 1 {
        return Err(ManifoldError::Config {
            field: "n_dims",
            reason: format!("embedding keeps only {} coordinates", embedding.psi.len() - 1),
        });
    }
    let m = embedding.len();
    if m <= n_dims + 1 {
        return Err(ManifoldError::TooFewPoints {
            need: n_dims + 2,
            got: m,
        });
    }
    let coords = embedding.coords(n_dims);
    if n_dims == 2 {
        hull_vertices_2d(&coords)
    } else {
        hull_vertices_3d(&coords)
    }
}

/// New configuration beyond boundary point `b`, pushed a distance `c` past it
/// along the outward direction from the centroid of its neighbors, computed
/// in the local principal-component frame.
pub fn shoot(
    points: &[Vec<f64>],
    b: usize,
    neighbor_radius: f64,
    c: f64,
) -> Result<Vec<f64>, ManifoldError> {
    let qb = &points[b];
    let d = qb.len();
    let neighbors: Vec<&Vec<f64>> = points
        .iter()
        .enumerate()
        .filter(|&(j, q)| j != b && euclidean(q, qb) <= neighbor_radius)
        .map(|(_, q)| q)
        .collect();
    if neighbors.len() < 2 {
        return Err(ManifoldError::Neighborhood {
            index: b,
            found: neighbors.len(),
        });
    }
    let k = neighbors.len() as f64;
    let center = DVector::from_fn(d, |i, _| neighbors.iter().map(|q| q[i]).sum::<f64>() / k);
    let mut cov = DMatrix::zeros(d, d);
    for q in &neighbors {
        let r = DVector::from_fn(d, |i, _| q[i] - center[i]);
        cov += &r * r.transpose();
    }
    cov /= k;
    let eig = SymmetricEigen::try_new(cov, 1e-14, 10_000).ok_or(ManifoldError::Eigen)?;
    let loadings = eig.eigenvectors;
    let rel = DVector::from_fn(d, |i, _| qb[i] - center[i]);
    let projected = loadings.transpose() * rel;
    let len = projected.norm();
    if len == 0.0 || !len.is_finite() {
        return Err(ManifoldError::Direction { index: b });
    }
    let shot = &projected + &projected * (c / len);
    let back = loadings * shot + center;
    Ok(back.iter().copied().collect())
}

fn default_n_dims() -> usize {
    2
}

fn default_dmap_points() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    /// Length of the first burst in each basin.
    pub initial_steps: usize,
    /// Length of each burst started from a shot configuration.
    pub burst_steps: usize,
    /// Keep every `stride`-th integration step.
    pub stride: usize,
    /// Shooting distance beyond the boundary.
    pub shoot_distance: f64,
    /// Basins overlap when two points are closer than this.
    pub overlap_threshold: f64,
    pub max_iterations: usize,
    #[serde(default = "default_n_dims")]
    pub n_dims: usize,
    /// Neighbor radius for shooting; `None` uses mean - std of distances.
    #[serde(default)]
    pub neighbor_radius: Option<f64>,
    /// Diffusion maps run on at most this many points per basin.
    #[serde(default = "default_dmap_points")]
    pub max_dmap_points: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExploreConfig {
    pub fn validate(&self) -> Result<(), ManifoldError> {
        let bad = |field: &'static str, reason: &str| ManifoldError::Config {
            field,
            reason: reason.to_string(),
        };
        if self.initial_steps == 0 {
            return Err(bad("initial_steps", "must be at least 1"));
        }
        if self.burst_steps == 0 {
            return Err(bad("burst_steps", "must be at least 1"));
        }
        if !(self.shoot_distance > 0.0) {
            return Err(bad("shoot_distance", "must be > 0"));
        }
        if !(self.overlap_threshold > 0.0) {
            return Err(bad("overlap_threshold", "must be > 0"));
        }
        if !(2..=3).contains(&self.n_dims) {
            return Err(ManifoldError::HullDims(self.n_dims));
        }
        if self.max_dmap_points < self.n_dims + 2 {
            return Err(bad("max_dmap_points", "too small for the hull dimension"));
        }
        Ok(())
    }
}

/// Result of [`explore`]; `converged` is false when the iteration cap was
/// reached before the basins overlapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub cloud: PointCloud,
    pub iterations: usize,
    pub converged: bool,
    /// Total cloud size after each iteration (index 0 is the initial sampling).
    pub sizes: Vec<usize>,
    /// Shots skipped because a boundary point had too few neighbors.
    pub skipped_shots: usize,
}

fn min_cross_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flat_map(|p| b.iter().map(move |q| euclidean(p, q)))
        .fold(f64::INFINITY, f64::min)
}

fn evenly_spaced(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|i| i * len / max).collect()
    }
}

struct BasinState {
    points: Vec<Vec<f64>>,
    iteration: Vec<usize>,
}

fn expand_basin<P: EnergySurface + ?Sized>(
    basin: &BasinState,
    p: &P,
    lp: &LangevinParams,
    cfg: &ExploreConfig,
    seed: StreamSeed,
) -> Result<(Vec<Vec<f64>>, usize), ManifoldError> {
    let sub_idx = evenly_spaced(basin.points.len(), cfg.max_dmap_points);
    let sub: Vec<Vec<f64>> = sub_idx.iter().map(|&i| basin.points[i].clone()).collect();
    let sub_cloud = PointCloud {
        basin: vec![0; sub.len()],
        iteration: vec![0; sub.len()],
        points: sub,
        energy: None,
    };
    let emb = diffusion_map(&sub_cloud, cfg.n_dims)?;
    let hull = boundary(&emb, cfg.n_dims)?;
    let radius = match cfg.neighbor_radius {
        Some(r) => r,
        None => neighborhood_scale(&pairwise_distances(&sub_cloud.points, euclidean))?,
    };
    let mut starts = Vec::new();
    let mut skipped = 0;
    for &h in &hull {
        match shoot(&sub_cloud.points, h, radius, cfg.shoot_distance) {
            Ok(q) => starts.push(q),
            Err(ManifoldError::Neighborhood { .. } | ManifoldError::Direction { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let trajectories =
        dynamics::bursts(&starts, cfg.burst_steps, cfg.stride, p, lp, seed, Exec::Sequential)?;
    let new_points = trajectories.into_iter().flat_map(|t| t.points).collect();
    Ok((new_points, skipped))
}

/// Alternate local sampling and shooting from two seed configurations until
/// the two explored regions overlap or `max_iterations` is reached.
pub fn explore<P: EnergySurface + ?Sized>(
    p: &P,
    lp: &LangevinParams,
    seeds: [&[f64]; 2],
    cfg: &ExploreConfig,
    exec: Exec,
) -> Result<Exploration, ManifoldError> {
    cfg.validate()?;
    lp.validate()?;
    let root = StreamSeed::new(cfg.seed);
    let initial = par::map_range(exec, 2, |b| {
        dynamics::burst_strided(
            seeds[b],
            cfg.initial_steps,
            cfg.stride,
            p,
            lp,
            root.split(b as u64).split(0),
        )
    });
    let mut basins = Vec::with_capacity(2);
    for t in initial {
        let t = t?;
        basins.push(BasinState {
            iteration: vec![0; t.points.len()],
            points: t.points,
        });
    }
    let total = |b: &[BasinState]| b.iter().map(|s| s.points.len()).sum::<usize>();
    let mut sizes = vec![total(&basins)];
    let mut iterations = 0;
    let mut skipped_shots = 0;
    let converged = loop {
        if min_cross_distance(&basins[0].points, &basins[1].points) < cfg.overlap_threshold {
            break true;
        }
        if iterations >= cfg.max_iterations {
            break false;
        }
        iterations += 1;
        let grown = par::map_range(exec, 2, |b| {
            expand_basin(
                &basins[b],
                p,
                lp,
                cfg,
                root.split(b as u64).split(iterations as u64),
            )
        });
        for (b, result) in grown.into_iter().enumerate() {
            let (new_points, skipped) = result?;
            skipped_shots += skipped;
            basins[b].iteration.extend(std::iter::repeat_n(iterations, new_points.len()));
            basins[b].points.extend(new_points);
        }
        sizes.push(total(&basins));
    };

    let mut cloud = PointCloud {
        points: Vec::new(),
        energy: None,
        basin: Vec::new(),
        iteration: Vec::new(),
    };
    for (b, state) in basins.into_iter().enumerate() {
        cloud.basin.extend(std::iter::repeat_n(b, state.points.len()));
        cloud.iteration.extend(state.iteration);
        cloud.points.extend(state.points);
    }
    cloud.dedup();
    let cloud = cloud.with_energy(p);
    cloud.validate()?;
    Ok(Exploration {
        cloud,
        iterations,
        converged,
        sizes,
        skipped_shots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Potential;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blob(rng: &mut impl Rng, n: usize, center: [f64; 2], width: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                vec![center[0] + width * x, center[1] + width * y]
            })
            .collect()
    }

    fn embedding_from(coords: Vec<Vec<f64>>) -> DiffusionEmbedding {
        let n = coords[0].len();
        let m = coords.len();
        let mut psi = vec![vec![1.0; m]];
        for k in 0..n {
            psi.push(coords.iter().map(|c| c[k]).collect());
        }
        DiffusionEmbedding {
            eigenvalues: vec![1.0; n + 1],
            psi,
            epsilon: 1.0,
            transition: None,
        }
    }

    /// Brute-force hull membership: a point is a vertex unless it lies in a
    /// closed triangle spanned by three other points or on a segment between
    /// two others.
    fn brute_force_hull(points: &[Vec<f64>]) -> Vec<usize> {
        let n = points.len();
        let inside_triangle = |p: &[f64], a: &[f64], b: &[f64], c: &[f64]| {
            let d1 = cross(a, b, p);
            let d2 = cross(b, c, p);
            let d3 = cross(c, a, p);
            let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
            let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
            !(neg && pos)
        };
        (0..n)
            .filter(|&i| {
                for j in 0..n {
                    for k in j + 1..n {
                        for l in k + 1..n {
                            if [j, k, l].contains(&i) {
                                continue;
                            }
                            if cross(&points[j], &points[k], &points[l]) == 0.0 {
                                continue;
                            }
                            if inside_triangle(&points[i], &points[j], &points[k], &points[l]) {
                                return false;
                            }
                        }
                    }
                }
                true
            })
            .collect()
    }

    #[test]
    fn cloud_validation_and_dedup() {
        assert!(matches!(
            PointCloud::new(vec![vec![0.0, 0.0]]),
            Err(ManifoldError::TooFewPoints { .. })
        ));
        assert!(matches!(
            PointCloud::new(vec![vec![0.0, 0.0], vec![f64::NAN, 1.0]]),
            Err(ManifoldError::NonFinite { index: 1 })
        ));
        let c = PointCloud::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(c.len(), 2);
        assert!(matches!(
            PointCloud::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            Err(ManifoldError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn simplex_gives_uniform_kernel_and_degenerate_spectrum() {
        let m = 6;
        let pts: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let cloud = PointCloud::new(pts).unwrap();
        let opts = DiffusionOptions {
            keep_transition: true,
            ..Default::default()
        };
        let emb = diffusion_map_with(&cloud, m - 1, &opts).unwrap();
        let p = emb.transition.as_ref().unwrap();
        let off = p[(0, 1)];
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    assert!((p[(i, j)] - off).abs() < 1e-15);
                }
            }
        }
        for l in &emb.eigenvalues[1..] {
            assert!((l - emb.eigenvalues[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn trivial_eigenpair_and_row_sums() {
        let mut rng = StreamSeed::new(4).rng();
        let cloud = PointCloud::new(blob(&mut rng, 40, [0.0, 0.0], 1.0)).unwrap();
        let opts = DiffusionOptions {
            keep_transition: true,
            ..Default::default()
        };
        let emb = diffusion_map_with(&cloud, 3, &opts).unwrap();
        assert!((emb.eigenvalues[0] - 1.0).abs() < 1e-9);
        assert!(emb.psi[0].iter().all(|x| (x - 1.0).abs() < 1e-8));
        for l in &emb.eigenvalues {
            assert!(*l > -1.0 && *l <= 1.0 + 1e-12);
        }
        assert!(emb.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let p = emb.transition.unwrap();
        for i in 0..cloud.len() {
            assert!((p.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_coordinate_separates_blobs() {
        let mut rng = StreamSeed::new(11).rng();
        let mut pts = blob(&mut rng, 20, [0.0, 0.0], 0.1);
        pts.extend(blob(&mut rng, 20, [1.0, 0.0], 0.1));
        let cloud = PointCloud::new(pts).unwrap();
        let emb = diffusion_map(&cloud, 2).unwrap();
        let first = emb.psi[1][0].signum();
        for i in 0..40 {
            let expected = if i < 20 { first } else { -first };
            assert_eq!(emb.psi[1][i].signum(), expected, "point {i}");
        }
    }

    #[test]
    fn too_small_cloud_for_n_keep() {
        let cloud = PointCloud::new(vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert!(matches!(
            diffusion_map(&cloud, 3),
            Err(ManifoldError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn bandwidth_falls_back_to_median() {
        // four mutually close points and one far outlier make mean - std negative
        let n = 5;
        let mut d = DMatrix::zeros(n, n);
        let mut off = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let v = if j == 4 { 100.0 } else { 1.0 };
                d[(i, j)] = v;
                d[(j, i)] = v;
                off.push(v);
            }
        }
        let (mean, std) = mean_std(&off);
        assert!(mean - std <= 0.0);
        assert_eq!(neighborhood_scale(&d).unwrap(), 1.0);
    }

    #[test]
    fn square_with_interior_point() {
        let emb = embedding_from(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.5, 0.4],
        ]);
        assert_eq!(boundary(&emb, 2).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn circle_points_are_all_extreme() {
        let coords: Vec<Vec<f64>> = (0..100)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 100.0;
                vec![a.cos(), a.sin()]
            })
            .collect();
        assert_eq!(boundary(&embedding_from(coords), 2).unwrap().len(), 100);
    }

    #[test]
    fn hull_matches_brute_force() {
        for seed in 0..5 {
            let mut rng = StreamSeed::new(seed).rng();
            let pts = blob(&mut rng, 50, [0.0, 0.0], 1.0);
            let fast = boundary(&embedding_from(pts.clone()), 2).unwrap();
            assert_eq!(fast, brute_force_hull(&pts));
        }
    }

    #[test]
    fn collinear_embedding_is_degenerate() {
        let coords: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        assert_eq!(
            boundary(&embedding_from(coords), 2).unwrap_err(),
            ManifoldError::DegenerateHull { dims: 2 }
        );
        let emb = embedding_from(vec![vec![0.0, 0.0]; 6]);
        assert_eq!(boundary(&emb, 4).unwrap_err(), ManifoldError::HullDims(4));
    }

    #[test]
    fn cube_hull_in_three_dimensions() {
        let mut coords = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    coords.push(vec![x, y, z]);
                }
            }
        }
        coords.push(vec![0.5, 0.5, 0.5]);
        coords.push(vec![0.5, 0.5, 1.0]); // on a face, not a vertex
        coords.push(vec![0.2, 0.7, 0.4]);
        let hull = boundary(&embedding_from(coords), 3).unwrap();
        assert_eq!(hull, (0..8).collect::<Vec<_>>());
        let flat: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 % 3.0, i as f64, 0.0]).collect();
        assert!(matches!(
            boundary(&embedding_from(flat), 3),
            Err(ManifoldError::DegenerateHull { dims: 3 })
        ));
    }

    #[test]
    fn random_3d_hull_contains_extremes() {
        let mut rng = StreamSeed::new(8).rng();
        let coords: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let hull = hull_vertices_3d(&coords).unwrap();
        // extreme points along each axis must be vertices
        for k in 0..3 {
            let hi = (0..80).max_by(|&a, &b| coords[a][k].total_cmp(&coords[b][k])).unwrap();
            let lo = (0..80).min_by(|&a, &b| coords[a][k].total_cmp(&coords[b][k])).unwrap();
            assert!(hull.contains(&hi) && hull.contains(&lo));
        }
        // every non-vertex must lie inside the hull: the separating test
        // along random directions never finds it strictly beyond all vertices
        for _ in 0..200 {
            let u: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let proj = |i: usize| coords[i].iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            let best_all = (0..80).map(proj).fold(f64::NEG_INFINITY, f64::max);
            let best_hull = hull.iter().map(|&i| proj(i)).fold(f64::NEG_INFINITY, f64::max);
            assert!((best_all - best_hull).abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_shot_moves_one_unit() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
        let q = shoot(&pts, 4, 2.5, 1.0).unwrap();
        assert!((q[0] - 5.0).abs() < 1e-12 && q[1].abs() < 1e-12, "{q:?}");
    }

    #[test]
    fn small_shot_lands_on_boundary_point() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 1.1], vec![1.4, 1.3]];
        let q = shoot(&pts, 3, 5.0, 1e-12).unwrap();
        assert!(euclidean(&q, &pts[3]) < 1e-10);
    }

    #[test]
    fn shot_is_strictly_beyond_boundary() {
        for seed in 0..100 {
            let mut rng = StreamSeed::new(seed).rng();
            let pts = blob(&mut rng, 30, [0.0, 0.0], 1.0);
            let hull = hull_vertices_2d(&pts).unwrap();
            let b = hull[seed as usize % hull.len()];
            let q = match shoot(&pts, b, 1.5, 0.3) {
                Ok(q) => q,
                Err(ManifoldError::Neighborhood { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let nb: Vec<&Vec<f64>> = pts
                .iter()
                .enumerate()
                .filter(|&(j, p)| j != b && euclidean(p, &pts[b]) <= 1.5)
                .map(|(_, p)| p)
                .collect();
            let c: Vec<f64> = (0..2)
                .map(|i| nb.iter().map(|p| p[i]).sum::<f64>() / nb.len() as f64)
                .collect();
            let out: Vec<f64> = (0..2).map(|i| pts[b][i] - c[i]).collect();
            let new: Vec<f64> = (0..2).map(|i| q[i] - c[i]).collect();
            let dot = out[0] * new[0] + out[1] * new[1];
            assert!(dot > out[0] * out[0] + out[1] * out[1]);
        }
    }

    #[test]
    fn shot_errors() {
        let pts = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![20.0, 0.0]];
        assert_eq!(
            shoot(&pts, 0, 1.0, 1.0).unwrap_err(),
            ManifoldError::Neighborhood { index: 0, found: 0 }
        );
        let sym = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]];
        assert_eq!(
            shoot(&sym, 0, 2.0, 1.0).unwrap_err(),
            ManifoldError::Direction { index: 0 }
        );
    }

    #[test]
    fn shot_is_rotation_equivariant() {
        let mut rng = StreamSeed::new(21).rng();
        let pts = blob(&mut rng, 25, [0.3, -0.2], 1.0);
        let b = hull_vertices_2d(&pts).unwrap()[0];
        let q = shoot(&pts, b, 1.5, 0.4).unwrap();
        let theta: f64 = 0.7;
        let (s, c) = theta.sin_cos();
        let rot = |p: &[f64]| vec![c * p[0] - s * p[1], s * p[0] + c * p[1]];
        let rotated: Vec<Vec<f64>> = pts.iter().map(|p| rot(p)).collect();
        let qr = shoot(&rotated, b, 1.5, 0.4).unwrap();
        let back = vec![c * qr[0] + s * qr[1], -s * qr[0] + c * qr[1]];
        assert!(euclidean(&back, &q) < 1e-9);
    }

    fn well_params() -> LangevinParams {
        LangevinParams {
            mass: 1.0,
            friction: 1.0,
            kbt: 0.15,
            dt: 0.005,
            dim: 2,
            n_atoms: 1,
        }
    }

    fn small_cfg() -> ExploreConfig {
        ExploreConfig {
            initial_steps: 400,
            burst_steps: 40,
            stride: 10,
            shoot_distance: 0.1,
            overlap_threshold: 0.15,
            max_iterations: 30,
            n_dims: 2,
            neighbor_radius: None,
            max_dmap_points: 300,
            seed: 5,
        }
    }

    #[test]
    fn same_basin_with_huge_threshold_stops_immediately() {
        let p = Potential::double_well(5.0);
        let mut cfg = small_cfg();
        cfg.overlap_threshold = 1e6;
        let out = explore(&p, &well_params(), [&[-1.0, 0.0], &[-1.0, 0.05]], &cfg, Exec::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let p = Potential::double_well(5.0);
        let mut cfg = small_cfg();
        cfg.max_iterations = 1;
        cfg.overlap_threshold = 1e-9;
        let out = explore(&p, &well_params(), [&[-1.0, 0.0], &[1.0, 0.0]], &cfg, Exec::default()).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
        assert!(out.sizes.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn exploration_replays_identically_across_exec_modes() {
        let p = Potential::double_well(5.0);
        let mut cfg = small_cfg();
        cfg.max_iterations = 2;
        cfg.overlap_threshold = 1e-9;
        let a = explore(&p, &well_params(), [&[-1.0, 0.0], &[1.0, 0.0]], &cfg, Exec::Parallel).unwrap();
        let b = explore(&p, &well_params(), [&[-1.0, 0.0], &[1.0, 0.0]], &cfg, Exec::Sequential).unwrap();
        assert_eq!(a, b);
    }
}
