//! Toy energy landscapes, the overdamped Langevin integrator and the
//! effective potential of the path-integral representation.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};
use crate::rng::{StreamRng, StreamSeed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid Langevin parameter `{field}` = {value} (must be finite and > 0)")]
    InvalidParams { field: &'static str, value: f64 },
    #[error("dimension mismatch: potential has {expected} coordinates, point has {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite energy or gradient at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("integration failed at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<DynamicsError>,
    },
    #[error("a burst needs at least one step")]
    NoSteps,
    #[error("the potential does not provide a Laplacian")]
    NoLaplacian,
    #[error("node {node} has an empty neighborhood")]
    EmptyNeighborhood { node: usize },
    #[error("neighborhood of node {node} refers to missing node {index}")]
    BadNeighbor { node: usize, index: usize },
}

/// Anything with an energy and a force field. The Laplacian is optional;
/// [`effective_potential`] needs it.
pub trait EnergySurface: Sync {
    fn dim(&self) -> usize;
    fn energy(&self, q: &[f64]) -> f64;
    fn gradient(&self, q: &[f64]) -> Vec<f64>;
    fn laplacian(&self, _q: &[f64]) -> Option<f64> {
        None
    }
}

/// One monomial `coeff * prod_i x_i^powers[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

/// The fixed roster of analytic landscapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    /// `(x0^2 - 1)^2 + a * sum_{i>0} x_i^2`
    DoubleWell {
        #[serde(default = "default_well_a")]
        a: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// Müller–Brown surface, multiplied by `scale`.
    MuellerBrown {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// `sum_i stiffness_i/2 (x_i - center_i)^2`
    Harmonic {
        stiffness: Vec<f64>,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// Sum of monomials over `dim` coordinates.
    CustomPolynomial { dim: usize, terms: Vec<Monomial> },
}

fn default_well_a() -> f64 {
    5.0
}
fn default_dim() -> usize {
    2
}
fn default_scale() -> f64 {
    1.0
}

const MB_A: [f64; 4] = [-200.0, -100.0, -170.0, 15.0];
const MB_LA: [f64; 4] = [-1.0, -1.0, -6.5, 0.7];
const MB_LB: [f64; 4] = [0.0, 0.0, 11.0, 0.6];
const MB_LC: [f64; 4] = [-10.0, -10.0, -6.5, 0.7];
const MB_X0: [f64; 4] = [1.0, 0.0, -0.5, -1.0];
const MB_Y0: [f64; 4] = [0.0, 0.5, 1.5, 1.0];

impl Potential {
    pub fn double_well(a: f64) -> Self {
        Potential::DoubleWell { a, dim: 2 }
    }

    pub fn harmonic(stiffness: Vec<f64>) -> Self {
        Potential::Harmonic {
            stiffness,
            center: Vec::new(),
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Potential::CustomPolynomial {
            dim,
            terms: vec![Monomial {
                coeff: value,
                powers: vec![0; dim],
            }],
        }
    }

    /// Largest curvature of the landscape, used to bound the time step.
    /// `None` for landscapes without a global bound.
    pub fn max_curvature(&self) -> Option<f64> {
        match self {
            Potential::Harmonic { stiffness, .. } => {
                Some(stiffness.iter().fold(0.0_f64, |m, k| m.max(k.abs())))
            }
            _ => None,
        }
    }

    fn center(&self, i: usize) -> f64 {
        match self {
            Potential::Harmonic { center, .. } => center.get(i).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    fn mb_terms(q: &[f64]) -> impl Iterator<Item = (f64, f64, f64, usize)> + '_ {
        (0..4).map(move |k| {
            let dx = q[0] - MB_X0[k];
            let dy = q[1] - MB_Y0[k];
            let phi = MB_LA[k] * dx * dx + MB_LB[k] * dx * dy + MB_LC[k] * dy * dy;
            let e = MB_A[k] * phi.exp();
            let px = 2.0 * MB_LA[k] * dx + MB_LB[k] * dy;
            let py = MB_LB[k] * dx + 2.0 * MB_LC[k] * dy;
            (e, px, py, k)
        })
    }
}

fn monomial_value(m: &Monomial, q: &[f64]) -> f64 {
    m.powers
        .iter()
        .zip(q)
        .fold(m.coeff, |acc, (&p, &x)| acc * x.powi(p as i32))
}

/// `d/dx_i` of a monomial, or `d^2/dx_i^2` with `order = 2`.
fn monomial_derivative(m: &Monomial, q: &[f64], i: usize, order: u32) -> f64 {
    let p = m.powers.get(i).copied().unwrap_or(0);
    if p < order {
        return 0.0;
    }
    let factor = if order == 1 {
        p as f64
    } else {
        (p * (p - 1)) as f64
    };
    let mut v = m.coeff * factor;
    for (j, (&pj, &x)) in m.powers.iter().zip(q).enumerate() {
        let e = if j == i { pj - order } else { pj };
        v *= x.powi(e as i32);
    }
    v
}

impl EnergySurface for Potential {
    fn dim(&self) -> usize {
        match self {
            Potential::DoubleWell { dim, .. } => *dim,
            Potential::MuellerBrown { .. } => 2,
            Potential::Harmonic { stiffness, .. } => stiffness.len(),
            Potential::CustomPolynomial { dim, .. } => *dim,
        }
    }

    fn energy(&self, q: &[f64]) -> f64 {
        match self {
            Potential::DoubleWell { a, .. } => {
                let w = q[0] * q[0] - 1.0;
                w * w + a * q[1..].iter().map(|y| y * y).sum::<f64>()
            }
            Potential::MuellerBrown { scale } => {
                scale * Self::mb_terms(q).map(|(e, ..)| e).sum::<f64>()
            }
            Potential::Harmonic { stiffness, .. } => stiffness
                .iter()
                .enumerate()
                .map(|(i, k)| {
                    let d = q[i] - self.center(i);
                    0.5 * k * d * d
                })
                .sum(),
            Potential::CustomPolynomial { terms, .. } => {
                terms.iter().map(|m| monomial_value(m, q)).sum()
            }
        }
    }

    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        match self {
            Potential::DoubleWell { a, .. } => {
                let mut g: Vec<f64> = q.iter().map(|y| 2.0 * a * y).collect();
                g[0] = 4.0 * q[0] * (q[0] * q[0] - 1.0);
                g
            }
            Potential::MuellerBrown { scale } => {
                let (mut gx, mut gy) = (0.0, 0.0);
                for (e, px, py, _) in Self::mb_terms(q) {
                    gx += e * px;
                    gy += e * py;
                }
                vec![scale * gx, scale * gy]
            }
            Potential::Harmonic { stiffness, .. } => stiffness
                .iter()
                .enumerate()
                .map(|(i, k)| k * (q[i] - self.center(i)))
                .collect(),
            Potential::CustomPolynomial { dim, terms } => (0..*dim)
                .map(|i| terms.iter().map(|m| monomial_derivative(m, q, i, 1)).sum())
                .collect(),
        }
    }

    fn laplacian(&self, q: &[f64]) -> Option<f64> {
        Some(match self {
            Potential::DoubleWell { a, dim } => {
                12.0 * q[0] * q[0] - 4.0 + 2.0 * a * (*dim as f64 - 1.0)
            }
            Potential::MuellerBrown { scale } => {
                scale
                    * Self::mb_terms(q)
                        .map(|(e, px, py, k)| e * (px * px + py * py + 2.0 * MB_LA[k] + 2.0 * MB_LC[k]))
                        .sum::<f64>()
            }
            Potential::Harmonic { stiffness, .. } => stiffness.iter().sum(),
            Potential::CustomPolynomial { dim, terms } => (0..*dim)
                .map(|i| {
                    terms
                        .iter()
                        .map(|m| monomial_derivative(m, q, i, 2))
                        .sum::<f64>()
                })
                .sum(),
        })
    }
}

/// Parameters of the overdamped Langevin equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangevinParams {
    pub mass: f64,
    pub friction: f64,
    pub kbt: f64,
    pub dt: f64,
    pub dim: usize,
    #[serde(default = "default_atoms")]
    pub n_atoms: usize,
}

fn default_atoms() -> usize {
    1
}

impl LangevinParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (field, value) in [
            ("mass", self.mass),
            ("friction", self.friction),
            ("kbt", self.kbt),
            ("dt", self.dt),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(DynamicsError::InvalidParams { field, value });
            }
        }
        if self.dim == 0 {
            return Err(DynamicsError::InvalidParams {
                field: "dim",
                value: 0.0,
            });
        }
        if self.n_atoms == 0 {
            return Err(DynamicsError::InvalidParams {
                field: "n_atoms",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// `D = k_B T / (m gamma)`
    pub fn diffusion(&self) -> f64 {
        self.kbt / (self.mass * self.friction)
    }

    /// `hbar_eff = 2 k_B T / gamma`
    pub fn hbar_eff(&self) -> f64 {
        2.0 * self.kbt / self.friction
    }

    /// Drift coefficient `dt / (m gamma)` multiplying the force.
    pub fn mobility_dt(&self) -> f64 {
        self.dt / (self.mass * self.friction)
    }
}

/// Sampled path of the Langevin equation with uniform spacing `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub seed: StreamSeed,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `t,x0,...,x{d-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let d = self.points.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..d).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, q) in self.times.iter().zip(&self.points) {
            let row: Vec<String> = std::iter::once(t.to_string())
                .chain(q.iter().map(f64::to_string))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_point<P: EnergySurface + ?Sized>(q: &[f64], p: &P) -> Result<(), DynamicsError> {
    if q.len() != p.dim() {
        return Err(DynamicsError::Dimension {
            expected: p.dim(),
            got: q.len(),
        });
    }
    Ok(())
}

/// One Euler–Maruyama step of the overdamped Langevin equation.
pub fn step<P: EnergySurface + ?Sized>(
    q: &[f64],
    p: &P,
    lp: &LangevinParams,
    rng: &mut StreamRng,
) -> Result<Vec<f64>, DynamicsError> {
    check_point(q, p)?;
    let energy = p.energy(q);
    let grad = p.gradient(q);
    if !energy.is_finite() || grad.iter().any(|g| !g.is_finite()) || q.iter().any(|x| !x.is_finite()) {
        return Err(DynamicsError::NonFinite { point: q.to_vec() });
    }
    let drift = lp.mobility_dt();
    let amplitude = (2.0 * lp.diffusion() * lp.dt).sqrt();
    Ok(q.iter()
        .zip(&grad)
        .map(|(x, g)| {
            let xi: f64 = rng.sample(StandardNormal);
            x - drift * g + amplitude * xi
        })
        .collect())
}

/// `n_steps` successive steps from `q0`, keeping every point.
pub fn burst<P: EnergySurface + ?Sized>(
    q0: &[f64],
    n_steps: usize,
    p: &P,
    lp: &LangevinParams,
    seed: StreamSeed,
) -> Result<Trajectory, DynamicsError> {
    burst_strided(q0, n_steps, 1, p, lp, seed)
}

/// Like [`burst`] but only every `stride`-th point is stored (the first is
/// always stored).
pub fn burst_strided<P: EnergySurface + ?Sized>(
    q0: &[f64],
    n_steps: usize,
    stride: usize,
    p: &P,
    lp: &LangevinParams,
    seed: StreamSeed,
) -> Result<Trajectory, DynamicsError> {
    if n_steps == 0 {
        return Err(DynamicsError::NoSteps);
    }
    lp.validate()?;
    check_point(q0, p)?;
    let stride = stride.max(1);
    let mut rng = seed.rng();
    let mut times = vec![0.0];
    let mut points = vec![q0.to_vec()];
    let mut q = q0.to_vec();
    for i in 1..=n_steps {
        q = step(&q, p, lp, &mut rng).map_err(|e| DynamicsError::AtStep {
            step: i,
            source: Box::new(e),
        })?;
        if i % stride == 0 {
            times.push(i as f64 * lp.dt);
            points.push(q.clone());
        }
    }
    Ok(Trajectory {
        times,
        points,
        seed,
    })
}

/// Independent bursts from several starting points, one child stream each.
pub fn bursts<P: EnergySurface + ?Sized>(
    starts: &[Vec<f64>],
    n_steps: usize,
    stride: usize,
    p: &P,
    lp: &LangevinParams,
    seed: StreamSeed,
    exec: Exec,
) -> Result<Vec<Trajectory>, DynamicsError> {
    par::map_range(exec, starts.len(), |i| {
        burst_strided(&starts[i], n_steps, stride, p, lp, seed.split(i as u64))
    })
    .into_iter()
    .collect()
}

/// `(1/(2 m gamma^2)) [ |grad U|^2 - hbar_eff gamma lap U ]`
pub fn effective_potential<P: EnergySurface + ?Sized>(
    q: &[f64],
    p: &P,
    lp: &LangevinParams,
) -> Result<f64, DynamicsError> {
    check_point(q, p)?;
    let lap = p.laplacian(q).ok_or(DynamicsError::NoLaplacian)?;
    let g2: f64 = p.gradient(q).iter().map(|g| g * g).sum();
    let v = (g2 - lp.hbar_eff() * lp.friction * lap) / (2.0 * lp.mass * lp.friction * lp.friction);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DynamicsError::NonFinite { point: q.to_vec() })
    }
}

/// Replace each value by the mean over its neighborhood.
pub fn smooth_effective_potential(
    values: &[f64],
    neighborhoods: &[Vec<usize>],
) -> Result<Vec<f64>, DynamicsError> {
    neighborhoods
        .iter()
        .enumerate()
        .map(|(node, hood)| {
            if hood.is_empty() {
                return Err(DynamicsError::EmptyNeighborhood { node });
            }
            let mut sum = 0.0;
            for &j in hood {
                sum += values
                    .get(j)
                    .ok_or(DynamicsError::BadNeighbor { node, index: j })?;
            }
            Ok(sum / hood.len() as f64)
        })
        .collect()
}

/// Heuristic coarse time step: mean time for the trajectory to first move a
/// distance `sigma` away from a starting point, averaged over starting
/// points. `None` if the distance is never reached.
pub fn estimate_coarse_time(traj: &Trajectory, sigma: f64) -> Option<f64> {
    let n = traj.points.len();
    let mut total = 0.0;
    let mut count = 0usize;
    let stride = (n / 200).max(1);
    for i in (0..n).step_by(stride) {
        let start = &traj.points[i];
        if let Some(j) = (i + 1..n).find(|&j| crate::euclidean(start, &traj.points[j]) >= sigma) {
            total += traj.times[j] - traj.times[i];
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}
