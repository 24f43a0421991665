//! Binary quadratic encoding of the shortest-path problem.
//!
//! Bits `0..nu` are node variables, bits `nu..nu + |E|` are edge variables
//! in the graph's edge order. The Hamiltonian is
//! `alpha * (H_s + H_t + H_r) + sum_ij w_ij Gamma_ij` with
//!
//! * `H_s = -Gamma_s + (Gamma_s - sum_i Gamma_si)^2`, same for `t`
//! * `H_r = sum_{j != s,t} (2 Gamma_j - sum_i Gamma_ji)^2`
//!
//! A valid path sits at the constraint floor `-2`, so its energy is
//! `-2 alpha + S(I)`. Flux conservation alone also admits disjoint cycles at
//! zero cost, so validity is always judged by [`decode`], never by energy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CoarsePath, TransitionGraph};
use crate::par::{self, Exec};

pub const MAX_BRUTE_FORCE_BITS: usize = 24;
pub const MAX_ENUMERATION_NODES: usize = 12;
pub const MAX_ENUMERATED_PATHS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuboError {
    #[error("alpha must be finite and > 0, got {0}")]
    Alpha(f64),
    #[error("{bits} bits exceed the brute-force limit of {limit}")]
    TooManyBits { bits: usize, limit: usize },
    #[error("{nodes} nodes exceed the enumeration limit of {limit}")]
    TooManyNodes { nodes: usize, limit: usize },
    #[error("more than {limit} simple paths; enumeration refused")]
    PathExplosion { limit: usize },
    #[error("no simple path from {s} to {t}")]
    NoPath { s: usize, t: usize },
    #[error("path is not a walk on the graph: {0}")]
    BadPath(String),
}

/// The rule a bit assignment breaks when it is not a single s–t path.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Violation {
    #[error("assignment has {got} bits, problem has {expected}")]
    Size { expected: usize, got: usize },
    #[error("bit {index} is {value}, not 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("endpoint {node} is not visited")]
    NotVisited { node: usize },
    #[error("edge ({i}, {j}) is active but an endpoint node bit is off")]
    OrphanEdge { i: usize, j: usize },
    #[error("node {node} is active but has no active edge")]
    OrphanNode { node: usize },
    #[error("node {node} has degree {degree}, expected {expected}")]
    Degree {
        node: usize,
        degree: usize,
        expected: usize,
    },
    #[error("{edges} active edges form a cycle off the path")]
    Cycle { edges: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    /// Renormalized edge weights, aligned with `edges`.
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub s: usize,
    pub t: usize,
    pub linear: Vec<f64>,
    /// Keys `(i, j)` with `i < j`.
    pub quadratic: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
    neighbors: Vec<Vec<(usize, f64)>>,
}

/// A bit vector with its energy and, when valid, the decoded path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAssignment {
    pub bits: Vec<u8>,
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<CoarsePath>,
}

struct Builder {
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl Builder {
    fn add_linear(&mut self, i: usize, c: f64) {
        self.linear[i] += c;
    }

    fn add_pair(&mut self, i: usize, j: usize, c: f64) {
        if i == j {
            self.add_linear(i, c);
        } else {
            *self.quadratic.entry((i.min(j), i.max(j))).or_insert(0.0) += c;
        }
    }

    /// Add `scale * (constant + sum_k a_k x_k)^2` using `x^2 = x`.
    fn add_square(&mut self, scale: f64, constant: f64, terms: &[(usize, f64)]) {
        self.offset += scale * constant * constant;
        for (k, &(i, a)) in terms.iter().enumerate() {
            self.add_linear(i, scale * (a * a + 2.0 * constant * a));
            for &(j, b) in &terms[k + 1..] {
                self.add_pair(i, j, scale * 2.0 * a * b);
            }
        }
    }
}

/// Encode with `alpha` defaulting to the sum of renormalized weights.
pub fn encode_default(g: &TransitionGraph) -> Result<QuboProblem, QuboError> {
    encode(g, default_alpha(g))
}

pub fn default_alpha(g: &TransitionGraph) -> f64 {
    g.total_weight()
}

pub fn encode(g: &TransitionGraph, alpha: f64) -> Result<QuboProblem, QuboError> {
    let edges: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.i, e.j)).collect();
    let weights: Vec<f64> = g.edges.iter().map(|e| e.w_renorm).collect();
    encode_edges(g.node_count(), &edges, &weights, g.s, g.t, alpha)
}

/// Encode from raw parts; `weights` are used as given.
pub fn encode_edges(
    num_nodes: usize,
    edges: &[(usize, usize)],
    weights: &[f64],
    s: usize,
    t: usize,
    alpha: f64,
) -> Result<QuboProblem, QuboError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(QuboError::Alpha(alpha));
    }
    let nu = num_nodes;
    let n = nu + edges.len();
    let mut b = Builder {
        linear: vec![0.0; n],
        quadratic: BTreeMap::new(),
        offset: 0.0,
    };
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nu];
    for (k, &(i, j)) in edges.iter().enumerate() {
        incident[i].push(nu + k);
        incident[j].push(nu + k);
    }
    for node in 0..nu {
        let mut terms: Vec<(usize, f64)> = incident[node].iter().map(|&e| (e, -1.0)).collect();
        if node == s || node == t {
            b.add_linear(node, -alpha);
            terms.insert(0, (node, 1.0));
        } else {
            terms.insert(0, (node, 2.0));
        }
        b.add_square(alpha, 0.0, &terms);
    }
    for (k, &w) in weights.iter().enumerate() {
        b.add_linear(nu + k, w);
    }
    let mut q = QuboProblem {
        num_nodes,
        edges: edges.to_vec(),
        weights: weights.to_vec(),
        alpha,
        s,
        t,
        linear: b.linear,
        quadratic: b.quadratic,
        offset: b.offset,
        neighbors: Vec::new(),
    };
    q.index_neighbors();
    Ok(q)
}

impl QuboProblem {
    fn index_neighbors(&mut self) {
        let mut nb = vec![Vec::new(); self.num_bits()];
        for (&(i, j), &c) in &self.quadratic {
            nb[i].push((j, c));
            nb[j].push((i, c));
        }
        self.neighbors = nb;
    }

    pub fn num_bits(&self) -> usize {
        self.num_nodes + self.edges.len()
    }

    pub fn node_bit(&self, node: usize) -> usize {
        node
    }

    pub fn edge_bit(&self, edge: usize) -> usize {
        self.num_nodes + edge
    }

    pub fn bit_labels(&self) -> Vec<String> {
        (0..self.num_nodes)
            .map(|i| format!("node:{i}"))
            .chain(self.edges.iter().map(|(i, j)| format!("edge:{i}-{j}")))
            .collect()
    }

    /// `(other bit, coupling)` pairs for each bit.
    pub fn neighbors(&self, bit: usize) -> &[(usize, f64)] {
        &self.neighbors[bit]
    }

    /// Energy from the coefficient form.
    pub fn energy(&self, bits: &[u8]) -> f64 {
        let mut e = self.offset;
        for (i, &x) in bits.iter().enumerate() {
            if x != 0 {
                e += self.linear[i];
            }
        }
        for (&(i, j), &c) in &self.quadratic {
            if bits[i] != 0 && bits[j] != 0 {
                e += c;
            }
        }
        e
    }

    /// Energy change from flipping `bit`.
    pub fn flip_delta(&self, bits: &[u8], bit: usize) -> f64 {
        let mut field = self.linear[bit];
        for &(j, c) in &self.neighbors[bit] {
            if bits[j] != 0 {
                field += c;
            }
        }
        if bits[bit] != 0 {
            -field
        } else {
            field
        }
    }

    /// Energy straight from the constraint and target terms.
    pub fn direct_energy(&self, bits: &[u8]) -> f64 {
        let nu = self.num_nodes;
        let g = |k: usize| bits[k] as f64;
        let mut flux = vec![0.0; nu];
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            flux[i] += g(nu + k);
            flux[j] += g(nu + k);
        }
        let mut hc = 0.0;
        for node in 0..nu {
            if node == self.s || node == self.t {
                hc += -g(node) + (g(node) - flux[node]).powi(2);
            } else {
                hc += (2.0 * g(node) - flux[node]).powi(2);
            }
        }
        let ht: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * g(nu + k))
            .sum();
        self.alpha * hc + ht
    }

    /// Bits of a node sequence.
    pub fn path_bits(&self, path: &[usize]) -> Result<Vec<u8>, QuboError> {
        let mut bits = vec![0u8; self.num_bits()];
        for &v in path {
            if v >= self.num_nodes {
                return Err(QuboError::BadPath(format!("node {v} out of range")));
            }
            bits[v] = 1;
        }
        for w in path.windows(2) {
            let key = (w[0].min(w[1]), w[0].max(w[1]));
            let k = self
                .edges
                .iter()
                .position(|&e| e == key)
                .ok_or_else(|| QuboError::BadPath(format!("no edge {}-{}", w[0], w[1])))?;
            bits[self.num_nodes + k] = 1;
        }
        Ok(bits)
    }

    /// Sum of weights along a node sequence.
    pub fn path_action(&self, path: &[usize]) -> Result<f64, QuboError> {
        let bits = self.path_bits(path)?;
        Ok(self
            .weights
            .iter()
            .enumerate()
            .filter(|(k, _)| bits[self.num_nodes + k] != 0)
            .map(|(_, w)| w)
            .sum())
    }

    /// Evaluate and decode a bit vector.
    pub fn assignment(&self, bits: Vec<u8>) -> BinaryAssignment {
        let energy = self.energy(&bits);
        let path = decode(self, &bits).ok();
        BinaryAssignment { bits, energy, path }
    }

    pub fn export(&self) -> QuboExport {
        QuboExport {
            model: self.wire(),
            bit_labels: self.bit_labels(),
        }
    }

    pub fn wire(&self) -> QuboWire {
        QuboWire {
            num_bits: self.num_bits(),
            linear: self
                .linear
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(i, &c)| (i.to_string(), c))
                .collect(),
            quadratic: self
                .quadratic
                .iter()
                .filter(|(_, &c)| c != 0.0)
                .map(|(&(i, j), &c)| (format!("{i},{j}"), c))
                .collect(),
            offset: self.offset,
        }
    }
}

/// Wire form of the model: sparse coefficients keyed by bit index strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboWire {
    pub num_bits: usize,
    pub linear: BTreeMap<String, f64>,
    pub quadratic: BTreeMap<String, f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboExport {
    #[serde(flatten)]
    pub model: QuboWire,
    pub bit_labels: Vec<String>,
}

/// Decode a bit vector into an s–t path, or name the first broken rule.
pub fn decode(q: &QuboProblem, bits: &[u8]) -> Result<CoarsePath, Violation> {
    if bits.len() != q.num_bits() {
        return Err(Violation::Size {
            expected: q.num_bits(),
            got: bits.len(),
        });
    }
    if let Some((index, &value)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
        return Err(Violation::NotBinary { index, value });
    }
    let nu = q.num_nodes;
    for node in [q.s, q.t] {
        if bits[node] == 0 {
            return Err(Violation::NotVisited { node });
        }
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nu];
    let mut active_edges = 0usize;
    for (k, &(i, j)) in q.edges.iter().enumerate() {
        if bits[nu + k] == 0 {
            continue;
        }
        if bits[i] == 0 || bits[j] == 0 {
            return Err(Violation::OrphanEdge { i, j });
        }
        adj[i].push((j, k));
        adj[j].push((i, k));
        active_edges += 1;
    }
    for node in 0..nu {
        if bits[node] == 0 {
            continue;
        }
        let degree = adj[node].len();
        let expected = if node == q.s || node == q.t { 1 } else { 2 };
        if degree == 0 {
            return Err(Violation::OrphanNode { node });
        }
        if degree != expected {
            return Err(Violation::Degree {
                node,
                degree,
                expected,
            });
        }
    }
    // s has degree 1 and every interior node degree 2, so the walk from s
    // is forced and can only end at t.
    let mut path = vec![q.s];
    let mut prev = usize::MAX;
    let mut cur = q.s;
    let mut action = 0.0;
    while cur != q.t || path.len() == 1 {
        let &(next, k) = adj[cur]
            .iter()
            .find(|&&(v, _)| v != prev)
            .expect("degrees checked");
        action += q.weights[k];
        prev = cur;
        cur = next;
        path.push(cur);
        if cur == q.t {
            break;
        }
    }
    let used = path.len() - 1;
    if used != active_edges {
        return Err(Violation::Cycle {
            edges: active_edges - used,
        });
    }
    Ok(CoarsePath {
        nodes: path,
        action,
    })
}

fn lex_less(a: u32, b: u32, n: usize) -> bool {
    // lexicographic on (bit 0, bit 1, ...)
    for k in 0..n {
        let (x, y) = ((a >> k) & 1, (b >> k) & 1);
        if x != y {
            return x < y;
        }
    }
    false
}

fn mask_bits(mask: u32, n: usize) -> Vec<u8> {
    (0..n).map(|k| ((mask >> k) & 1) as u8).collect()
}

/// Exhaustive minimum. Ties go to the lexicographically smallest bit vector.
pub fn brute_force_ground(q: &QuboProblem, exec: Exec) -> Result<BinaryAssignment, QuboError> {
    let n = q.num_bits();
    if n > MAX_BRUTE_FORCE_BITS {
        return Err(QuboError::TooManyBits {
            bits: n,
            limit: MAX_BRUTE_FORCE_BITS,
        });
    }
    let high = n.min(6);
    let low = n - high;
    let chunks = 1usize << high;
    let best_per_chunk = par::map_range(exec, chunks, |c| {
        let mut bits = vec![0u8; n];
        for k in 0..high {
            bits[low + k] = ((c >> k) & 1) as u8;
        }
        let mut mask: u32 = (c as u32) << low;
        let mut e = q.energy(&bits);
        let mut best = (e, mask);
        for i in 1u64..(1u64 << low) {
            let bit = i.trailing_zeros() as usize;
            e += q.flip_delta(&bits, bit);
            bits[bit] ^= 1;
            mask ^= 1 << bit;
            if e < best.0 + 1e-6 {
                // running sums drift; settle close calls exactly
                let exact = q.energy(&bits);
                let prev = q.energy(&mask_bits(best.1, n));
                if exact < prev || (exact == prev && lex_less(mask, best.1, n)) {
                    best = (exact, mask);
                }
                e = exact;
            }
        }
        best
    });
    let mut best = best_per_chunk[0];
    for &(e, m) in &best_per_chunk[1..] {
        if e < best.0 || (e == best.0 && lex_less(m, best.1, n)) {
            best = (e, m);
        }
    }
    Ok(q.assignment(mask_bits(best.1, n)))
}

/// All simple s–t paths with at most `max_len` edges and their Boltzmann law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLaw {
    pub paths: Vec<CoarsePath>,
    pub probabilities: Vec<f64>,
}

impl PathLaw {
    /// Probability of a node sequence; 0 if it is not in the law.
    pub fn probability_of(&self, nodes: &[usize]) -> f64 {
        self.paths
            .iter()
            .position(|p| p.nodes == nodes)
            .map_or(0.0, |k| self.probabilities[k])
    }
}

pub fn enumerate_paths(g: &TransitionGraph, max_len: usize) -> Result<PathLaw, QuboError> {
    let nu = g.node_count();
    if nu > MAX_ENUMERATION_NODES {
        return Err(QuboError::TooManyNodes {
            nodes: nu,
            limit: MAX_ENUMERATION_NODES,
        });
    }
    let adj = g.adjacency();
    let mut paths = Vec::new();
    let mut stack = vec![g.s];
    let mut on_path = vec![false; nu];
    on_path[g.s] = true;
    fn dfs(
        g: &TransitionGraph,
        adj: &[Vec<(usize, usize)>],
        stack: &mut Vec<usize>,
        on_path: &mut [bool],
        action: f64,
        max_len: usize,
        out: &mut Vec<CoarsePath>,
    ) -> Result<(), QuboError> {
        let cur = *stack.last().expect("non-empty");
        if cur == g.t {
            if out.len() >= MAX_ENUMERATED_PATHS {
                return Err(QuboError::PathExplosion {
                    limit: MAX_ENUMERATED_PATHS,
                });
            }
            out.push(CoarsePath {
                nodes: stack.clone(),
                action,
            });
            return Ok(());
        }
        if stack.len() > max_len {
            return Ok(());
        }
        for &(v, k) in &adj[cur] {
            if on_path[v] {
                continue;
            }
            on_path[v] = true;
            stack.push(v);
            dfs(g, adj, stack, on_path, action + g.edges[k].w_renorm, max_len, out)?;
            stack.pop();
            on_path[v] = false;
        }
        Ok(())
    }
    dfs(g, &adj, &mut stack, &mut on_path, 0.0, max_len, &mut paths)?;
    if paths.is_empty() {
        return Err(QuboError::NoPath { s: g.s, t: g.t });
    }
    let smin = paths.iter().map(|p| p.action).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = paths.iter().map(|p| (smin - p.action).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(PathLaw {
        probabilities: weights.iter().map(|w| w / z).collect(),
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::from_weighted_edges;
    use crate::rng::StreamSeed;
    use rand::Rng;

    fn single_edge() -> TransitionGraph {
        from_weighted_edges(2, &[(0, 1, 0.7)], 0, 1).unwrap()
    }

    #[test]
    fn single_edge_path_energy() {
        let g = single_edge();
        let alpha = 3.0;
        let q = encode(&g, alpha).unwrap();
        assert_eq!(q.num_bits(), 3);
        let w = g.edges[0].w_renorm;
        assert!((q.energy(&[1, 1, 1]) - (-2.0 * alpha + w)).abs() < 1e-12);
        assert_eq!(q.energy(&[0, 0, 0]), 0.0);
        // minimum over all 8 assignments
        let best = (0u32..8)
            .map(|m| q.energy(&mask_bits(m, 3)))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, q.energy(&[1, 1, 1]));
    }

    #[test]
    fn coefficient_form_matches_direct_form() {
        let mut rng = StreamSeed::new(4).rng();
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                if rng.random::<f64>() < 0.6 {
                    edges.push((i, j, rng.random::<f64>() + 0.1));
                }
            }
        }
        let g = from_weighted_edges(6, &edges, 0, 5).unwrap();
        let q = encode(&g, 2.5).unwrap();
        for _ in 0..1000 {
            let bits: Vec<u8> = (0..q.num_bits()).map(|_| rng.random_range(0..2)).collect();
            assert!((q.energy(&bits) - q.direct_energy(&bits)).abs() < 1e-9);
        }
    }

    #[test]
    fn flip_delta_matches_recompute() {
        let g = from_weighted_edges(4, &[(0, 1, 1.0), (1, 3, 0.4), (0, 2, 0.3), (2, 3, 0.8)], 0, 3).unwrap();
        let q = encode(&g, 2.0).unwrap();
        let mut rng = StreamSeed::new(9).rng();
        for _ in 0..200 {
            let mut bits: Vec<u8> = (0..q.num_bits()).map(|_| rng.random_range(0..2)).collect();
            let k = rng.random_range(0..q.num_bits());
            let before = q.energy(&bits);
            let d = q.flip_delta(&bits, k);
            bits[k] ^= 1;
            assert!((q.energy(&bits) - before - d).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_keys_are_ordered() {
        let g = from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 0, 2).unwrap();
        let q = encode(&g, 1.0).unwrap();
        assert!(q.quadratic.keys().all(|&(i, j)| i < j));
    }

    #[test]
    fn decode_line_path() {
        let g = from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 0.5)], 0, 2).unwrap();
        let q = encode(&g, 3.0).unwrap();
        let p = decode(&q, &[1, 1, 1, 1, 1]).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2]);
        assert!((p.action - (1.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn decode_rejects_disjoint_cycle() {
        // path 0-1 plus triangle 2-3-4
        let g = from_weighted_edges(5, &[(0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0), (2, 4, 1.0)], 0, 1).unwrap();
        let q = encode(&g, 5.0).unwrap();
        let bits = vec![1, 1, 1, 1, 1, 1, 1, 1, 1];
        assert_eq!(decode(&q, &bits), Err(Violation::Cycle { edges: 3 }));
        // the constraint part cannot tell: energy sits at the floor plus weights
        assert!((q.energy(&bits) - (-10.0 + 4.0 * g.edges[0].w_renorm)).abs() < 1e-12);
    }

    #[test]
    fn decode_reports_rules() {
        let g = from_weighted_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 0, 2).unwrap();
        let q = encode(&g, 1.0).unwrap();
        assert_eq!(decode(&q, &[0; 6]), Err(Violation::NotVisited { node: 0 }));
        assert_eq!(decode(&q, &[1, 0, 1, 1, 0, 0]), Err(Violation::OrphanEdge { i: 0, j: 1 }));
        assert_eq!(decode(&q, &[1, 1, 1, 0, 0, 1]), Err(Violation::OrphanNode { node: 1 }));
        assert_eq!(
            decode(&q, &[1, 1, 1, 1, 1, 1]),
            Err(Violation::Degree {
                node: 0,
                degree: 2,
                expected: 1
            })
        );
        assert!(matches!(decode(&q, &[1, 1]), Err(Violation::Size { .. })));
    }

    #[test]
    fn brute_force_examples() {
        let g = single_edge();
        let q = encode(&g, 10.0 * g.edges[0].w_renorm).unwrap();
        assert_eq!(brute_force_ground(&q, Exec::Sequential).unwrap().bits, vec![1, 1, 1]);
        // s = 0, t = 1, m = 2 with w_sm + w_mt < w_st
        let tri = from_weighted_edges(3, &[(0, 1, 5.0), (0, 2, 1.0), (1, 2, 1.0)], 0, 1).unwrap();
        let q = encode_default(&tri).unwrap();
        let ground = brute_force_ground(&q, Exec::Parallel).unwrap();
        assert_eq!(ground.path.unwrap().nodes, vec![0, 2, 1]);
    }

    #[test]
    fn brute_force_refuses_large_problems() {
        let edges: Vec<(usize, usize, f64)> = (0..24).map(|i| (i, i + 1, 1.0)).collect();
        let g = from_weighted_edges(25, &edges, 0, 24).unwrap();
        let q = encode_default(&g).unwrap();
        assert_eq!(
            brute_force_ground(&q, Exec::Sequential).unwrap_err(),
            QuboError::TooManyBits { bits: 49, limit: 24 }
        );
    }

    #[test]
    fn brute_force_modes_agree() {
        let g = from_weighted_edges(5, &[(0, 1, 0.5), (1, 4, 0.5), (0, 2, 0.4), (2, 3, 0.3), (3, 4, 0.2), (1, 2, 0.9)], 0, 4)
            .unwrap();
        let q = encode_default(&g).unwrap();
        assert_eq!(
            brute_force_ground(&q, Exec::Sequential).unwrap(),
            brute_force_ground(&q, Exec::Parallel).unwrap()
        );
    }

    #[test]
    fn enumerate_square() {
        let g = from_weighted_edges(4, &[(0, 1, 1.0), (1, 3, 0.6), (0, 2, 0.8), (2, 3, 0.5)], 0, 3).unwrap();
        let law = enumerate_paths(&g, 10).unwrap();
        assert_eq!(law.paths.len(), 2);
        // w_max = 1, so renormalized weights equal the raw ones
        let s1: f64 = 1.0 + 0.6;
        let s2: f64 = 0.8 + 0.5;
        let z = (-s1).exp() + (-s2).exp();
        assert!((law.probability_of(&[0, 1, 3]) - (-s1).exp() / z).abs() < 1e-12);
        assert!((law.probability_of(&[0, 2, 3]) - (-s2).exp() / z).abs() < 1e-12);
    }

    #[test]
    fn enumerate_line_has_one_path() {
        let g = from_weighted_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 0, 3).unwrap();
        let law = enumerate_paths(&g, 10).unwrap();
        assert_eq!(law.paths.len(), 1);
        assert_eq!(law.probabilities, vec![1.0]);
    }

    #[test]
    fn export_keys() {
        let q = encode(&single_edge(), 2.0).unwrap();
        let json = serde_json::to_value(q.export()).unwrap();
        assert_eq!(json["num_bits"], 3);
        assert!(json["quadratic"].get("0,2").is_some());
        assert_eq!(json["bit_labels"][2], "edge:0-1");
    }
}
