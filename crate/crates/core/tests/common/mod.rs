#![allow(dead_code)]

use proptest::prelude::*;
use qtps::graph::{from_weighted_edges, TransitionGraph};

/// Connected graph on `n` nodes: a random tree plus extra edges, `s = 0`,
/// `t = n - 1`. Weights lie in `[0.1, 2)`.
pub fn graph(nodes: std::ops::RangeInclusive<usize>, max_bits: usize) -> impl Strategy<Value = TransitionGraph> {
    nodes
        .prop_flat_map(|n| {
            let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
            let pairs = n * (n - 1) / 2;
            (
                Just(n),
                parents,
                proptest::collection::vec(any::<bool>(), pairs),
                proptest::collection::vec(0.1f64..2.0, pairs),
            )
        })
        .prop_map(move |(n, parents, extra, weights)| {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    let tree = parents[j - 1] == i;
                    if tree || (extra[k] && n + edges.len() < max_bits) {
                        edges.push((i, j, weights[k]));
                    }
                    k += 1;
                }
            }
            from_weighted_edges(n, &edges, 0, n - 1).expect("valid graph")
        })
}

/// Path node sequence to its edge list in canonical (min, max) order.
pub fn path_edges(path: &[usize]) -> Vec<(usize, usize)> {
    path.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect()
}
