//! Random layered DAG workloads.
//!
//! Nodes are split into `depth` near-equal layers. Every node past the
//! first layer gets one forced parent in the previous layer, which pins the
//! longest chain to exactly `depth` nodes. Further edges from any earlier
//! layer are added with probability `density / 2^(distance - 1)`.
//!
//! Every candidate pair consumes one uniform draw whatever the density, so
//! for a fixed seed raising the density only ever adds edges. The default
//! density gives RW1-sized graphs a mean fan-in close to two.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GraphError, Node, SchedGraph};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub n_nodes: usize,
    pub depth: usize,
    pub density: f64,
    pub mem_range: (f64, f64),
    pub comm_range: (f64, f64),
    pub seed: u64,
}

impl GenSpec {
    pub fn new(n_nodes: usize, depth: usize, seed: u64) -> Self {
        Self {
            n_nodes,
            depth,
            density: 0.01,
            mem_range: (1.0, 1.0),
            comm_range: (1.0, 4.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidSpec(m));
        if self.n_nodes == 0 || self.depth == 0 {
            return bad("need at least one node and one layer".into());
        }
        if self.depth > self.n_nodes {
            return bad(format!("depth {} exceeds node count {}", self.depth, self.n_nodes));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density must lie in (0, 1], got {}", self.density));
        }
        for (name, (lo, hi)) in [("mem", self.mem_range), ("comm", self.comm_range)] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} range [{lo}, {hi}] must be nonnegative and ordered"));
            }
        }
        Ok(())
    }
}

/// `(|V|, depth)` of the twelve reference random workloads RW1..RW12.
pub const RW_SHAPES: [(usize, usize); 12] = [
    (949, 15),
    (941, 16),
    (929, 16),
    (810, 9),
    (819, 8),
    (829, 8),
    (4087, 10),
    (4063, 9),
    (4086, 8),
    (8058, 9),
    (8192, 11),
    (8193, 9),
];

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn layer_sizes(n: usize, depth: usize) -> Vec<usize> {
    (0..depth).map(|k| n / depth + usize::from(k < n % depth)).collect()
}

pub fn gen_random_workload(spec: &GenSpec) -> Result<SchedGraph, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = layer_sizes(spec.n_nodes, spec.depth);
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(spec.depth);
    let mut next = 0;
    for &s in &sizes {
        layers.push((next..next + s).collect());
        next += s;
    }

    let nodes: Vec<Node> = (0..spec.n_nodes)
        .map(|i| Node::new(format!("v{i}"), draw(&mut rng, spec.mem_range)))
        .collect();
    let mut edges = Vec::new();
    for k in 1..layers.len() {
        for &v in &layers[k] {
            let prev = &layers[k - 1];
            let forced = prev[rng.gen_range(0..prev.len())];
            for j in 0..k {
                let p = spec.density / f64::powi(2.0, (k - j - 1) as i32);
                for &u in &layers[j] {
                    let hit = rng.gen::<f64>() < p;
                    if hit || u == forced {
                        edges.push((u, v));
                    }
                }
            }
        }
    }
    // weights are drawn after the structure so they never perturb it
    let edges = edges
        .into_iter()
        .map(|(u, v)| {
            let comm = draw(&mut rng, spec.comm_range);
            Edge::new(nodes[u].id.clone(), nodes[v].id.clone(), comm, 0)
        })
        .collect();
    Ok(SchedGraph::new(nodes, edges)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// Nodes on the longest path.
    pub depth: usize,
    pub avg_out_degree: f64,
}

pub fn shape_stats(g: &SchedGraph) -> ShapeStats {
    let n = g.node_count();
    let mut level = vec![1usize; n];
    for &v in g.topological_order() {
        for &e in g.incoming(v) {
            let u = g.endpoints(e).0;
            level[v] = level[v].max(level[u] + 1);
        }
    }
    ShapeStats {
        n_nodes: n,
        n_edges: g.edge_count(),
        depth: level.into_iter().max().unwrap_or(0),
        avg_out_degree: if n == 0 { 0.0 } else { g.edge_count() as f64 / n as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate;

    #[test]
    fn rw1_shape() {
        let g = gen_random_workload(&GenSpec::new(949, 15, 1)).unwrap();
        let s = shape_stats(&g);
        assert_eq!(s.n_nodes, 949);
        assert_eq!(s.depth, 15);
    }

    #[test]
    fn one_node_per_layer_is_a_chain() {
        let g = gen_random_workload(&GenSpec::new(5, 5, 3)).unwrap();
        assert_eq!(g.edge_count(), 4);
        let s = shape_stats(&g);
        assert_eq!(s.depth, 5);
        for i in 0..4 {
            assert_eq!(g.endpoints(i), (i, i + 1));
        }
    }

    #[test]
    fn deterministic_json() {
        let spec = GenSpec::new(60, 6, 17);
        let a = gen_random_workload(&spec).unwrap().to_json();
        let b = gen_random_workload(&spec).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn stats_examples() {
        let g = SchedGraph::new(
            vec![Node::new("a", 1.0), Node::new("b", 1.0), Node::new("c", 1.0)],
            vec![Edge::new("a", "b", 1.0, 0), Edge::new("b", "c", 1.0, 0)],
        )
        .unwrap();
        let s = shape_stats(&g);
        assert_eq!((s.depth, s.n_edges), (3, 2));
        let e = shape_stats(&SchedGraph::new(vec![], vec![]).unwrap());
        assert_eq!((e.n_nodes, e.n_edges, e.depth, e.avg_out_degree), (0, 0, 0, 0.0));
    }

    #[test]
    fn density_monotone() {
        let mut last = 0;
        for d in [0.01, 0.05, 0.1, 0.3, 0.7, 1.0] {
            let spec = GenSpec {
                density: d,
                ..GenSpec::new(120, 8, 5)
            };
            let n = gen_random_workload(&spec).unwrap().edge_count();
            assert!(n >= last, "density {d}: {n} < {last}");
            last = n;
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_random_workload(&GenSpec::new(3, 4, 0)).is_err());
        let spec = GenSpec {
            density: 0.0,
            ..GenSpec::new(10, 2, 0)
        };
        assert!(gen_random_workload(&spec).is_err());
        let spec = GenSpec {
            comm_range: (3.0, 1.0),
            ..GenSpec::new(10, 2, 0)
        };
        assert!(gen_random_workload(&spec).is_err());
    }

    #[test]
    fn fuzzed_specs_validate_and_keep_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for seed in 0..100 {
            let n = rng.gen_range(1..80);
            let depth = rng.gen_range(1..=n.min(12));
            let spec = GenSpec {
                density: rng.gen_range(0.01..=1.0),
                ..GenSpec::new(n, depth, seed)
            };
            let g = gen_random_workload(&spec).unwrap();
            assert!(validate(g.data()).is_empty());
            assert_eq!(shape_stats(&g).depth, depth);
            for v in 0..g.node_count() {
                // only first-layer nodes are sources
                if v >= n / depth + usize::from(0 < n % depth) {
                    assert!(!g.is_source(v));
                }
            }
        }
    }
}
