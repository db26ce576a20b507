#![allow(dead_code)]

use diffsched::graph::{Edge, Node, SchedGraph};
use rand::Rng;

/// Knobs for small random DAGs. Nodes `v0..vn` are declared in a shuffled
/// order so declaration order is not topological.
#[derive(Clone)]
pub struct RandomDag {
    pub nodes: std::ops::RangeInclusive<usize>,
    pub edge_prob: f64,
    /// Constants are drawn uniformly from this list.
    pub constants: Vec<i64>,
    pub mems: Vec<f64>,
    pub comms: Vec<f64>,
    pub parallel_prob: f64,
}

impl RandomDag {
    pub fn unit(nodes: std::ops::RangeInclusive<usize>) -> Self {
        Self {
            nodes,
            edge_prob: 0.4,
            constants: vec![0],
            mems: vec![1.0],
            comms: vec![1.0, 2.0, 3.0],
            parallel_prob: 0.0,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> SchedGraph {
        let n = rng.gen_range(self.nodes.clone());
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let pick = |rng: &mut R, xs: &[f64]| xs[rng.gen_range(0..xs.len())];
        let nodes: Vec<Node> = order
            .iter()
            .map(|&i| Node::new(format!("v{i}"), pick(rng, &self.mems)))
            .collect();
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..j {
                if rng.gen::<f64>() < self.edge_prob {
                    let copies = if rng.gen::<f64>() < self.parallel_prob { 2 } else { 1 };
                    for _ in 0..copies {
                        let c = self.constants[rng.gen_range(0..self.constants.len())];
                        edges.push(Edge::new(format!("v{i}"), format!("v{j}"), pick(rng, &self.comms), c));
                    }
                }
            }
        }
        SchedGraph::new(nodes, edges).expect("random DAG is valid")
    }
}
