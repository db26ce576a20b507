//! Differentiable scheduling of DAGs onto a fixed number of pipeline stages.
//!
//! Each node picks a stage by a Gumbel-Softmax sample restricted to the
//! stages its already-scheduled parents allow, so every sampled schedule
//! satisfies the dependency constraints. A memory-balance term and a
//! communication term are minimized with Adam through a small reverse-mode
//! tape.

pub mod autodiff;
pub mod baselines;
pub mod engine;
pub mod generator;
pub mod graph;
pub mod harness;
pub mod losses;
pub mod sampler;

pub use engine::{run, run_restarts, RunConfig, RunResult};
pub use graph::{load_graph, SchedGraph, Schedule};
pub use losses::{evaluate, DiscreteMetrics};
