//! Differentiable losses and the exact discrete evaluator.
//!
//! The memory term is the Shannon entropy of the per-stage memory
//! distribution `N_i / M`. A perfectly even split maximizes it at `ln L`,
//! so the optimized quantity is the imbalance `ln L - L_e`, which is zero
//! exactly when memory is spread evenly. The communication term is the
//! per-boundary crossing cost summed over boundaries and divided by the
//! total edge cost.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AdError, DiffVector, Tape};
use crate::graph::{LegalityViolation, SchedGraph, Schedule};

/// Floor added inside `log` so that empty stages contribute `0 * log(0) = 0`.
pub const LOG_FLOOR: f64 = 1e-30;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("total memory is zero")]
    ZeroMemory,
    #[error("expected {expected} node vectors, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("illegal schedule: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Illegal(Vec<LegalityViolation>),
    #[error(transparent)]
    Ad(#[from] AdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub entropy: f64,
    pub comm: f64,
    pub lambda: f64,
}

/// `L_e = -sum_i (N_i/M) log(N_i/M)` with `N_i = sum_v mem_v * s_v[i]`.
pub fn entropy_loss(
    tape: &mut Tape,
    schedules: &[DiffVector],
    mem: &[f64],
    latency: usize,
) -> Result<DiffVector, LossError> {
    if schedules.len() != mem.len() {
        return Err(LossError::Shape {
            expected: mem.len(),
            got: schedules.len(),
        });
    }
    let total: f64 = mem.iter().sum();
    if !(total > 0.0) {
        return Err(LossError::ZeroMemory);
    }
    let mut stage_mem = tape.constant(vec![0.0; latency]);
    for (&s, &m) in schedules.iter().zip(mem) {
        let weighted = tape.scale(s, m)?;
        stage_mem = tape.add(stage_mem, weighted)?;
    }
    let share = tape.scale(stage_mem, 1.0 / total)?;
    let floored = tape.shift(share, LOG_FLOOR)?;
    let logs = tape.log(floored)?;
    let terms = tape.mul(share, logs)?;
    let s = tape.sum(terms);
    Ok(tape.scale(s, -1.0)?)
}

/// `L_c = (sum_i m_i) / (sum_e c_e)`, where edge `(k, t)` crosses boundary
/// `i` with weight `cumsum(s_k)[i] * (1 - cumsum(s_t)[i])`. Zero when the
/// graph carries no communication cost.
pub fn comm_loss(
    tape: &mut Tape,
    schedules: &[DiffVector],
    g: &SchedGraph,
    latency: usize,
) -> Result<DiffVector, LossError> {
    if schedules.len() != g.node_count() {
        return Err(LossError::Shape {
            expected: g.node_count(),
            got: schedules.len(),
        });
    }
    let total = g.total_comm();
    if g.edge_count() == 0 || total <= 0.0 || latency < 2 {
        return Ok(tape.constant(vec![0.0]));
    }
    let n = g.node_count();
    let mut placed_by: Vec<Option<DiffVector>> = vec![None; n];
    let mut after: Vec<Option<DiffVector>> = vec![None; n];
    let mut acc = tape.constant(vec![0.0]);
    for (e, edge) in g.edges().iter().enumerate() {
        if edge.comm == 0.0 {
            continue;
        }
        let (k, t) = g.endpoints(e);
        let a = match placed_by[k] {
            Some(x) => x,
            None => {
                let x = tape.cumsum(schedules[k]);
                placed_by[k] = Some(x);
                x
            }
        };
        let b = match after[t] {
            Some(x) => x,
            None => {
                let cs = match placed_by[t] {
                    Some(x) => x,
                    None => {
                        let x = tape.cumsum(schedules[t]);
                        placed_by[t] = Some(x);
                        x
                    }
                };
                let neg = tape.scale(cs, -1.0)?;
                let x = tape.shift(neg, 1.0)?;
                after[t] = Some(x);
                x
            }
        };
        let crossing = tape.mul(a, b)?;
        // the last entry is not a boundary
        let mut w = vec![edge.comm; latency];
        w[latency - 1] = 0.0;
        let cost = tape.dot(crossing, &w)?;
        acc = tape.add(acc, cost)?;
    }
    Ok(tape.scale(acc, 1.0 / total)?)
}

/// Combined training loss `lambda * (ln L - L_e) + L_c`.
pub fn total_loss(entropy: f64, comm: f64, lambda: f64, latency: usize) -> LossBreakdown {
    LossBreakdown {
        total: lambda * ((latency as f64).ln() - entropy) + comm,
        entropy,
        comm,
        lambda,
    }
}

/// Builds the full training loss on the tape; returns the scalar root and
/// its breakdown.
pub fn schedule_loss(
    tape: &mut Tape,
    g: &SchedGraph,
    schedules: &[DiffVector],
    latency: usize,
    lambda: f64,
) -> Result<(DiffVector, LossBreakdown), LossError> {
    let entropy = entropy_loss(tape, schedules, &g.mems(), latency)?;
    let comm = comm_loss(tape, schedules, g, latency)?;
    let weighted = tape.scale(entropy, -lambda)?;
    let sum = tape.add(weighted, comm)?;
    let root = tape.shift(sum, lambda * (latency as f64).ln())?;
    let mut breakdown = total_loss(tape.scalar(entropy), tape.scalar(comm), lambda, latency);
    // keep the reported total identical to what was differentiated
    breakdown.total = tape.scalar(root);
    Ok((root, breakdown))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMetrics {
    pub peak_mem: f64,
    pub stage_mem: Vec<f64>,
    pub boundary_comm: Vec<f64>,
    pub comm_total: f64,
    pub lp_objective: f64,
    pub ratio: f64,
}

/// Exact evaluation of a legal schedule.
pub fn discrete_metrics(
    g: &SchedGraph,
    schedule: &Schedule,
    latency: usize,
    ratio: f64,
) -> Result<DiscreteMetrics, LossError> {
    g.check_legal(schedule, latency).map_err(LossError::Illegal)?;
    Ok(evaluate(g, schedule.stages(), latency, ratio))
}

/// Same as [`discrete_metrics`] without the legality check. Stages must be
/// below `latency`.
pub fn evaluate(g: &SchedGraph, stages: &[usize], latency: usize, ratio: f64) -> DiscreteMetrics {
    let mut stage_mem = vec![0.0; latency];
    for (node, &s) in g.nodes().iter().zip(stages) {
        stage_mem[s] += node.mem;
    }
    let mut boundary_comm = vec![0.0; latency.saturating_sub(1)];
    for (e, edge) in g.edges().iter().enumerate() {
        let (k, t) = g.endpoints(e);
        for m in &mut boundary_comm[stages[k]..stages[t].max(stages[k])] {
            *m += edge.comm;
        }
    }
    let peak_mem = stage_mem.iter().copied().fold(0.0, f64::max);
    let comm_total: f64 = boundary_comm.iter().sum();
    DiscreteMetrics {
        peak_mem,
        stage_mem,
        boundary_comm,
        comm_total,
        lp_objective: comm_total + ratio * peak_mem,
        ratio,
    }
}

/// Running best divided by the first value.
pub fn normalized_progress(trajectory: &[f64]) -> Vec<f64> {
    let Some(&first) = trajectory.first() else {
        return Vec::new();
    };
    let mut best = f64::INFINITY;
    trajectory
        .iter()
        .map(|&x| {
            best = best.min(x);
            best / first
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node};

    fn onehots(tape: &mut Tape, stages: &[usize], latency: usize) -> Vec<DiffVector> {
        stages
            .iter()
            .map(|&s| {
                let mut v = vec![0.0; latency];
                v[s] = 1.0;
                tape.param(v)
            })
            .collect()
    }

    fn chain(comm: f64) -> SchedGraph {
        SchedGraph::new(
            vec![Node::new("a", 1.0), Node::new("b", 1.0)],
            vec![Edge::new("a", "b", comm, 0)],
        )
        .unwrap()
    }

    fn entropy_of(stages: &[usize], mem: &[f64], latency: usize) -> f64 {
        let mut t = Tape::new();
        let s = onehots(&mut t, stages, latency);
        let h = entropy_loss(&mut t, &s, mem, latency).unwrap();
        t.scalar(h)
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_of(&[1, 1, 1, 1], &[1.0; 4], 3), 0.0);
        let h = entropy_of(&[0, 1, 2, 0, 1, 2], &[1.0; 6], 3);
        assert!((h - 3f64.ln()).abs() < 1e-12);
        let h = entropy_of(&[0, 0, 1], &[1.0; 3], 2);
        let expect = -(2.0 / 3.0) * (2.0f64 / 3.0).ln() - (1.0 / 3.0) * (1.0f64 / 3.0).ln();
        assert!((h - expect).abs() < 1e-12);
        assert!((h - 0.6365).abs() < 1e-4);
        // memory-weighted split 2:1:1 equals the unit-weight 2/1/1 split
        let h = entropy_of(&[0, 1, 2], &[2.0, 1.0, 1.0], 3);
        let h2 = entropy_of(&[0, 0, 1, 2], &[1.0; 4], 3);
        assert!((h - h2).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_zero_memory() {
        let mut t = Tape::new();
        let s = onehots(&mut t, &[0], 2);
        assert_eq!(entropy_loss(&mut t, &s, &[0.0], 2), Err(LossError::ZeroMemory));
    }

    fn comm_of(g: &SchedGraph, stages: &[usize], latency: usize) -> f64 {
        let mut t = Tape::new();
        let s = onehots(&mut t, stages, latency);
        let c = comm_loss(&mut t, &s, g, latency).unwrap();
        t.scalar(c)
    }

    #[test]
    fn comm_examples() {
        let g = chain(1.0);
        assert_eq!(comm_of(&g, &[0, 0], 2), 0.0);
        assert_eq!(comm_of(&g, &[0, 1], 2), 1.0);
        let g = chain(2.0);
        assert_eq!(comm_of(&g, &[0, 2], 3), 2.0);
        let m = evaluate(&g, &[0, 2], 3, 1.0);
        assert_eq!(m.boundary_comm, vec![2.0, 2.0]);
        let g = chain(0.0);
        assert_eq!(comm_of(&g, &[0, 1], 2), 0.0);
    }

    #[test]
    fn total_loss_arithmetic() {
        let b = total_loss(0.5, 0.2, 10.0, 2);
        assert!((b.total - (10.0 * (2f64.ln() - 0.5) + 0.2)).abs() < 1e-12);
        let b = total_loss(0.5, 0.2, 0.0, 3);
        assert_eq!(b.total, 0.2);
        // perfectly balanced: only the communication term remains
        let b = total_loss(3f64.ln(), 0.7, 100.0, 3);
        assert!((b.total - 0.7).abs() < 1e-12);
    }

    #[test]
    fn schedule_loss_matches_breakdown() {
        let g = chain(1.0);
        let mut t = Tape::new();
        let s = onehots(&mut t, &[0, 1], 2);
        let (root, b) = schedule_loss(&mut t, &g, &s, 2, 10.0).unwrap();
        assert_eq!(t.scalar(root), b.total);
        assert!((b.entropy - 2f64.ln()).abs() < 1e-12);
        assert_eq!(b.comm, 1.0);
        assert!((b.total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_examples() {
        let g = chain(1.0);
        let m = discrete_metrics(&g, &Schedule::new(vec![0, 1]), 2, 10.0).unwrap();
        assert_eq!((m.peak_mem, m.boundary_comm.clone(), m.lp_objective), (1.0, vec![1.0], 11.0));
        let m = discrete_metrics(&g, &Schedule::new(vec![0, 0]), 2, 10.0).unwrap();
        assert_eq!((m.peak_mem, m.boundary_comm.clone(), m.lp_objective), (2.0, vec![0.0], 20.0));
        assert!(matches!(
            discrete_metrics(&g, &Schedule::new(vec![1, 0]), 2, 10.0),
            Err(LossError::Illegal(_))
        ));

        let g = SchedGraph::new(
            vec![Node::new("a", 1.5), Node::new("b", 2.0), Node::new("c", 0.5)],
            vec![],
        )
        .unwrap();
        let m = discrete_metrics(&g, &Schedule::new(vec![2, 2, 2]), 4, 3.0).unwrap();
        assert_eq!(m.comm_total, 0.0);
        assert_eq!(m.peak_mem, 4.0);
    }

    #[test]
    fn progress() {
        assert_eq!(normalized_progress(&[20.0, 11.0, 15.0]), vec![1.0, 0.55, 0.55]);
        assert_eq!(normalized_progress(&[3.0, 3.0, 3.0]), vec![1.0; 3]);
        let p = normalized_progress(&[10.0, 8.0, 5.0, 1.0]);
        assert!(p.windows(2).all(|w| w[1] < w[0]));
        assert!(normalized_progress(&[]).is_empty());
    }

    #[test]
    fn loss_agrees_with_evaluator() {
        let g = SchedGraph::new(
            (0..4).map(|i| Node::new(format!("n{i}"), 1.0)).collect(),
            vec![
                Edge::new("n0", "n1", 2.0, 0),
                Edge::new("n0", "n2", 3.0, 0),
                Edge::new("n1", "n3", 1.0, 0),
                Edge::new("n2", "n3", 0.5, 0),
            ],
        )
        .unwrap();
        let stages = [0, 1, 3, 3];
        let lc = comm_of(&g, &stages, 4);
        let m = evaluate(&g, &stages, 4, 1.0);
        assert!((lc * g.total_comm() - m.comm_total).abs() < 1e-12);
    }
}
