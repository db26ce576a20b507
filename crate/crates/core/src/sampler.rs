//! Constrained Gumbel-Softmax sampling.
//!
//! Every node samples a stage from `softmax(logits + g, tau)` restricted to a
//! 0/1 mask of legal stages. The mask for a child is the cumulative sum of a
//! one-hot placed at the child's minimum legal stage given a parent's hard
//! sample, intersected over all parents. Sampling nodes in topological order
//! therefore yields schedules that satisfy every difference constraint.
//!
//! Masks are built from hard samples and enter the tape as constants: no
//! gradient flows from a child's mask back into its parents.

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AdError, DiffVector, Tape};
use crate::engine::ParamMatrix;
use crate::graph::{SchedGraph, Schedule};

const UNIFORM_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("no legal stage left: minimum legal stage {min_stage} exceeds {}", .latency - 1)]
    Infeasible { min_stage: i64, latency: usize },
    #[error("latency {latency} is below the minimum feasible latency {required}")]
    LatencyTooSmall { latency: usize, required: usize },
    #[error("mask is empty")]
    EmptyMask,
    #[error("expected a one-hot vector of length {0}")]
    NotOneHot(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Ad(#[from] AdError),
}

/// 0/1 vector over stages; `true` marks a legal stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintMask(Vec<bool>);

impl ConstraintMask {
    pub fn ones(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| b != 0).collect())
    }

    /// Ones on `[lo, hi]`, zeros elsewhere.
    pub fn range(len: usize, lo: usize, hi: usize) -> Self {
        Self((0..len).map(|k| k >= lo && k <= hi).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.0.iter().map(|&b| b as u8).collect()
    }

    pub fn allows(&self, stage: usize) -> bool {
        self.0.get(stage).copied().unwrap_or(false)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn is_feasible(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn first_allowed(&self) -> Option<usize> {
        self.0.iter().position(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelNoise(Vec<f64>);

impl GumbelNoise {
    pub fn new(g: Vec<f64>) -> Self {
        Self(g)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Inverse-CDF transform of a uniform draw into a standard Gumbel draw.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}

pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> GumbelNoise {
    GumbelNoise((0..len).map(|_| gumbel_from_uniform(rng.gen::<f64>())).collect())
}

/// Mask of stages a child may take when its parent sits at `parent_stage`
/// and the edge constant is `c` (`s_parent - s_child <= c`).
pub fn mask_from_stage(parent_stage: usize, c: i64, latency: usize) -> Result<ConstraintMask, SampleError> {
    let min_stage = parent_stage as i64 - c;
    if min_stage > latency as i64 - 1 {
        return Err(SampleError::Infeasible { min_stage, latency });
    }
    let lo = min_stage.max(0) as usize;
    Ok(ConstraintMask((0..latency).map(|k| k >= lo).collect()))
}

/// The T_<= transform: cumsum of the parent one-hot shifted right by `-c`.
pub fn mask_from_parent(parent_onehot: &[f64], c: i64, latency: usize) -> Result<ConstraintMask, SampleError> {
    if parent_onehot.len() != latency {
        return Err(SampleError::NotOneHot(latency));
    }
    let ones: Vec<usize> = parent_onehot
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, _)| i)
        .collect();
    match ones.as_slice() {
        [t] if parent_onehot[*t] == 1.0 => mask_from_stage(*t, c, latency),
        _ => Err(SampleError::NotOneHot(latency)),
    }
}

/// Elementwise AND. An empty list gives the all-ones mask.
pub fn combine_masks(masks: &[ConstraintMask], latency: usize) -> Result<ConstraintMask, SampleError> {
    let mut out = ConstraintMask::ones(latency);
    for m in masks {
        if m.len() != latency {
            return Err(SampleError::Shape(format!("mask of length {} for latency {latency}", m.len())));
        }
        for (o, &b) in out.0.iter_mut().zip(&m.0) {
            *o &= b;
        }
    }
    if out.is_feasible() {
        Ok(out)
    } else {
        Err(SampleError::EmptyMask)
    }
}

/// One masked Gumbel-Softmax draw: `soft = softmax(logits + g, tau) * mask`
/// (not renormalized) and `hard` its straight-through one-hot.
pub fn constrained_sample(
    tape: &mut Tape,
    logits: DiffVector,
    mask: &ConstraintMask,
    noise: &GumbelNoise,
    tau: f64,
) -> Result<(DiffVector, DiffVector), SampleError> {
    if logits.len() != mask.len() || noise.len() != mask.len() {
        return Err(SampleError::Shape(format!(
            "logits {}, mask {}, noise {}",
            logits.len(),
            mask.len(),
            noise.len()
        )));
    }
    if !mask.is_feasible() {
        return Err(SampleError::EmptyMask);
    }
    let g = tape.constant(noise.values().to_vec());
    let perturbed = tape.add(logits, g)?;
    let probs = tape.softmax(perturbed, tau)?;
    let m = tape.constant(mask.weights());
    let soft = tape.mul(probs, m)?;
    let hard = tape.straight_through_onehot(soft)?;
    Ok((soft, hard))
}

/// One sampled schedule with everything needed to replay it.
/// All vectors are indexed by node declaration order.
#[derive(Debug, Clone)]
pub struct Sample {
    pub params: Vec<DiffVector>,
    pub soft: Vec<DiffVector>,
    pub hard: Vec<DiffVector>,
    pub masks: Vec<ConstraintMask>,
    pub noise: Vec<GumbelNoise>,
    pub schedule: Schedule,
}

/// Static per-node window `[0, latest]` from the latency bound. Only
/// negative edge constants make it narrower than all stages.
pub fn deadline_masks(g: &SchedGraph, latency: usize) -> Result<Vec<ConstraintMask>, SampleError> {
    g.latest_stages(latency)
        .into_iter()
        .map(|latest| {
            if latest < 0 {
                Err(SampleError::LatencyTooSmall {
                    latency,
                    required: g.min_feasible_latency(),
                })
            } else {
                Ok(ConstraintMask::range(latency, 0, latest as usize))
            }
        })
        .collect()
}

/// Samples every node in topological order. Each node's mask combines its
/// deadline window with one mask per incoming edge built from the parent's
/// hard sample. Fresh Gumbel noise is drawn for every node.
pub fn sample_schedule<R: Rng + ?Sized>(
    tape: &mut Tape,
    g: &SchedGraph,
    latency: usize,
    weights: &ParamMatrix,
    tau: f64,
    rng: &mut R,
) -> Result<Sample, SampleError> {
    let deadlines = deadline_masks(g, latency)?;
    run_sampling(tape, g, latency, weights, tau, |v, stages, _| {
        let mut masks = Vec::with_capacity(g.incoming(v).len() + 1);
        masks.push(deadlines[v].clone());
        for &e in g.incoming(v) {
            let (u, _) = g.endpoints(e);
            masks.push(mask_from_stage(stages[u], g.edges()[e].sdc_c, latency)?);
        }
        let mask = combine_masks(&masks, latency)?;
        Ok((mask, gumbel_noise(rng, latency)))
    })
}

/// Rebuilds a sample on a fresh tape with frozen masks and noise.
pub fn replay(
    tape: &mut Tape,
    g: &SchedGraph,
    weights: &ParamMatrix,
    tau: f64,
    masks: &[ConstraintMask],
    noise: &[GumbelNoise],
) -> Result<Sample, SampleError> {
    let latency = weights.cols();
    run_sampling(tape, g, latency, weights, tau, |v, _, _| {
        Ok((masks[v].clone(), noise[v].clone()))
    })
}

fn run_sampling(
    tape: &mut Tape,
    g: &SchedGraph,
    latency: usize,
    weights: &ParamMatrix,
    tau: f64,
    mut draw: impl FnMut(usize, &[usize], &mut Tape) -> Result<(ConstraintMask, GumbelNoise), SampleError>,
) -> Result<Sample, SampleError> {
    let n = g.node_count();
    if weights.rows() != n || weights.cols() != latency {
        return Err(SampleError::Shape(format!(
            "parameters {}x{}, graph needs {n}x{latency}",
            weights.rows(),
            weights.cols()
        )));
    }
    let params: Vec<DiffVector> = (0..n).map(|v| tape.param(weights.row(v).to_vec())).collect();
    let mut soft = vec![None; n];
    let mut hard = vec![None; n];
    let mut masks = vec![ConstraintMask::ones(latency); n];
    let mut noise = vec![GumbelNoise::zeros(latency); n];
    let mut stages = vec![0usize; n];

    for &v in g.topological_order() {
        let (mask, gv) = draw(v, &stages, tape)?;
        let (s, h) = constrained_sample(tape, params[v], &mask, &gv, tau)?;
        stages[v] = tape
            .value(h)
            .iter()
            .position(|&x| x == 1.0)
            .expect("one-hot has a hot entry");
        soft[v] = Some(s);
        hard[v] = Some(h);
        masks[v] = mask;
        noise[v] = gv;
    }
    let visited = |x: Option<DiffVector>| x.expect("topological order covers every node");
    Ok(Sample {
        params,
        soft: soft.into_iter().map(visited).collect(),
        hard: hard.into_iter().map(visited).collect(),
        masks,
        noise,
        schedule: Schedule::new(stages),
    })
}
