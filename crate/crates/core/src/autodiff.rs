//! Vector-valued reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation in execution order together with its
//! forward value. [`Tape::backward`] walks the records in reverse, so the
//! inputs of any record always precede it. The op set is deliberately small:
//! it covers what the sampler and the losses need and nothing more.
//!
//! Binary elementwise ops broadcast a length-1 operand against the other side.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AdError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("division by zero at entry {0}")]
    DivisionByZero(usize),
    #[error("log of nonpositive value {value} at entry {index}")]
    NonPositiveLog { index: usize, value: f64 },
    #[error("softmax temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("one-hot extraction needs a finite positive entry")]
    DegenerateOneHot,
    #[error("backward root must be scalar, got length {0}")]
    NonScalarRoot(usize),
    #[error("empty vector")]
    Empty,
}

/// Handle to a vector recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffVector {
    idx: usize,
    len: usize,
}

impl DiffVector {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn index(&self) -> usize {
        self.idx
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    Add(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Log(usize),
    Exp(usize),
    Sum(usize),
    Dot(usize, Vec<f64>),
    Cumsum(usize),
    Softmax(usize, f64),
    StraightThrough(usize),
}

#[derive(Debug, Clone)]
struct Record {
    op: Op,
    value: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    records: Vec<Record>,
    params: Vec<usize>,
}

/// Gradients of a scalar root with respect to every parameter on the tape.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: BTreeMap<usize, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, param: &DiffVector) -> Option<&[f64]> {
        self.by_param.get(&param.idx).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

fn broadcast_len(a: usize, b: usize) -> Result<usize, AdError> {
    match (a, b) {
        (x, y) if x == y => Ok(x),
        (1, y) => Ok(y),
        (x, 1) => Ok(x),
        (x, y) => Err(AdError::LengthMismatch(x, y)),
    }
}

#[inline]
fn at(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

fn accumulate(slot: &mut [f64], upstream: &[f64]) {
    if slot.len() == upstream.len() {
        for (s, u) in slot.iter_mut().zip(upstream) {
            *s += u;
        }
    } else {
        // broadcast operand: reduce
        slot[0] += upstream.iter().sum::<f64>();
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> DiffVector {
        let len = value.len();
        self.records.push(Record { op, value });
        DiffVector {
            idx: self.records.len() - 1,
            len,
        }
    }

    pub fn value(&self, x: DiffVector) -> &[f64] {
        &self.records[x.idx].value
    }

    pub fn scalar(&self, x: DiffVector) -> f64 {
        self.records[x.idx].value[0]
    }

    pub fn constant(&mut self, v: Vec<f64>) -> DiffVector {
        self.push(Op::Constant, v)
    }

    pub fn param(&mut self, v: Vec<f64>) -> DiffVector {
        let x = self.push(Op::Param, v);
        self.params.push(x.idx);
        x
    }

    fn binary(
        &mut self,
        x: DiffVector,
        y: DiffVector,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>, AdError> {
        let n = broadcast_len(x.len, y.len)?;
        let (a, b) = (&self.records[x.idx].value, &self.records[y.idx].value);
        Ok((0..n).map(|i| f(at(a, i), at(b, i))).collect())
    }

    pub fn add(&mut self, x: DiffVector, y: DiffVector) -> Result<DiffVector, AdError> {
        let v = self.binary(x, y, |a, b| a + b)?;
        Ok(self.push(Op::Add(x.idx, y.idx), v))
    }

    pub fn mul(&mut self, x: DiffVector, y: DiffVector) -> Result<DiffVector, AdError> {
        let v = self.binary(x, y, |a, b| a * b)?;
        Ok(self.push(Op::Mul(x.idx, y.idx), v))
    }

    pub fn div(&mut self, x: DiffVector, y: DiffVector) -> Result<DiffVector, AdError> {
        if let Some(i) = self.value(y).iter().position(|&d| d == 0.0) {
            return Err(AdError::DivisionByZero(i));
        }
        let v = self.binary(x, y, |a, b| a / b)?;
        Ok(self.push(Op::Div(x.idx, y.idx), v))
    }

    /// `x * k` for a constant scalar `k`.
    pub fn scale(&mut self, x: DiffVector, k: f64) -> Result<DiffVector, AdError> {
        let k = self.constant(vec![k]);
        self.mul(x, k)
    }

    /// `x + k` for a constant scalar `k`.
    pub fn shift(&mut self, x: DiffVector, k: f64) -> Result<DiffVector, AdError> {
        let k = self.constant(vec![k]);
        self.add(x, k)
    }

    pub fn log(&mut self, x: DiffVector) -> Result<DiffVector, AdError> {
        let xs = self.value(x);
        if let Some((index, &value)) = xs.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(AdError::NonPositiveLog { index, value });
        }
        let v = xs.iter().map(|a| a.ln()).collect();
        Ok(self.push(Op::Log(x.idx), v))
    }

    pub fn exp(&mut self, x: DiffVector) -> DiffVector {
        let v = self.value(x).iter().map(|a| a.exp()).collect();
        self.push(Op::Exp(x.idx), v)
    }

    pub fn sum(&mut self, x: DiffVector) -> DiffVector {
        let s = self.value(x).iter().sum();
        self.push(Op::Sum(x.idx), vec![s])
    }

    /// Inner product with a constant weight vector.
    pub fn dot(&mut self, x: DiffVector, w: &[f64]) -> Result<DiffVector, AdError> {
        if x.len != w.len() {
            return Err(AdError::LengthMismatch(x.len, w.len()));
        }
        let s = self.value(x).iter().zip(w).map(|(a, b)| a * b).sum();
        Ok(self.push(Op::Dot(x.idx, w.to_vec()), vec![s]))
    }

    pub fn cumsum(&mut self, x: DiffVector) -> DiffVector {
        let mut acc = 0.0;
        let v = self
            .value(x)
            .iter()
            .map(|a| {
                acc += a;
                acc
            })
            .collect();
        self.push(Op::Cumsum(x.idx), v)
    }

    /// `softmax(x / tau)`, stabilized by subtracting the maximum.
    pub fn softmax(&mut self, x: DiffVector, tau: f64) -> Result<DiffVector, AdError> {
        if !(tau > 0.0) {
            return Err(AdError::BadTemperature(tau));
        }
        if x.len == 0 {
            return Err(AdError::Empty);
        }
        let v = softmax_values(self.value(x), tau);
        Ok(self.push(Op::Softmax(x.idx, tau), v))
    }

    /// Hard one-hot of the argmax (lowest index wins ties). The backward pass
    /// hands the upstream gradient to `soft` unchanged.
    pub fn straight_through_onehot(&mut self, soft: DiffVector) -> Result<DiffVector, AdError> {
        let k = argmax(self.value(soft)).ok_or(AdError::DegenerateOneHot)?;
        let mut v = vec![0.0; soft.len];
        v[k] = 1.0;
        Ok(self.push(Op::StraightThrough(soft.idx), v))
    }

    pub fn backward(&self, root: DiffVector) -> Result<Gradients, AdError> {
        if root.len != 1 {
            return Err(AdError::NonScalarRoot(root.len));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.idx + 1];
        grads[root.idx] = Some(vec![1.0]);

        for i in (0..=root.idx).rev() {
            let Some(g) = grads[i].take() else { continue };
            let rec = &self.records[i];
            match &rec.op {
                Op::Constant => {}
                Op::Param => {
                    grads[i] = Some(g);
                }
                Op::Add(a, b) => {
                    self.send(&mut grads, *a, &g);
                    self.send(&mut grads, *b, &g);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.records[*a].value, &self.records[*b].value);
                    let ga: Vec<f64> = g.iter().enumerate().map(|(k, u)| u * at(vb, k)).collect();
                    let gb: Vec<f64> = g.iter().enumerate().map(|(k, u)| u * at(va, k)).collect();
                    self.send(&mut grads, *a, &ga);
                    self.send(&mut grads, *b, &gb);
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&self.records[*a].value, &self.records[*b].value);
                    let ga: Vec<f64> = g.iter().enumerate().map(|(k, u)| u / at(vb, k)).collect();
                    let gb: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(k, u)| {
                            let d = at(vb, k);
                            -u * at(va, k) / (d * d)
                        })
                        .collect();
                    self.send(&mut grads, *a, &ga);
                    self.send(&mut grads, *b, &gb);
                }
                Op::Log(a) => {
                    let va = &self.records[*a].value;
                    let ga: Vec<f64> = g.iter().zip(va).map(|(u, x)| u / x).collect();
                    self.send(&mut grads, *a, &ga);
                }
                Op::Exp(a) => {
                    let ga: Vec<f64> = g.iter().zip(&rec.value).map(|(u, y)| u * y).collect();
                    self.send(&mut grads, *a, &ga);
                }
                Op::Sum(a) => {
                    let n = self.records[*a].value.len();
                    self.send(&mut grads, *a, &vec![g[0]; n]);
                }
                Op::Dot(a, w) => {
                    let ga: Vec<f64> = w.iter().map(|x| x * g[0]).collect();
                    self.send(&mut grads, *a, &ga);
                }
                Op::Cumsum(a) => {
                    // reversed cumulative sum of the upstream gradient
                    let mut ga = g.clone();
                    for k in (0..ga.len().saturating_sub(1)).rev() {
                        ga[k] += ga[k + 1];
                    }
                    self.send(&mut grads, *a, &ga);
                }
                Op::Softmax(a, tau) => {
                    let y = &rec.value;
                    let inner: f64 = g.iter().zip(y).map(|(u, p)| u * p).sum();
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(u, p)| p * (u - inner) / tau)
                        .collect();
                    self.send(&mut grads, *a, &ga);
                }
                Op::StraightThrough(a) => {
                    self.send(&mut grads, *a, &g);
                }
            }
        }

        let by_param = self
            .params
            .iter()
            .filter(|&&p| p <= root.idx)
            .map(|&p| {
                let g = grads[p]
                    .take()
                    .unwrap_or_else(|| vec![0.0; self.records[p].value.len()]);
                (p, g)
            })
            .collect();
        Ok(Gradients { by_param })
    }

    fn send(&self, grads: &mut [Option<Vec<f64>>], target: usize, upstream: &[f64]) {
        if matches!(self.records[target].op, Op::Constant) {
            return;
        }
        let slot = grads[target].get_or_insert_with(|| vec![0.0; self.records[target].value.len()]);
        accumulate(slot, upstream);
    }
}

pub(crate) fn softmax_values(x: &[f64], tau: f64) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|a| ((a - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the largest finite positive entry, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if !(x.is_finite() && x > 0.0) {
            continue;
        }
        match best {
            Some(b) if v[b] >= x => {}
            _ => best = Some(i),
        }
    }
    best
}
