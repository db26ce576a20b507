//! Reference schedulers and the ILP export.
//!
//! `brute_force` is the exact oracle for small instances. `asap`, `alap`
//! and `greedy_balance` are the usual list-scheduling style comparison
//! points. `export_ilp` writes the integer program (selection binaries,
//! difference rows, per-stage memory with a peak bound, and linearized
//! boundary crossings) in LP file format so it can be handed to any solver.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{SchedGraph, Schedule};
use crate::losses::evaluate;

/// Largest search space `brute_force` accepts, as `L^|V|`.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("latency {latency} is infeasible: the graph needs at least {required} stages")]
    Infeasible { latency: usize, required: usize },
    #[error("instance too large for exhaustive search: {latency}^{nodes} assignments")]
    TooLarge { latency: usize, nodes: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum IlpError {
    #[error("assignment is missing variable {0:?}")]
    MissingVariable(String),
}

fn check_latency(g: &SchedGraph, latency: usize) -> Result<(), BaselineError> {
    let required = g.min_feasible_latency();
    if latency < required || latency == 0 {
        return Err(BaselineError::Infeasible {
            latency,
            required: required.max(1),
        });
    }
    Ok(())
}

fn better(obj: f64, stages: &[usize], best: &Option<(f64, Vec<usize>)>) -> bool {
    match best {
        None => true,
        Some((b, bs)) => {
            let tol = TIE_TOL * b.abs().max(1.0);
            obj < b - tol || ((obj - b).abs() <= tol && stages < bs.as_slice())
        }
    }
}

/// Exhaustive depth-first search in topological order. Each node only
/// ranges over stages its already-placed parents allow, so every leaf is a
/// legal schedule. Ties go to the lexicographically smallest stage tuple.
pub fn brute_force(g: &SchedGraph, latency: usize, ratio: f64) -> Result<(Schedule, f64), BaselineError> {
    check_latency(g, latency)?;
    let n = g.node_count();
    if (latency as f64).powi(n as i32) > BRUTE_FORCE_LIMIT {
        return Err(BaselineError::TooLarge { latency, nodes: n });
    }
    let latest = g.latest_stages(latency);
    let order = g.topological_order();
    let mut stages = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;

    fn dfs(
        depth: usize,
        g: &SchedGraph,
        order: &[usize],
        latest: &[i64],
        latency: usize,
        ratio: f64,
        stages: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if depth == order.len() {
            let obj = evaluate(g, stages, latency, ratio).lp_objective;
            if better(obj, stages, best) {
                *best = Some((obj, stages.clone()));
            }
            return;
        }
        let v = order[depth];
        let lo = g
            .incoming(v)
            .iter()
            .map(|&e| stages[g.endpoints(e).0] as i64 - g.edges()[e].sdc_c)
            .fold(0i64, i64::max);
        for s in lo..=latest[v] {
            stages[v] = s as usize;
            dfs(depth + 1, g, order, latest, latency, ratio, stages, best);
        }
    }

    dfs(0, g, order, &latest, latency, ratio, &mut stages, &mut best);
    let (obj, stages) = best.expect("a feasible latency admits at least one schedule");
    Ok((Schedule::new(stages), obj))
}

/// Every node at its earliest legal stage.
pub fn asap(g: &SchedGraph, latency: usize) -> Result<Schedule, BaselineError> {
    check_latency(g, latency)?;
    Ok(Schedule::new(g.earliest_stages()))
}

/// Every node at its latest legal stage.
pub fn alap(g: &SchedGraph, latency: usize) -> Result<Schedule, BaselineError> {
    check_latency(g, latency)?;
    Ok(Schedule::new(
        g.latest_stages(latency).into_iter().map(|s| s as usize).collect(),
    ))
}

/// Places nodes one at a time in topological order, each at the legal stage
/// that raises the partial objective least (earliest stage on ties).
pub fn greedy_balance(g: &SchedGraph, latency: usize, ratio: f64) -> Result<Schedule, BaselineError> {
    check_latency(g, latency)?;
    let latest = g.latest_stages(latency);
    let n = g.node_count();
    let mut stages = vec![0usize; n];
    let mut stage_mem = vec![0.0; latency];
    let mut peak: f64 = 0.0;
    for &v in g.topological_order() {
        let lo = g
            .incoming(v)
            .iter()
            .map(|&e| stages[g.endpoints(e).0] as i64 - g.edges()[e].sdc_c)
            .fold(0i64, i64::max) as usize;
        let mem = g.nodes()[v].mem;
        let mut choice: Option<(f64, usize)> = None;
        for s in lo..=latest[v] as usize {
            // all parents are already placed; children are not
            let comm: f64 = g
                .incoming(v)
                .iter()
                .map(|&e| {
                    let u = g.endpoints(e).0;
                    g.edges()[e].comm * s.saturating_sub(stages[u]) as f64
                })
                .sum();
            let delta = comm + ratio * ((stage_mem[s] + mem).max(peak) - peak);
            if choice.map_or(true, |(d, _)| delta < d - TIE_TOL) {
                choice = Some((delta, s));
            }
        }
        let (_, s) = choice.expect("window is nonempty for a feasible latency");
        stages[v] = s;
        stage_mem[s] += mem;
        peak = peak.max(stage_mem[s]);
    }
    Ok(Schedule::new(stages))
}

/// Uniformly random legal schedule: each node, in topological order, picks
/// uniformly among the stages its parents and the latency bound allow.
pub fn random_legal<R: Rng + ?Sized>(g: &SchedGraph, latency: usize, rng: &mut R) -> Result<Schedule, BaselineError> {
    check_latency(g, latency)?;
    let latest = g.latest_stages(latency);
    let mut stages = vec![0usize; g.node_count()];
    for &v in g.topological_order() {
        let lo = g
            .incoming(v)
            .iter()
            .map(|&e| stages[g.endpoints(e).0] as i64 - g.edges()[e].sdc_c)
            .fold(0i64, i64::max) as usize;
        stages[v] = rng.gen_range(lo..=latest[v] as usize);
    }
    Ok(Schedule::new(stages))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(String, f64)>,
}

/// LP-safe variable stems for node ids. Characters outside `[A-Za-z0-9_.]`
/// become `_`; if that makes two ids collide, the node index is appended.
fn node_names(g: &SchedGraph) -> Vec<String> {
    let clean: Vec<String> = g
        .nodes()
        .iter()
        .map(|n| {
            n.id.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
                .collect()
        })
        .collect();
    let unique = clean.iter().collect::<HashSet<_>>().len() == clean.len();
    if unique {
        clean
    } else {
        clean.into_iter().enumerate().map(|(i, s)| format!("{s}__{i}")).collect()
    }
}

pub fn stage_var(node: &str, stage: usize) -> String {
    format!("s_{node}_{stage}")
}

pub fn product_var(edge: usize, boundary: usize) -> String {
    format!("y_{edge}_{boundary}")
}

/// Builds the integer program for `min sum_i m_i + ratio * r`.
pub fn export_ilp(g: &SchedGraph, latency: usize, ratio: f64) -> IlpModel {
    let names = node_names(g);
    let mut variables = Vec::new();
    let mut constraints = Vec::new();
    let binary = |name: String| Variable {
        name,
        kind: VarKind::Binary,
    };
    let continuous = |name: String| Variable {
        name,
        kind: VarKind::Continuous,
    };

    for name in &names {
        for j in 0..latency {
            variables.push(binary(stage_var(name, j)));
        }
        constraints.push(Constraint {
            name: format!("sel_{name}"),
            terms: (0..latency).map(|j| (stage_var(name, j), 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }

    for (e, edge) in g.edges().iter().enumerate() {
        let (k, t) = g.endpoints(e);
        let mut terms: Vec<(String, f64)> = Vec::new();
        for j in 1..latency {
            terms.push((stage_var(&names[k], j), j as f64));
        }
        for j in 1..latency {
            terms.push((stage_var(&names[t], j), -(j as f64)));
        }
        constraints.push(Constraint {
            name: format!("dep_{e}"),
            terms,
            sense: Sense::Le,
            rhs: edge.sdc_c as f64,
        });
    }

    variables.push(continuous("r".into()));
    for j in 0..latency {
        variables.push(continuous(format!("r_{j}")));
        let mut terms: Vec<(String, f64)> = g
            .nodes()
            .iter()
            .zip(&names)
            .filter(|(n, _)| n.mem != 0.0)
            .map(|(n, name)| (stage_var(name, j), n.mem))
            .collect();
        terms.push((format!("r_{j}"), -1.0));
        constraints.push(Constraint {
            name: format!("mem_{j}"),
            terms,
            sense: Sense::Eq,
            rhs: 0.0,
        });
        constraints.push(Constraint {
            name: format!("peak_{j}"),
            terms: vec![(format!("r_{j}"), 1.0), ("r".into(), -1.0)],
            sense: Sense::Le,
            rhs: 0.0,
        });
    }

    let mut objective = Vec::new();
    if g.edge_count() > 0 {
        for i in 0..latency.saturating_sub(1) {
            let m = format!("m_{i}");
            variables.push(continuous(m.clone()));
            let mut sum_terms = Vec::new();
            for (e, edge) in g.edges().iter().enumerate() {
                let (k, t) = g.endpoints(e);
                let y = product_var(e, i);
                variables.push(binary(y.clone()));
                // A = sum_{a<=i} s_k,a ; B = sum_{h>=i+1} s_t,h
                let a: Vec<(String, f64)> = (0..=i).map(|a| (stage_var(&names[k], a), 1.0)).collect();
                let b: Vec<(String, f64)> =
                    (i + 1..latency).map(|h| (stage_var(&names[t], h), 1.0)).collect();
                let neg = |v: &[(String, f64)]| v.iter().map(|(n, c)| (n.clone(), -c)).collect::<Vec<_>>();
                constraints.push(Constraint {
                    name: format!("ylo_{e}_{i}"),
                    terms: [vec![(y.clone(), 1.0)], neg(&a), neg(&b)].concat(),
                    sense: Sense::Ge,
                    rhs: -1.0,
                });
                constraints.push(Constraint {
                    name: format!("ya_{e}_{i}"),
                    terms: [vec![(y.clone(), 1.0)], neg(&a)].concat(),
                    sense: Sense::Le,
                    rhs: 0.0,
                });
                constraints.push(Constraint {
                    name: format!("yb_{e}_{i}"),
                    terms: [vec![(y.clone(), 1.0)], neg(&b)].concat(),
                    sense: Sense::Le,
                    rhs: 0.0,
                });
                if edge.comm != 0.0 {
                    sum_terms.push((y, edge.comm));
                }
            }
            sum_terms.push((m.clone(), -1.0));
            constraints.push(Constraint {
                name: format!("comm_{i}"),
                terms: sum_terms,
                sense: Sense::Eq,
                rhs: 0.0,
            });
            objective.push((m, 1.0));
        }
    }
    objective.push(("r".into(), ratio));
    IlpModel {
        variables,
        constraints,
        objective,
    }
}

/// Variable values that encode `schedule` in the model from [`export_ilp`],
/// with every auxiliary variable set consistently.
pub fn assignment_for(g: &SchedGraph, schedule: &Schedule, latency: usize) -> HashMap<String, f64> {
    let names = node_names(g);
    let mut out = HashMap::new();
    for (v, name) in names.iter().enumerate() {
        for j in 0..latency {
            out.insert(stage_var(name, j), (schedule.stage(v) == j) as u8 as f64);
        }
    }
    let metrics = evaluate(g, schedule.stages(), latency, 0.0);
    for (j, &m) in metrics.stage_mem.iter().enumerate() {
        out.insert(format!("r_{j}"), m);
    }
    out.insert("r".into(), metrics.peak_mem);
    if g.edge_count() > 0 {
        for (i, &m) in metrics.boundary_comm.iter().enumerate() {
            out.insert(format!("m_{i}"), m);
            for e in 0..g.edge_count() {
                let (k, t) = g.endpoints(e);
                let crossing = schedule.stage(k) <= i && schedule.stage(t) > i;
                out.insert(product_var(e, i), crossing as u8 as f64);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlpCheck {
    pub feasible: bool,
    pub violated: Vec<String>,
    pub objective: f64,
}

/// Evaluates every row, bound and integrality requirement at `assignment`.
pub fn check_ilp_assignment(model: &IlpModel, assignment: &HashMap<String, f64>) -> Result<IlpCheck, IlpError> {
    const FEAS_TOL: f64 = 1e-9;
    let value = |name: &str| {
        assignment
            .get(name)
            .copied()
            .ok_or_else(|| IlpError::MissingVariable(name.to_string()))
    };
    let mut violated = Vec::new();
    for var in &model.variables {
        let x = value(&var.name)?;
        let ok = match var.kind {
            VarKind::Binary => x == 0.0 || x == 1.0,
            VarKind::Continuous => x >= -FEAS_TOL,
        };
        if !ok {
            violated.push(format!("bound:{}", var.name));
        }
    }
    for row in &model.constraints {
        let mut lhs = 0.0;
        for (name, coef) in &row.terms {
            lhs += coef * value(name)?;
        }
        let tol = FEAS_TOL * row.rhs.abs().max(1.0);
        let ok = match row.sense {
            Sense::Le => lhs <= row.rhs + tol,
            Sense::Ge => lhs >= row.rhs - tol,
            Sense::Eq => (lhs - row.rhs).abs() <= tol,
        };
        if !ok {
            violated.push(row.name.clone());
        }
    }
    let mut objective = 0.0;
    for (name, coef) in &model.objective {
        objective += coef * value(name)?;
    }
    Ok(IlpCheck {
        feasible: violated.is_empty(),
        violated,
        objective,
    })
}

fn render_number(x: f64) -> String {
    // Display for f64 never switches to exponent notation
    let s = format!("{x}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn render_terms(out: &mut String, terms: &[(String, f64)]) {
    const PER_LINE: usize = 8;
    if terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (i, (name, coef)) in terms.iter().enumerate() {
        if i > 0 && i % PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let (sign, mag) = if *coef < 0.0 { ("-", -coef) } else { ("+", *coef) };
        if i == 0 {
            if sign == "-" {
                out.push_str(" -");
            }
        } else {
            let _ = write!(out, " {sign}");
        }
        if mag == 1.0 {
            let _ = write!(out, " {name}");
        } else {
            let _ = write!(out, " {} {name}", render_number(mag));
        }
    }
}

impl IlpModel {
    pub fn count(&self, kind: VarKind, prefix: &str) -> usize {
        self.variables
            .iter()
            .filter(|v| v.kind == kind && v.name.starts_with(prefix))
            .count()
    }

    pub fn rows_with_prefix(&self, prefix: &str) -> usize {
        self.constraints.iter().filter(|c| c.name.starts_with(prefix)).count()
    }

    /// LP file text: `Minimize`, `Subject To`, `Bounds`, `Binary`, `End`.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ peak-memory and inter-stage communication scheduling\n");
        out.push_str("Minimize\n obj:");
        render_terms(&mut out, &self.objective);
        out.push_str("\nSubject To\n");
        for row in &self.constraints {
            let _ = write!(out, " {}:", row.name);
            render_terms(&mut out, &row.terms);
            let _ = writeln!(out, " {} {}", row.sense.symbol(), render_number(row.rhs));
        }
        out.push_str("Bounds\n");
        for v in self.variables.iter().filter(|v| v.kind == VarKind::Continuous) {
            let _ = writeln!(out, " {} >= 0", v.name);
        }
        let binaries: Vec<&str> = self
            .variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| v.name.as_str())
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binary\n");
            for chunk in binaries.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_of(consts: &[i64]) -> SchedGraph {
        let n = consts.len() + 1;
        SchedGraph::new(
            (0..n).map(|i| Node::new(format!("n{i}"), 1.0)).collect(),
            consts
                .iter()
                .enumerate()
                .map(|(i, &c)| Edge::new(format!("n{i}"), format!("n{}", i + 1), 1.0, c))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn oracle_examples() {
        let g = chain_of(&[0]);
        let (s, obj) = brute_force(&g, 2, 10.0).unwrap();
        assert_eq!((s.stages(), obj), (&[0, 1][..], 11.0));

        let g = SchedGraph::new(vec![Node::new("a", 1.5)], vec![]).unwrap();
        let (s, obj) = brute_force(&g, 5, 10.0).unwrap();
        assert_eq!((s.stages(), obj), (&[0][..], 15.0));

        let g = SchedGraph::new(vec![Node::new("a", 1.0), Node::new("b", 1.0)], vec![]).unwrap();
        let (s, obj) = brute_force(&g, 2, 10.0).unwrap();
        assert_eq!((s.stages(), obj), (&[0, 1][..], 10.0));
    }

    #[test]
    fn oracle_guards() {
        let g = chain_of(&[-1]);
        assert_eq!(
            brute_force(&g, 1, 1.0),
            Err(BaselineError::Infeasible { latency: 1, required: 2 })
        );
        let g = SchedGraph::new((0..30).map(|i| Node::new(format!("n{i}"), 1.0)).collect(), vec![]).unwrap();
        assert!(matches!(brute_force(&g, 3, 1.0), Err(BaselineError::TooLarge { .. })));
    }

    #[test]
    fn asap_alap_examples() {
        let g = chain_of(&[0, 0]);
        assert_eq!(asap(&g, 4).unwrap().stages(), &[0, 0, 0]);
        assert_eq!(alap(&g, 4).unwrap().stages(), &[3, 3, 3]);
        let g = chain_of(&[-1, -1, -1]);
        assert_eq!(asap(&g, 5).unwrap().stages(), &[0, 1, 2, 3]);
        assert_eq!(alap(&g, 5).unwrap().stages(), &[1, 2, 3, 4]);
        assert!(asap(&g, 3).is_err());
    }

    #[test]
    fn greedy_examples() {
        let g = chain_of(&[0]);
        let s = greedy_balance(&g, 2, 10.0).unwrap();
        assert_eq!(s.stages(), &[0, 1]);
        assert_eq!(evaluate(&g, s.stages(), 2, 10.0).lp_objective, 11.0);

        let g = SchedGraph::new(vec![Node::new("a", 1.0)], vec![]).unwrap();
        assert_eq!(greedy_balance(&g, 3, 10.0).unwrap().stages(), &[0]);
    }

    #[test]
    fn random_legal_is_legal() {
        let g = chain_of(&[-1, 0, 2, -1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let s = random_legal(&g, 5, &mut rng).unwrap();
            assert!(g.is_legal(&s, 5));
        }
    }

    #[test]
    fn ilp_counts_for_chain() {
        let g = chain_of(&[0]);
        let m = export_ilp(&g, 2, 10.0);
        assert_eq!(m.count(VarKind::Binary, "s_"), 4);
        assert_eq!(m.rows_with_prefix("dep_"), 1);
        assert_eq!(m.rows_with_prefix("mem_"), 2);
        assert_eq!(m.count(VarKind::Continuous, "m_"), 1);
        assert_eq!(m.count(VarKind::Binary, "y_"), 1);
    }

    #[test]
    fn ilp_without_edges() {
        let g = SchedGraph::new(vec![Node::new("a", 1.0), Node::new("b", 2.0)], vec![]).unwrap();
        let m = export_ilp(&g, 3, 7.0);
        assert_eq!(m.count(VarKind::Continuous, "m_"), 0);
        assert_eq!(m.objective, vec![("r".to_string(), 7.0)]);
    }

    #[test]
    fn ilp_checks() {
        let g = chain_of(&[0]);
        let model = export_ilp(&g, 2, 10.0);
        let (best, obj) = brute_force(&g, 2, 10.0).unwrap();
        let a = assignment_for(&g, &best, 2);
        let c = check_ilp_assignment(&model, &a).unwrap();
        assert!(c.feasible, "{:?}", c.violated);
        assert_eq!(c.objective, obj);

        let mut bad = a.clone();
        bad.insert("s_n0_1".into(), 1.0);
        let c = check_ilp_assignment(&model, &bad).unwrap();
        assert!(!c.feasible);
        assert!(c.violated.contains(&"sel_n0".to_string()));

        let zeros: HashMap<String, f64> = a.keys().map(|k| (k.clone(), 0.0)).collect();
        let c = check_ilp_assignment(&model, &zeros).unwrap();
        assert!(c.violated.iter().any(|r| r.starts_with("sel_")));

        let mut missing = a;
        missing.remove("r");
        assert_eq!(
            check_ilp_assignment(&model, &missing),
            Err(IlpError::MissingVariable("r".into()))
        );
    }

    #[test]
    fn lp_text_golden() {
        let g = chain_of(&[0]);
        let text = export_ilp(&g, 2, 10.0).to_lp_string();
        let expected = "\
\\ peak-memory and inter-stage communication scheduling
Minimize
 obj: m_0 + 10 r
Subject To
 sel_n0: s_n0_0 + s_n0_1 = 1
 sel_n1: s_n1_0 + s_n1_1 = 1
 dep_0: s_n0_1 - s_n1_1 <= 0
 mem_0: s_n0_0 + s_n1_0 - r_0 = 0
 peak_0: r_0 - r <= 0
 mem_1: s_n0_1 + s_n1_1 - r_1 = 0
 peak_1: r_1 - r <= 0
 ylo_0_0: y_0_0 - s_n0_0 - s_n1_1 >= -1
 ya_0_0: y_0_0 - s_n0_0 <= 0
 yb_0_0: y_0_0 - s_n1_1 <= 0
 comm_0: y_0_0 - m_0 = 0
Bounds
 r >= 0
 r_0 >= 0
 r_1 >= 0
 m_0 >= 0
Binary
 s_n0_0 s_n0_1 s_n1_0 s_n1_1 y_0_0
End
";
        assert_eq!(text, expected);
    }

    #[test]
    fn lp_numbers_never_use_exponents() {
        assert_eq!(render_number(1e-7), "0.0000001");
        assert_eq!(render_number(2.5e9), "2500000000");
        assert_eq!(render_number(-0.0), "0");
    }

    #[test]
    fn awkward_ids_are_sanitized() {
        let g = SchedGraph::new(
            vec![Node::new("a b", 1.0), Node::new("a-b", 1.0)],
            vec![Edge::new("a b", "a-b", 1.0, 0)],
        )
        .unwrap();
        let m = export_ilp(&g, 2, 1.0);
        let names: HashSet<_> = m.variables.iter().map(|v| v.name.clone()).collect();
        assert_eq!(names.len(), m.variables.len());
        assert!(m.variables.iter().all(|v| !v.name.contains(' ') && !v.name.contains('-')));
    }
}
