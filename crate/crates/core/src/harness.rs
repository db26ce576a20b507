//! Experiment orchestration and the on-disk formats: schedule JSON,
//! trajectory CSV, and comparison reports.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{alap, asap, brute_force, greedy_balance, BaselineError};
use crate::engine::{run_restarts, EngineError, RunConfig, TrajectoryPoint};
use crate::generator::{shape_stats, ShapeStats};
use crate::graph::{SchedGraph, Schedule};
use crate::losses::{evaluate, normalized_progress, DiscreteMetrics};

pub const TRAJECTORY_HEADER: &str =
    "epoch,wall_ms,loss_total,loss_entropy,loss_comm,peak_mem,comm_total,lp_objective,best_objective";

pub const REPORT_HEADER: &str = "method,sample,time_ms,best_objective,normalized";

/// Declared in every report: the comparison methods are local.
pub const BASELINE_NOTICE: &str = "baselines are local heuristics (asap, alap, greedy) and an exact \
enumeration oracle for small instances; no external ILP/CP solver is invoked";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schedule names unknown node {0:?}")]
    UnknownNode(String),
    #[error("schedule has no stage for node {0:?}")]
    MissingNode(String),
    #[error("unknown method {0:?} (expected diff, asap, alap, greedy or oracle)")]
    UnknownMethod(String),
    #[error("unexpected CSV header {0:?}")]
    BadHeader(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub peak_mem: f64,
    pub comm_total: f64,
    pub lp_objective: f64,
    pub ratio: f64,
}

impl From<&DiscreteMetrics> for MetricsSummary {
    fn from(m: &DiscreteMetrics) -> Self {
        Self {
            peak_mem: m.peak_mem,
            comm_total: m.comm_total,
            lp_objective: m.lp_objective,
            ratio: m.ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    #[serde(rename = "L")]
    pub latency: usize,
    pub stages: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSummary>,
}

impl ScheduleFile {
    pub fn new(g: &SchedGraph, schedule: &Schedule, latency: usize, metrics: Option<&DiscreteMetrics>) -> Self {
        Self {
            latency,
            stages: g
                .nodes()
                .iter()
                .zip(schedule.stages())
                .map(|(n, &s)| (n.id.clone(), s))
                .collect(),
            metrics: metrics.map(MetricsSummary::from),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule file is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Stages in node declaration order.
    pub fn schedule_for(&self, g: &SchedGraph) -> Result<Schedule, HarnessError> {
        if let Some(id) = self.stages.keys().find(|id| g.node_index(id).is_none()) {
            return Err(HarnessError::UnknownNode(id.clone()));
        }
        g.nodes()
            .iter()
            .map(|n| {
                self.stages
                    .get(&n.id)
                    .copied()
                    .ok_or_else(|| HarnessError::MissingNode(n.id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Schedule::new)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    epoch: usize,
    wall_ms: u64,
    loss_total: f64,
    loss_entropy: f64,
    loss_comm: f64,
    peak_mem: f64,
    comm_total: f64,
    lp_objective: f64,
    best_objective: f64,
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> Result<String, HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER.split(','))?;
    for p in points {
        w.serialize(TrajectoryRow {
            epoch: p.epoch,
            wall_ms: p.wall_ms,
            loss_total: p.loss_total,
            loss_entropy: p.loss_entropy,
            loss_comm: p.loss_comm,
            peak_mem: p.peak_mem,
            comm_total: p.comm_total,
            lp_objective: p.lp_objective,
            best_objective: p.best_so_far,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_trajectory_csv(text: &str) -> Result<Vec<TrajectoryPoint>, HarnessError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != TRAJECTORY_HEADER {
        return Err(HarnessError::BadHeader(header));
    }
    r.deserialize::<TrajectoryRow>()
        .map(|row| {
            let row = row?;
            Ok(TrajectoryPoint {
                epoch: row.epoch,
                wall_ms: row.wall_ms,
                loss_total: row.loss_total,
                loss_entropy: row.loss_entropy,
                loss_comm: row.loss_comm,
                peak_mem: row.peak_mem,
                comm_total: row.comm_total,
                lp_objective: row.lp_objective,
                best_so_far: row.best_objective,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Diff,
    Asap,
    Alap,
    Greedy,
    Oracle,
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diff" => Ok(Method::Diff),
            "asap" => Ok(Method::Asap),
            "alap" => Ok(Method::Alap),
            "greedy" => Ok(Method::Greedy),
            "oracle" => Ok(Method::Oracle),
            other => Err(HarnessError::UnknownMethod(other.to_string())),
        }
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Diff => "diff",
            Method::Asap => "asap",
            Method::Alap => "alap",
            Method::Greedy => "greedy",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub run: RunConfig,
    pub methods: Vec<Method>,
    /// Parallel restarts of the differentiable method, seeded `run.seed..`.
    pub seeds: usize,
    pub budget_ms: u64,
    pub sample_interval_ms: u64,
}

impl CompareConfig {
    /// One-second sampling over a one-minute budget.
    pub fn desk(run: RunConfig) -> Self {
        Self {
            run,
            methods: vec![Method::Diff, Method::Asap, Method::Alap, Method::Greedy, Method::Oracle],
            seeds: 1,
            budget_ms: 60_000,
            sample_interval_ms: 1_000,
        }
    }

    /// Eleven sampling points spaced 360 s apart.
    pub fn paper(run: RunConfig) -> Self {
        Self {
            budget_ms: 3_600_000,
            sample_interval_ms: 360_000,
            ..Self::desk(run)
        }
    }

    pub fn sample_times(&self) -> Vec<u64> {
        if self.budget_ms == 0 || self.sample_interval_ms == 0 {
            return vec![0];
        }
        (0..=self.budget_ms / self.sample_interval_ms)
            .map(|k| k * self.sample_interval_ms)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub time_ms: u64,
    pub best_objective: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSeries {
    pub method: Method,
    pub samples: Vec<SamplePoint>,
    pub final_objective: f64,
    pub schedule: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentEcho {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub version: String,
}

impl EnvironmentEcho {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub notice: String,
    pub graph: ShapeStats,
    pub config: CompareConfig,
    pub methods: Vec<MethodSeries>,
    /// Methods that were requested but could not run, with the reason.
    pub skipped: Vec<(Method, String)>,
    pub environment: EnvironmentEcho,
}

fn series(method: Method, g: &SchedGraph, times: &[u64], values: &[f64], schedule: &Schedule) -> MethodSeries {
    let normalized = normalized_progress(values);
    let mut best = f64::INFINITY;
    let samples = times
        .iter()
        .zip(values)
        .zip(normalized)
        .map(|((&time_ms, &v), normalized)| {
            best = best.min(v);
            SamplePoint {
                time_ms,
                best_objective: best,
                normalized,
            }
        })
        .collect();
    MethodSeries {
        method,
        samples,
        final_objective: best,
        schedule: g
            .nodes()
            .iter()
            .zip(schedule.stages())
            .map(|(n, &s)| (n.id.clone(), s))
            .collect(),
    }
}

/// Running best of the differentiable restarts at each sampling time. Each
/// run's first epoch always counts, so the first sample is the first legal
/// schedule any restart produced.
fn diff_values(runs: &[Vec<TrajectoryPoint>], times: &[u64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            runs.iter()
                .flat_map(|traj| {
                    traj.iter()
                        .enumerate()
                        .filter(move |(i, p)| *i == 0 || p.wall_ms <= t)
                        .map(|(_, p)| p.lp_objective)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Runs each requested method under the shared budget and samples its best
/// objective at every sampling time.
pub fn compare(g: &SchedGraph, config: &CompareConfig) -> Result<ExperimentReport, HarnessError> {
    let latency = config.run.latency;
    let ratio = config.run.ratio;
    let times = config.sample_times();
    let mut methods = Vec::new();
    let mut skipped = Vec::new();
    for &method in &config.methods {
        let constant = |s: Schedule| {
            let obj = evaluate(g, s.stages(), latency, ratio).lp_objective;
            series(method, g, &times, &vec![obj; times.len()], &s)
        };
        match method {
            Method::Diff => {
                let run = RunConfig {
                    timeout_ms: Some(config.budget_ms),
                    sample_interval_ms: Some(config.sample_interval_ms),
                    ..config.run.clone()
                };
                let seeds: Vec<u64> = (0..config.seeds.max(1) as u64)
                    .map(|k| config.run.seed.wrapping_add(k))
                    .collect();
                let results = run_restarts(g, &run, &seeds)?;
                let trajs: Vec<_> = results.iter().map(|r| r.trajectory.clone()).collect();
                let values = diff_values(&trajs, &times);
                let best = crate::engine::best_of(&results).expect("at least one restart");
                methods.push(series(method, g, &times, &values, &best.best_schedule));
            }
            Method::Asap => methods.push(constant(asap(g, latency)?)),
            Method::Alap => methods.push(constant(alap(g, latency)?)),
            Method::Greedy => methods.push(constant(greedy_balance(g, latency, ratio)?)),
            Method::Oracle => match brute_force(g, latency, ratio) {
                Ok((s, _)) => methods.push(constant(s)),
                Err(e @ BaselineError::TooLarge { .. }) => skipped.push((method, e.to_string())),
                Err(e) => return Err(e.into()),
            },
        }
    }
    Ok(ExperimentReport {
        notice: BASELINE_NOTICE.into(),
        graph: shape_stats(g),
        config: config.clone(),
        methods,
        skipped,
        environment: EnvironmentEcho::current(),
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_HEADER.split(','))?;
        for m in &self.methods {
            for (k, s) in m.samples.iter().enumerate() {
                w.write_record([
                    m.method.name().to_string(),
                    k.to_string(),
                    s.time_ms.to_string(),
                    s.best_objective.to_string(),
                    s.normalized.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::graph::{Edge, Node};

    fn chain() -> SchedGraph {
        SchedGraph::new(
            vec![Node::new("a", 1.0), Node::new("b", 1.0)],
            vec![Edge::new("a", "b", 1.0, 0)],
        )
        .unwrap()
    }

    #[test]
    fn schedule_json_round_trip() {
        let g = chain();
        let s = Schedule::new(vec![0, 1]);
        let m = evaluate(&g, s.stages(), 2, 10.0);
        let f = ScheduleFile::new(&g, &s, 2, Some(&m));
        let text = f.to_json();
        let back = ScheduleFile::from_json(&text).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.schedule_for(&g).unwrap(), s);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["L"], 2);
        assert_eq!(v["stages"]["b"], 1);
        assert_eq!(v["metrics"]["lp_objective"], 11.0);
    }

    #[test]
    fn schedule_json_errors() {
        let g = chain();
        let f = ScheduleFile::from_json(r#"{"L":2,"stages":{"a":0}}"#).unwrap();
        assert!(matches!(f.schedule_for(&g), Err(HarnessError::MissingNode(id)) if id == "b"));
        let f = ScheduleFile::from_json(r#"{"L":2,"stages":{"a":0,"b":1,"zz":0}}"#).unwrap();
        assert!(matches!(f.schedule_for(&g), Err(HarnessError::UnknownNode(id)) if id == "zz"));
    }

    #[test]
    fn trajectory_csv_golden_header_and_round_trip() {
        let g = chain();
        let r = run(&g, &RunConfig { epochs: 5, ..RunConfig::new(2) }).unwrap();
        let text = trajectory_csv(&r.trajectory).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER);
        assert_eq!(text.lines().count(), 6);
        assert_eq!(read_trajectory_csv(&text).unwrap(), r.trajectory);
        assert!(matches!(
            read_trajectory_csv("epoch,loss\n1,2\n"),
            Err(HarnessError::BadHeader(_))
        ));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("Diff".parse::<Method>().unwrap(), Method::Diff);
        assert!("cplex".parse::<Method>().is_err());
    }

    #[test]
    fn sampling_times() {
        let c = CompareConfig::paper(RunConfig::new(10));
        assert_eq!(c.sample_times().len(), 11);
        let c = CompareConfig {
            budget_ms: 0,
            ..CompareConfig::desk(RunConfig::new(10))
        };
        assert_eq!(c.sample_times(), vec![0]);
    }

    #[test]
    fn compare_with_zero_budget() {
        let g = chain();
        let c = CompareConfig {
            budget_ms: 0,
            methods: vec![Method::Diff, Method::Greedy],
            ..CompareConfig::desk(RunConfig::new(2))
        };
        let r = compare(&g, &c).unwrap();
        assert_eq!(r.methods.len(), 2);
        for m in &r.methods {
            assert_eq!(m.samples.len(), 1);
            assert_eq!(m.samples[0].normalized, 1.0);
        }
        let back = ExperimentReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), REPORT_HEADER);
    }

    #[test]
    fn diff_values_hold_running_best() {
        let p = |wall_ms, lp| TrajectoryPoint {
            epoch: 0,
            wall_ms,
            loss_total: 0.0,
            loss_entropy: 0.0,
            loss_comm: 0.0,
            peak_mem: 0.0,
            comm_total: 0.0,
            lp_objective: lp,
            best_so_far: lp,
        };
        let runs = vec![vec![p(5, 20.0), p(15, 12.0)], vec![p(3, 18.0), p(40, 11.0)]];
        assert_eq!(diff_values(&runs, &[0, 10, 20, 50]), vec![18.0, 18.0, 12.0, 11.0]);
    }
}
