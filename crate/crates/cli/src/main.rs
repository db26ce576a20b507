use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffsched::baselines::{
    alap, asap, brute_force, export_ilp, greedy_balance, random_legal, BaselineError,
};
use diffsched::engine::{best_of, run_restarts, EngineError, OptimizerKind, RunConfig};
use diffsched::generator::{gen_random_workload, shape_stats, GenSpec, RW_SHAPES};
use diffsched::graph::{load_graph, save_graph, SchedGraph, Schedule};
use diffsched::harness::{compare, trajectory_csv, CompareConfig, Method, ScheduleFile};
use diffsched::losses::{evaluate, DiscreteMetrics};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED_ENV: &str = "DIFFSCHED_SEED";

/// Failure carrying the process exit code: 2 for bad input, 3 for an
/// infeasible latency.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn infeasible(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Infeasible { .. } => Failure::infeasible(e.to_string()),
            e => Failure::invalid(e.to_string()),
        }
    }
}

impl From<BaselineError> for Failure {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Infeasible { .. } => Failure::infeasible(e.to_string()),
            e => Failure::invalid(e.to_string()),
        }
    }
}

impl From<diffsched::harness::HarnessError> for Failure {
    fn from(e: diffsched::harness::HarnessError) -> Self {
        use diffsched::harness::HarnessError;
        match e {
            HarnessError::Engine(e) => e.into(),
            HarnessError::Baseline(e) => e.into(),
            e => Failure::invalid(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "diffsched", version, about = "Differentiable pipeline-stage scheduling for DAGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a schedule and write schedule.json and trajectory.csv.
    Schedule(ScheduleArgs),
    /// Exhaustively search for the optimal schedule (small graphs only).
    Oracle(ProblemArgs),
    /// Run a heuristic scheduler.
    Baseline(BaselineArgs),
    /// Evaluate a schedule file against a graph.
    Eval(EvalArgs),
    /// Generate a random layered workload.
    Gen(GenArgs),
    /// Write the scheduling problem as an LP-format integer program.
    ExportIlp(ProblemArgs),
    /// Compare methods under a shared time budget.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(short = 'g', long = "graph")]
    graph: PathBuf,
    #[arg(short = 'L', long = "latency")]
    latency: usize,
    #[arg(long, default_value_t = 10.0)]
    ratio: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    tau_start: f64,
    #[arg(long, default_value_t = 0.1)]
    tau_end: f64,
    #[arg(long, value_enum, default_value_t = Optimizer::Adam)]
    optimizer: Optimizer,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel restarts with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    sample_interval_ms: Option<u64>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Optimizer {
    Adam,
    Adamw,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Heuristic {
    Asap,
    Alap,
    Greedy,
    Random,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum)]
    method: Heuristic,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(short = 'g', long = "graph")]
    graph: PathBuf,
    #[arg(short = 's', long = "schedule")]
    schedule: PathBuf,
    /// Overrides the latency stored in the schedule file.
    #[arg(short = 'L', long = "latency")]
    latency: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    ratio: f64,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, required_unless_present = "rw")]
    nodes: Option<usize>,
    #[arg(long, required_unless_present = "rw")]
    depth: Option<usize>,
    /// Use the node count and depth of reference workload 1..=12.
    #[arg(long, conflicts_with_all = ["nodes", "depth"])]
    rw: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long, default_value_t = 1.0)]
    comm_min: f64,
    #[arg(long, default_value_t = 4.0)]
    comm_max: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output graph file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated subset of diff,asap,alap,greedy,oracle.
    #[arg(long, default_value = "diff,asap,alap,greedy,oracle")]
    methods: String,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn read_graph(path: &Path) -> Result<SchedGraph, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::invalid(format!("cannot read graph {}: {e}", path.display())))?;
    load_graph(&text).map_err(|e| Failure::invalid(format!("graph {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::invalid(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::invalid(format!("cannot write {}: {e}", path.display())))
}

fn check_latency(g: &SchedGraph, latency: usize) -> CliResult {
    let required = g.min_feasible_latency().max(1);
    if latency < required {
        return Err(Failure::infeasible(format!(
            "L={latency} is infeasible for this graph: L_min = {required}"
        )));
    }
    Ok(())
}

fn run_config(latency: usize, ratio: f64, t: &TrainArgs) -> Result<RunConfig, Failure> {
    Ok(RunConfig {
        lambda: t.lambda,
        ratio,
        epochs: t.epochs,
        lr: t.lr,
        tau_start: t.tau_start,
        tau_end: t.tau_end,
        optimizer: match t.optimizer {
            Optimizer::Adam => OptimizerKind::Adam,
            Optimizer::Adamw => OptimizerKind::AdamW,
        },
        weight_decay: t.weight_decay,
        seed: resolve_seed(t.seed)?,
        timeout_ms: t.timeout_ms,
        sample_interval_ms: t.sample_interval_ms,
        ..RunConfig::new(latency)
    })
}

fn print_metrics(m: &DiscreteMetrics, format: Option<Format>) {
    match format {
        None => {
            println!("objective {}", m.lp_objective);
            println!("peak_mem {}", m.peak_mem);
            println!("comm_total {}", m.comm_total);
        }
        Some(Format::Json) => println!("{}", serde_json::to_string_pretty(m).expect("metrics serialize")),
        Some(Format::Csv) => {
            println!("peak_mem,comm_total,lp_objective,ratio");
            println!("{},{},{},{}", m.peak_mem, m.comm_total, m.lp_objective, m.ratio);
        }
    }
}

fn emit_schedule(g: &SchedGraph, s: &Schedule, p: &ProblemArgs) -> CliResult {
    let m = evaluate(g, s.stages(), p.latency, p.ratio);
    print_metrics(&m, p.format);
    if let Some(path) = &p.out {
        write_file(path, &ScheduleFile::new(g, s, p.latency, Some(&m)).to_json())?;
    }
    Ok(())
}

fn cmd_schedule(a: ScheduleArgs) -> CliResult {
    let g = read_graph(&a.problem.graph)?;
    check_latency(&g, a.problem.latency)?;
    let cfg = run_config(a.problem.latency, a.problem.ratio, &a.train)?;
    let seeds: Vec<u64> = (0..a.train.seeds.max(1) as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let results = run_restarts(&g, &cfg, &seeds)?;
    let best = best_of(&results).expect("at least one restart");
    let out = a.problem.out.unwrap_or_else(|| PathBuf::from("."));
    let file = ScheduleFile::new(&g, &best.best_schedule, cfg.latency, Some(&best.best_metrics));
    write_file(&out.join("schedule.json"), &file.to_json())?;
    write_file(&out.join("trajectory.csv"), &trajectory_csv(&best.trajectory)?)?;
    println!("best objective {}", best.best_objective);
    println!("wrote {} and {}", out.join("schedule.json").display(), out.join("trajectory.csv").display());
    Ok(())
}

fn cmd_oracle(p: ProblemArgs) -> CliResult {
    let g = read_graph(&p.graph)?;
    check_latency(&g, p.latency)?;
    let (s, _) = brute_force(&g, p.latency, p.ratio)?;
    emit_schedule(&g, &s, &p)
}

fn cmd_baseline(a: BaselineArgs) -> CliResult {
    let p = a.problem;
    let g = read_graph(&p.graph)?;
    check_latency(&g, p.latency)?;
    let s = match a.method {
        Heuristic::Asap => asap(&g, p.latency)?,
        Heuristic::Alap => alap(&g, p.latency)?,
        Heuristic::Greedy => greedy_balance(&g, p.latency, p.ratio)?,
        Heuristic::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(resolve_seed(a.seed)?);
            random_legal(&g, p.latency, &mut rng)?
        }
    };
    emit_schedule(&g, &s, &p)
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let g = read_graph(&a.graph)?;
    let text = fs::read_to_string(&a.schedule)
        .map_err(|e| Failure::invalid(format!("cannot read schedule {}: {e}", a.schedule.display())))?;
    let file = ScheduleFile::from_json(&text)
        .map_err(|e| Failure::invalid(format!("schedule {}: {e}", a.schedule.display())))?;
    let latency = a.latency.unwrap_or(file.latency);
    let s = file
        .schedule_for(&g)
        .map_err(|e| Failure::invalid(format!("schedule {}: {e}", a.schedule.display())))?;
    if let Err(violations) = g.check_legal(&s, latency) {
        let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(Failure::invalid(format!(
            "schedule {} is illegal at L={latency}:\n{}",
            a.schedule.display(),
            lines.join("\n")
        )));
    }
    print_metrics(&evaluate(&g, s.stages(), latency, a.ratio), a.format);
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CliResult {
    let (nodes, depth) = match a.rw {
        Some(k) if (1..=RW_SHAPES.len()).contains(&k) => RW_SHAPES[k - 1],
        Some(k) => return Err(Failure::invalid(format!("--rw must be in 1..={}, got {k}", RW_SHAPES.len()))),
        None => (a.nodes.unwrap_or(0), a.depth.unwrap_or(0)),
    };
    let spec = GenSpec {
        density: a.density,
        comm_range: (a.comm_min, a.comm_max),
        ..GenSpec::new(nodes, depth, resolve_seed(a.seed)?)
    };
    let g = gen_random_workload(&spec).map_err(|e| Failure::invalid(e.to_string()))?;
    let json = save_graph(&g);
    match &a.out {
        Some(path) => {
            write_file(path, &json)?;
            let s = shape_stats(&g);
            eprintln!("wrote {} ({} nodes, {} edges, depth {})", path.display(), s.n_nodes, s.n_edges, s.depth);
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_export_ilp(p: ProblemArgs) -> CliResult {
    let g = read_graph(&p.graph)?;
    check_latency(&g, p.latency)?;
    let lp = export_ilp(&g, p.latency, p.ratio).to_lp_string();
    match &p.out {
        Some(path) => write_file(path, &lp),
        None => {
            print!("{lp}");
            Ok(())
        }
    }
}

fn cmd_compare(a: CompareArgs) -> CliResult {
    let g = read_graph(&a.problem.graph)?;
    check_latency(&g, a.problem.latency)?;
    let run = run_config(a.problem.latency, a.problem.ratio, &a.train)?;
    let mut cfg = match a.preset {
        Preset::Desk => CompareConfig::desk(run),
        Preset::Paper => CompareConfig::paper(run),
    };
    cfg.methods = a
        .methods
        .split(',')
        .filter(|m| !m.trim().is_empty())
        .map(str::parse::<Method>)
        .collect::<Result<_, _>>()?;
    cfg.seeds = a.train.seeds.max(1);
    if let Some(t) = a.train.timeout_ms {
        cfg.budget_ms = t;
    }
    if let Some(i) = a.train.sample_interval_ms {
        cfg.sample_interval_ms = i;
    }
    let report = compare(&g, &cfg)?;
    let out = a.problem.out.unwrap_or_else(|| PathBuf::from("."));
    write_file(&out.join("report.json"), &report.to_json())?;
    write_file(&out.join("report.csv"), &report.to_csv()?)?;
    println!("{}", report.notice);
    for m in &report.methods {
        println!("{:<7} final {}", m.method.name(), m.final_objective);
    }
    for (m, why) in &report.skipped {
        println!("{:<7} skipped: {why}", m.name());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Schedule(a) => cmd_schedule(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(a) => cmd_gen(a),
        Command::ExportIlp(a) => cmd_export_ilp(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
