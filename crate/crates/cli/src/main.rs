use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nasmine_core::model::{build_model, AttackParams, HonestArrival, ModelError, DEFAULT_MAX_STATES};
use nasmine_core::par::Exec;
use nasmine_core::revenue::{errev_for_model, BetaPoint, RevenueConfig, RevenueError, DEFAULT_EPSILON};
use nasmine_core::sim::{simulate, SimError, SimOptions};
use nasmine_core::strategy_file::{StrategyFile, StrategyFileError};
use nasmine_core::sweep::{parse_grid, run_sweep, AttackKind, SweepRow, SweepSpec};
use serde::{Deserialize, Serialize};

const MAX_STATES_VAR: &str = "NASMINE_MAX_STATES";

#[derive(Parser, Debug)]
#[command(name = "nasmine", version, about = "Optimal multi-fork selfish mining under nothing-at-stake")]
struct Cli {
    /// Worker threads (default: one per processor).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the optimal relative revenue at one parameter point.
    Analyze(AnalyzeArgs),
    /// Evaluate an attack over a grid of p and gamma, writing CSV.
    Sweep(SweepArgs),
    /// Play a strategy file against the chain simulator.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Adversarial share of resources.
    #[arg(long, value_parser = unit)]
    p: f64,
    /// Probability that honest miners adopt a released chain in a tie.
    #[arg(long, value_parser = unit)]
    gamma: f64,
    /// Attack depth.
    #[arg(long)]
    d: usize,
    /// Forking number.
    #[arg(long)]
    f: usize,
    /// Maximal private fork length.
    #[arg(long)]
    l: usize,
    /// When an honest block joins the public chain: pending or appended.
    #[arg(long, default_value = "pending", value_parser = arrival)]
    arrival: HonestArrival,
}

impl ModelArgs {
    fn params(&self) -> Result<AttackParams, Failure> {
        AttackParams::new(self.p, self.gamma, self.d, self.f, self.l)
            .map(|p| p.with_arrival(self.arrival))
            .map_err(|e| Failure::usage(e.into()))
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Precision of the binary search.
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = positive)]
    epsilon: f64,
    /// Result document (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the optimal strategy.
    #[arg(long)]
    strategy_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value = "ours")]
    attack: AttackKind,
    /// p grid, as start:stop:step or a comma-separated list.
    #[arg(long, value_parser = grid)]
    p: Grid,
    /// gamma values, as a comma-separated list or start:stop:step.
    #[arg(long, value_parser = grid)]
    gamma: Grid,
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Forking number, or tree width for single-tree.
    #[arg(long, default_value_t = 1)]
    f: usize,
    /// Maximal fork length, or tree depth for single-tree.
    #[arg(long, default_value_t = 4)]
    l: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_parser = positive)]
    epsilon: f64,
    #[arg(long, default_value = "pending", value_parser = arrival)]
    arrival: HonestArrival,
    /// CSV output (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    strategy: PathBuf,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    seed: u64,
    /// Random stream under the seed.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Reconcile block accounting after every step.
    #[arg(long)]
    check: bool,
    /// Report document (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one line per finalized block.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct AnalyzeDoc {
    params: AttackParams,
    errev_lower: f64,
    epsilon: f64,
    state_count: usize,
    solver_calls: usize,
    beta_trace: Vec<BetaPoint>,
    wall_time_s: f64,
}

fn unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn grid(s: &str) -> Result<Grid, String> {
    parse_grid(s).map(Grid)
}

fn arrival(s: &str) -> Result<HonestArrival, String> {
    match s {
        "pending" => Ok(HonestArrival::Pending),
        "appended" => Ok(HonestArrival::Appended),
        _ => Err(format!("expected pending or appended, got {s:?}")),
    }
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: anyhow::Error) -> Self {
        Self { code, error }
    }

    fn usage(error: anyhow::Error) -> Self {
        Self::new(2, error)
    }

    fn other(error: anyhow::Error) -> Self {
        Self::new(1, error)
    }
}

impl From<RevenueError> for Failure {
    fn from(e: RevenueError) -> Self {
        match e {
            RevenueError::Model(ModelError::ResourceCap { .. }) => Self::new(3, e.into()),
            RevenueError::Model(ModelError::InvalidParams(_)) | RevenueError::InvalidEpsilon(_) => Self::usage(e.into()),
            _ => Self::other(e.into()),
        }
    }
}

fn max_states() -> Result<usize, Failure> {
    match std::env::var(MAX_STATES_VAR) {
        Ok(v) => v
            .parse()
            .map_err(|_| Failure::usage(anyhow!("{MAX_STATES_VAR} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_MAX_STATES),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(Failure::other)?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_doc(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let mut w = output(path)?;
    writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| Failure::other(e.into()))
}

fn analyze(args: AnalyzeArgs, exec: Exec) -> Result<(), Failure> {
    let params = args.model.params()?;
    let mut config = RevenueConfig::default().with_epsilon(args.epsilon);
    config.max_states = max_states()?;
    config.solver.exec = exec;
    let start = Instant::now();
    let model = build_model(&params, config.max_states).map_err(RevenueError::from)?;
    let report = errev_for_model(&model, &config)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    if let Some(path) = &args.strategy_out {
        StrategyFile::from_strategy(&model, &report.strategy)
            .write(path)
            .map_err(|e| Failure::other(e.into()))?;
    }
    let doc = AnalyzeDoc {
        params,
        errev_lower: report.errev_lower,
        epsilon: report.epsilon,
        state_count: report.state_count,
        solver_calls: report.solver_calls,
        beta_trace: report.beta_trace,
        wall_time_s,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::other(e.into()))?;
    write_doc(args.out.as_deref(), &text)
}

fn sweep(args: SweepArgs, exec: Exec) -> Result<(), Failure> {
    let mut spec = SweepSpec::new(args.attack, args.p.0, args.gamma.0, args.d, args.f, args.l);
    spec.epsilon = args.epsilon;
    spec.arrival = args.arrival;
    spec.max_states = max_states()?;
    let rows = run_sweep(&spec, exec);

    let mut csv = csv::Writer::from_writer(output(args.out.as_deref())?);
    let mut failed = 0;
    let io = |e: csv::Error| Failure::other(e.into());
    csv.write_record(SweepRow::HEADER).map_err(io)?;
    for row in &rows {
        if let Some(e) = &row.error {
            eprintln!("p={} gamma={}: {e}", row.p, row.gamma);
            failed += 1;
        }
        csv.write_record(row.fields()).map_err(io)?;
    }
    csv.flush().map_err(|e| Failure::other(e.into()))?;
    if failed > 0 {
        return Err(Failure::new(4, anyhow!("{failed} of {} grid points failed", rows.len())));
    }
    Ok(())
}

fn params_match(a: &AttackParams, b: &AttackParams) -> bool {
    (a.p - b.p).abs() <= 1e-12 && (a.gamma - b.gamma).abs() <= 1e-12 && (a.d, a.f, a.l, a.arrival) == (b.d, b.f, b.l, b.arrival)
}

fn simulate_cmd(args: SimulateArgs) -> Result<(), Failure> {
    let params = args.model.params()?;
    if args.steps == 0 {
        return Err(Failure::usage(anyhow!("--steps must be at least 1")));
    }
    let file = StrategyFile::read(&args.strategy).map_err(|e| match e {
        StrategyFileError::Io { .. } | StrategyFileError::Json(_) | StrategyFileError::Format { .. } => Failure::usage(e.into()),
        _ => Failure::new(5, e.into()),
    })?;
    if !params_match(&file.params, &params) {
        return Err(Failure::new(
            5,
            anyhow!("strategy was computed for {:?}, not {:?}", file.params, params),
        ));
    }
    let lookup = file.lookup().map_err(|e| Failure::new(5, e.into()))?;

    let mut trace = match &args.trace {
        Some(p) => Some(output(Some(p))?),
        None => None,
    };
    let options = SimOptions {
        stream: args.stream,
        check_conservation: args.check,
    };
    let sink: Option<&mut dyn Write> = match trace.as_mut() {
        Some(w) => Some(&mut **w),
        None => None,
    };
    let report = simulate(&params, &lookup, args.steps, args.seed, options, sink).map_err(|e| match e {
        SimError::MissingState(_) | SimError::InvalidAction { .. } => Failure::new(5, e.into()),
        SimError::Invalid(_) => Failure::usage(e.into()),
        _ => Failure::other(e.into()),
    })?;
    if let Some(w) = trace.as_mut() {
        w.flush().map_err(|e| Failure::other(e.into()))?;
    }
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::other(e.into()))?;
    write_doc(args.out.as_deref(), &text)
}

fn setup_pool(jobs: Option<usize>) -> Result<Exec, Failure> {
    match jobs {
        Some(0) => Err(Failure::usage(anyhow!("--jobs must be at least 1"))),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::other(e.into()))?;
            Ok(Exec::Parallel)
        }
        _ => Ok(Exec::Parallel),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = setup_pool(cli.jobs)?;
    match cli.command {
        Command::Analyze(args) => analyze(args, exec),
        Command::Sweep(args) => sweep(args, exec),
        Command::Simulate(args) => simulate_cmd(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
