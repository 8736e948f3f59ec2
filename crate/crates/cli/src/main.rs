//! `sympar` command-line tool.
//!
//! Exit codes: 0 on success, 1 when a run violates an invariant or a backend
//! fails, 2 on usage or input errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use sympar::benchmarks;
use sympar::dsl::{parse_with_params, Program};
use sympar::experiment::{self, ExperimentSpec};
use sympar::learn::{self, make_tiling, InitSampler, Observation, SeedingMode, TrainConfig};
use sympar::partition::{raster_to_ppm, sympar, Partition};
use sympar::solver::{SolverConfig, UnknownPolicy};
use sympar::Rational;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invariant(_) | CliError::Failure(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn failure(e: impl ToString) -> CliError {
    CliError::Failure(e.to_string())
}

#[derive(Parser)]
#[command(name = "sympar", version, about = "Symbolic state-space partitioning for tabular RL")]
struct Cli {
    /// Worker threads for parallel stages (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a partition and write it out.
    Partition(PartitionArgs),
    /// Train a Q-learner on a partition or a tiling.
    Train(TrainArgs),
    /// Partition and train across depths.
    DepthSweep(ExperimentArgs),
    /// Greedy returns of several states per part.
    Similarity(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Internal,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unknown {
    Keep,
    Drop,
}

#[derive(Args)]
struct SolverArgs {
    /// Decision procedure; the external command comes from SYMPAR_SOLVER.
    #[arg(long, value_enum, default_value_t = Backend::Internal)]
    solver: Backend,
    #[arg(long, default_value_t = 10_000)]
    solver_timeout_ms: u64,
    /// What to do with parts whose emptiness is undecided.
    #[arg(long, value_enum, default_value_t = Unknown::Keep)]
    unknown: Unknown,
}

impl SolverArgs {
    fn config(&self) -> CliResult<SolverConfig> {
        let cfg = match self.solver {
            Backend::Internal => SolverConfig::internal(),
            Backend::External => SolverConfig::external_from_env(self.solver_timeout_ms).map_err(usage)?,
        };
        Ok(cfg.with_policy(match self.unknown {
            Unknown::Keep => UnknownPolicy::KeepPart,
            Unknown::Drop => UnknownPolicy::DropPart,
        }))
    }
}

#[derive(Args)]
struct ProgramArgs {
    /// Program file, or the name of a shipped benchmark.
    program: String,
    /// Override a program parameter, e.g. `--param S=10`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
}

impl ProgramArgs {
    fn load(&self) -> CliResult<Program> {
        let source = if Path::new(&self.program).exists() {
            fs::read_to_string(&self.program).map_err(|e| usage(format!("{}: {e}", self.program)))?
        } else {
            benchmarks::source(&self.program)
                .map_err(|_| usage(format!("{}: no such file or benchmark", self.program)))?
                .to_string()
        };
        let mut overrides = Vec::new();
        for p in &self.params {
            let (name, value) = p
                .split_once('=')
                .ok_or_else(|| usage(format!("--param expects NAME=VALUE, got '{p}'")))?;
            let v = parse_value(value).ok_or_else(|| usage(format!("bad parameter value '{value}'")))?;
            overrides.push((name.trim(), v));
        }
        parse_with_params(&source, &overrides).map_err(|e| usage(format!("{}:{e}", self.program)))
    }

    fn default_depth(&self) -> usize {
        benchmarks::load_benchmark(&self.program)
            .map(|(_, e)| e.recommended_depth)
            .unwrap_or(8)
    }
}

fn parse_value(s: &str) -> Option<Rational> {
    let s = s.trim();
    sympar::partition::parse_rational(s).or_else(|| {
        let (int, frac) = s.split_once('.')?;
        let digits = format!("{int}{frac}");
        let num: Rational = sympar::partition::parse_rational(&digits)?;
        let den = Rational::from_integer(10u32.pow(frac.len() as u32).into());
        Some(num / den)
    })
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    program: ProgramArgs,
    /// Symbolic execution depth (default: the benchmark's recommendation).
    #[arg(long)]
    depth: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Dump file; a PPM raster is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Raster width and height in cells.
    #[arg(long, default_value_t = 200)]
    raster: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Obs {
    Sympar,
    Tiling,
}

#[derive(Clone, Copy, ValueEnum)]
enum Seeding {
    WitnessFirst,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Program,
    Uniform,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    program: ProgramArgs,
    #[arg(long, value_enum, default_value_t = Obs::Sympar)]
    obs: Obs,
    /// Partition dump from `sympar partition`; computed on the fly if absent.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long)]
    depth: Option<usize>,
    /// Tile budget; the tiling uses the smallest square count above it.
    #[arg(long)]
    budget: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 200)]
    max_steps: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon_start: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon_end: f64,
    #[arg(long, default_value_t = 0.8)]
    epsilon_decay: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Seeding::WitnessFirst)]
    seeding: Seeding,
    #[arg(long, value_enum, default_value_t = Init::Program)]
    init: Init,
    /// Per-episode metrics CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec file (`key = value` lines).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Benchmark to use when no spec file is given.
    #[arg(long)]
    benchmark: Option<String>,
    /// Override a spec key, e.g. `--set depths=1,2,4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(flatten)]
    solver: SolverArgs,
}

impl ExperimentArgs {
    fn spec(&self) -> CliResult<ExperimentSpec> {
        let mut spec = match (&self.spec, &self.benchmark) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                ExperimentSpec::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            (None, Some(b)) => ExperimentSpec::new(b),
            (None, None) => return Err(usage("give --spec or --benchmark")),
        };
        if let Some(b) = &self.benchmark {
            spec.benchmark = b.clone();
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{o}'")))?;
            spec.set(k.trim(), v.trim()).map_err(usage)?;
        }
        spec.validate().map_err(usage)?;
        spec.program().map_err(usage)?;
        Ok(spec)
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| failure(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| failure(format!("{}: {e}", path.display())))
}

fn compute_partition(p: &Program, depth: usize, solver: &SolverConfig) -> CliResult<Partition> {
    if depth == 0 {
        return Err(usage("depth must be positive"));
    }
    sympar(p, depth, solver).map_err(failure)
}

fn cmd_partition(a: &PartitionArgs) -> CliResult<()> {
    let p = a.program.load()?;
    let solver = a.solver.config()?;
    let depth = a.depth.unwrap_or_else(|| a.program.default_depth());
    let part = compute_partition(&p, depth, &solver)?;
    println!("program {}", p.name);
    println!("depth {depth}");
    println!("complete {}", part.complete);
    for (action, n) in p.actions.iter().zip(part.pc_counts()) {
        println!("|PC^{}| = {n}", action.name);
    }
    println!("parts {}", part.len());
    if part.has_complement() {
        println!("complement part present");
    }
    let bounds = part.bounds();
    println!("{bounds}");
    if let Some(out) = &a.out {
        write_file(out, &part.dump())?;
        let raster = out.with_extension("ppm");
        write_file(&raster, &raster_to_ppm(&part.raster(a.raster, a.raster)))?;
        println!("wrote {} and {}", out.display(), raster.display());
    }
    if !bounds.holds() {
        return Err(CliError::Invariant(bounds.to_string()));
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let p = a.program.load()?;
    let solver = a.solver.config()?;
    let cfg = TrainConfig {
        episodes: a.episodes,
        max_steps: a.max_steps,
        alpha: a.alpha,
        gamma: a.gamma,
        epsilon: learn::EpsilonSchedule {
            start: a.epsilon_start,
            end: a.epsilon_end,
            decay: a.epsilon_decay,
        },
        seed: a.seed,
        seeding: match a.seeding {
            Seeding::WitnessFirst => SeedingMode::WitnessFirst,
            Seeding::Random => SeedingMode::Random,
        },
        init: match a.init {
            Init::Program => InitSampler::Program,
            Init::Uniform => InitSampler::Uniform,
        },
    };
    cfg.validate().map_err(usage)?;
    let partition = match &a.partition {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Some(Partition::load(&text, Arc::new(p.clone())).map_err(|e| usage(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let obs: Box<dyn Observation> = match a.obs {
        Obs::Sympar => match partition {
            Some(part) => Box::new(part),
            None => {
                let depth = a.depth.unwrap_or_else(|| a.program.default_depth());
                Box::new(compute_partition(&p, depth, &solver)?)
            }
        },
        Obs::Tiling => {
            let budget = match (a.budget, &partition) {
                (Some(b), _) => b,
                (None, Some(part)) => part.len(),
                (None, None) => return Err(usage("tiling needs --budget or --partition")),
            };
            let tiles = make_tiling(&p.state_box(), budget).map_err(usage)?;
            println!("tiling side {} ({} tiles for budget {budget})", tiles.side, tiles.len());
            Box::new(tiles)
        }
    };
    let (_, metrics) = learn::train::<f64, _>(&p, obs.as_ref(), &cfg).map_err(|e| match e {
        learn::LearnError::Locate(l) => CliError::Invariant(l.to_string()),
        other => failure(other),
    })?;
    if let Some(out) = &a.out {
        write_file(out, &metrics.to_csv())?;
    }
    println!("{}", learn::SUMMARY_HEADER);
    println!("{}", metrics.summary(obs.len()).csv_row());
    Ok(())
}

fn experiment_error(e: experiment::ExperimentError) -> CliError {
    use experiment::ExperimentError as E;
    match e {
        E::Spec { .. } | E::Benchmark(_) | E::EmptySelection { .. } => usage(e),
        E::Learn(learn::LearnError::Locate(l)) => CliError::Invariant(l.to_string()),
        other => failure(other),
    }
}

fn cmd_depth_sweep(a: &ExperimentArgs, jobs: usize) -> CliResult<()> {
    let spec = a.spec()?;
    let solver = a.solver.config()?;
    let rows = experiment::with_jobs(jobs, || experiment::depth_sweep(&spec, &solver))
        .map_err(experiment_error)?
        .map_err(experiment_error)?;
    let csv = experiment::sweep_csv(&rows);
    print!("{csv}");
    write_file(&spec.out.join("depth_sweep.csv"), &csv)?;
    if let Some(w) = rows.windows(2).find(|w| w[1].parts < w[0].parts) {
        eprintln!("note: part count drops from {} at k={} to {} at k={}", w[0].parts, w[0].depth, w[1].parts, w[1].depth);
    }
    Ok(())
}

fn cmd_similarity(a: &ExperimentArgs, jobs: usize) -> CliResult<()> {
    let spec = a.spec()?;
    let solver = a.solver.config()?;
    let rows = experiment::with_jobs(jobs, || experiment::similarity(&spec, &solver))
        .map_err(experiment_error)?
        .map_err(experiment_error)?;
    let csv = experiment::similarity_csv(&rows);
    print!("{csv}");
    write_file(&spec.out.join("similarity.csv"), &csv)
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Partition(a) => experiment::with_jobs(cli.jobs, || cmd_partition(a)).map_err(failure)?,
        Command::Train(a) => experiment::with_jobs(cli.jobs, || cmd_train(a)).map_err(failure)?,
        Command::DepthSweep(a) => cmd_depth_sweep(a, cli.jobs),
        Command::Similarity(a) => cmd_similarity(a, cli.jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
