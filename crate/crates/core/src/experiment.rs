//! Experiment drivers: depth sweeps and within-part similarity.
//!
//! An [`ExperimentSpec`] is read from a plain `key = value` file (blank lines
//! and `#` comments ignored):
//!
//! ```text
//! benchmark = braking_car
//! depths = 1, 2, 4, 8
//! seeds = 0, 1, 2
//! episodes = 2000
//! max_steps = 200
//! alpha = 0.1
//! gamma = 0.99
//! epsilon_start = 1.0
//! epsilon_end = 0.05
//! epsilon_decay = 0.8
//! seeding = witness_first
//! scale = 1
//! parts = 5
//! states_per_part = 5
//! eval_episodes = 1
//! eval_every = 100
//! out = results
//! ```
//!
//! Every key is optional except `benchmark`.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::benchmarks::{load_benchmark, load_scaled, BenchmarkError};
use crate::dsl::{ConcreteState, InitSpec, Program};
use crate::learn::{evaluate_policy, mean_std, train, train_with_eval, EvalPlan, LearnError, SeedingMode, TrainConfig};
use crate::partition::{sympar, Partition, PartitionError};
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("only {found} of the {wanted} requested parts admit {states} sampled states")]
    EmptySelection { found: usize, wanted: usize, states: usize },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub benchmark: String,
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub scale: i64,
    /// Parts drawn for the similarity table.
    pub parts: usize,
    pub states_per_part: usize,
    pub eval_episodes: usize,
    /// Greedy evaluation interval used for the best reward of a sweep.
    pub eval_every: usize,
    pub out: PathBuf,
}

impl ExperimentSpec {
    pub fn new(benchmark: &str) -> Self {
        ExperimentSpec {
            benchmark: benchmark.to_string(),
            depths: vec![1, 2, 4, 8],
            seeds: vec![0],
            train: TrainConfig::default(),
            scale: 1,
            parts: 5,
            states_per_part: 5,
            eval_episodes: 1,
            eval_every: 100,
            out: PathBuf::from("results"),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ExperimentError::Spec {
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            pairs.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let bench = pairs
            .iter()
            .find(|(_, k, _)| k == "benchmark")
            .map(|(_, _, v)| v.clone())
            .ok_or(ExperimentError::Spec {
                line: 0,
                message: "missing key 'benchmark'".into(),
            })?;
        let mut spec = ExperimentSpec::new(&bench);
        for (line, k, v) in &pairs {
            spec.set(k, v).map_err(|message| ExperimentError::Spec { line: *line, message })?;
        }
        spec.validate().map_err(|message| ExperimentError::Spec { line: 0, message })?;
        Ok(spec)
    }

    /// Applies one setting; also used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value '{v}' for '{key}'"))
        }
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, String> {
            v.split(',').map(|x| num(key, x.trim())).collect()
        }
        match key {
            "benchmark" => self.benchmark = value.to_string(),
            "depths" => self.depths = list(key, value)?,
            "seeds" => self.seeds = list(key, value)?,
            "episodes" => self.train.episodes = num(key, value)?,
            "max_steps" => self.train.max_steps = num(key, value)?,
            "alpha" => self.train.alpha = num(key, value)?,
            "gamma" => self.train.gamma = num(key, value)?,
            "epsilon_start" => self.train.epsilon.start = num(key, value)?,
            "epsilon_end" => self.train.epsilon.end = num(key, value)?,
            "epsilon_decay" => self.train.epsilon.decay = num(key, value)?,
            "seeding" => {
                self.train.seeding = match value {
                    "witness_first" => SeedingMode::WitnessFirst,
                    "random" => SeedingMode::Random,
                    _ => return Err(format!("unknown seeding mode '{value}'")),
                }
            }
            "scale" => self.scale = num(key, value)?,
            "parts" => self.parts = num(key, value)?,
            "states_per_part" => self.states_per_part = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.depths.is_empty() {
            return Err("depth list is empty".into());
        }
        if self.seeds.is_empty() {
            return Err("seed list is empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return Err("seeds must be distinct".into());
        }
        if self.scale < 1 {
            return Err("scale must be positive".into());
        }
        self.train.validate().map_err(|e| e.to_string())
    }

    pub fn program(&self) -> Result<Program, ExperimentError> {
        let (p, _) = if self.scale == 1 {
            load_benchmark(&self.benchmark)?
        } else {
            load_scaled(&self.benchmark, self.scale)?
        };
        Ok(p)
    }
}

/// Runs `f` on a pool of `jobs` workers (`0` means one per core).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

const EVAL_START_SEED: u64 = 0xe7a1;
const EVAL_STARTS: usize = 32;

/// Fixed start states for greedy evaluation: the program's initial state,
/// or a seeded uniform sample of the box.
pub fn evaluation_starts(p: &Program) -> Vec<ConcreteState> {
    match &p.init {
        InitSpec::Fixed(v) => vec![ConcreteState(v.clone())],
        InitSpec::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(EVAL_START_SEED);
            let bx = p.state_box();
            (0..EVAL_STARTS).map(|_| bx.sample(&mut rng)).collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub depth: usize,
    pub parts: usize,
    pub pc_counts: Vec<usize>,
    pub complete: bool,
    /// Mean over seeds of the best greedy checkpoint.
    pub best_reward: f64,
    /// Mean over seeds of the training success rate.
    pub success: f64,
}

pub const SWEEP_HEADER: &str = "k,parts,best_reward,success,complete";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{}",
            self.depth, self.parts, self.best_reward, self.success, self.complete
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Partition and train at every depth of the spec; runs fan out over the
/// current rayon pool.
pub fn depth_sweep(spec: &ExperimentSpec, solver: &SolverConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    let p = spec.program()?;
    let starts = evaluation_starts(&p);
    let partitions: Vec<Partition> = spec
        .depths
        .par_iter()
        .map(|&k| sympar(&p, k, solver))
        .collect::<Result<_, _>>()?;
    let plan = EvalPlan {
        starts,
        every: spec.eval_every,
    };
    let jobs: Vec<(usize, u64)> = (0..partitions.len())
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Vec<(usize, f64, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let cfg = TrainConfig { seed, ..spec.train.clone() };
            let (_, m) = train_with_eval::<f64, _>(&p, &partitions[i], &cfg, Some(&plan))?;
            let best = m.best_checkpoint().map_or(f64::NEG_INFINITY, |c| c.mean_return);
            Ok((i, best, m.success_rate()))
        })
        .collect::<Result<_, LearnError>>()?;
    let n = spec.seeds.len() as f64;
    Ok(partitions
        .iter()
        .enumerate()
        .map(|(i, part)| {
            let mine = runs.iter().filter(|r| r.0 == i);
            let (best, succ) = mine.fold((0.0, 0.0), |(b, s), r| (b + r.1, s + r.2));
            SweepRow {
                depth: spec.depths[i],
                parts: part.len(),
                pc_counts: part.pc_counts(),
                complete: part.complete,
                best_reward: best / n,
                success: succ / n,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityRow {
    pub part: usize,
    pub states: Vec<ConcreteState>,
    /// Mean greedy return per state.
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SimilarityRow {
    /// Standard deviation relative to the magnitude of the mean.
    pub fn normalized_std(&self) -> f64 {
        if self.mean == 0.0 {
            if self.std == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.std / self.mean.abs()
        }
    }
}

pub const SIMILARITY_HEADER: &str = "part,mean,std,normalized_std,states";

pub fn similarity_csv(rows: &[SimilarityRow]) -> String {
    let mut out = format!("{SIMILARITY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.6},{}",
            r.part,
            r.mean,
            r.std,
            r.normalized_std(),
            r.states.len()
        );
    }
    out
}

const SAMPLE_ATTEMPTS: usize = 20_000;

/// Up to `n` distinct uniform states of the box that fall in part `id`.
fn states_in_part(part: &Partition, id: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<ConcreteState> {
    let bx = part.state_box();
    let mut out: Vec<ConcreteState> = Vec::new();
    for _ in 0..SAMPLE_ATTEMPTS {
        if out.len() == n {
            break;
        }
        let s = bx.sample(rng);
        if part.locate(&s) == Ok(id) && !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Trains on the partition at the spec's last depth with its first seed,
/// then draws `parts` random parts with `states_per_part` states each and
/// compares the greedy returns of states sharing a part.
pub fn similarity(spec: &ExperimentSpec, solver: &SolverConfig) -> Result<Vec<SimilarityRow>, ExperimentError> {
    let p = spec.program()?;
    let k = *spec.depths.last().expect("validated depth list");
    let seed = spec.seeds[0];
    let part = sympar(&p, k, solver)?;
    let cfg = TrainConfig { seed, ..spec.train.clone() };
    let (q, _) = train::<f64, _>(&p, &part, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = part.parts.iter().filter(|x| !x.is_complement).map(|x| x.id).collect();
    order.shuffle(&mut rng);
    let mut chosen = Vec::new();
    for id in order {
        if chosen.len() == spec.parts {
            break;
        }
        let states = states_in_part(&part, id, spec.states_per_part, &mut rng);
        if states.len() == spec.states_per_part {
            chosen.push((id, states));
        }
    }
    if chosen.is_empty() || chosen.len() < spec.parts {
        return Err(ExperimentError::EmptySelection {
            found: chosen.len(),
            wanted: spec.parts,
            states: spec.states_per_part,
        });
    }
    chosen
        .into_iter()
        .map(|(id, states)| {
            let eval = evaluate_policy(&p, &part, &q, &states, spec.eval_episodes, spec.train.max_steps, seed)?;
            let returns: Vec<f64> = eval.iter().map(|e| e.mean).collect();
            let (mean, std) = mean_std(&returns);
            Ok(SimilarityRow {
                part: id,
                states,
                returns,
                mean,
                std,
            })
        })
        .collect()
}
