//! Tabular Q-learning on top of a state abstraction.
//!
//! The learner never sees concrete states: every state is first mapped to a
//! part id by an [`Observation`] (a SymPar [`Partition`] or a uniform
//! [`TilePartition`]), and the Q-table is indexed by that id. The environment
//! itself is stepped with the exact concrete interpreter; only the reward
//! bookkeeping uses the floating-point scalar `F`.

use std::fmt::Write as _;

use num_traits::{Float, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsl::{concrete_step, ConcreteState, InitSpec, InterpError, Program, StateBox};
use crate::partition::{LocateError, Partition};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LearnError {
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("tiling budget must be positive")]
    ZeroBudget,
    #[error("observation has {obs} parts but the table has {table}")]
    Shape { obs: usize, table: usize },
}

/// Maps concrete states to part ids `0..len()`.
pub trait Observation: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn observe(&self, s: &[Rational]) -> Result<usize, LocateError>;

    /// One representative state per part, where known.
    fn witnesses(&self) -> Vec<Option<ConcreteState>>;
}

impl Observation for Partition {
    fn len(&self) -> usize {
        Partition::len(self)
    }

    fn observe(&self, s: &[Rational]) -> Result<usize, LocateError> {
        self.locate(s)
    }

    fn witnesses(&self) -> Vec<Option<ConcreteState>> {
        Partition::witnesses(self)
    }
}

/// Equal-width tiles over the state box, the same count on every axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilePartition {
    pub state_box: StateBox,
    /// Tiles per axis.
    pub side: usize,
}

/// Smallest per-axis count whose `dim`-th power exceeds `budget`.
pub fn tiling_side(budget: usize, dim: usize) -> Result<usize, LearnError> {
    if budget == 0 {
        return Err(LearnError::ZeroBudget);
    }
    let dim = u32::try_from(dim.max(1)).map_err(|_| LearnError::Config("too many dimensions".into()))?;
    let mut n = 1usize;
    loop {
        match n.checked_pow(dim) {
            Some(t) if t > budget => return Ok(n),
            Some(_) => n += 1,
            None => return Ok(n),
        }
    }
}

pub fn make_tiling(bx: &StateBox, budget: usize) -> Result<TilePartition, LearnError> {
    let side = tiling_side(budget, bx.dim())?;
    Ok(TilePartition {
        state_box: bx.clone(),
        side,
    })
}

impl TilePartition {
    fn edge(&self, d: usize, i: usize) -> Rational {
        let (lo, hi) = (&self.state_box.lower[d], &self.state_box.upper[d]);
        lo + (hi - lo) * Rational::new(i.into(), self.side.into())
    }

    /// Per-axis tile index; tiles are half-open except the last, which also
    /// holds the upper bound.
    fn axis_index(&self, d: usize, x: &Rational) -> Option<usize> {
        let (lo, hi) = (&self.state_box.lower[d], &self.state_box.upper[d]);
        if x < lo || x > hi {
            return None;
        }
        let k = ((x - lo) * Rational::from_integer(self.side.into()) / (hi - lo))
            .floor()
            .to_integer()
            .to_usize()?;
        Some(k.min(self.side - 1))
    }

    /// Per-axis indices of tile `id` (first axis most significant).
    pub fn coords(&self, mut id: usize) -> Vec<usize> {
        let dim = self.state_box.dim();
        let mut out = vec![0; dim];
        for d in (0..dim).rev() {
            out[d] = id % self.side;
            id /= self.side;
        }
        out
    }
}

impl Observation for TilePartition {
    fn len(&self) -> usize {
        self.side.pow(self.state_box.dim() as u32)
    }

    fn observe(&self, s: &[Rational]) -> Result<usize, LocateError> {
        let dim = self.state_box.dim();
        if s.len() != dim {
            return Err(LocateError::Dimension {
                got: s.len(),
                expected: dim,
            });
        }
        let mut id = 0;
        for (d, x) in s.iter().enumerate() {
            let k = self
                .axis_index(d, x)
                .ok_or_else(|| LocateError::NoPart(ConcreteState(s.to_vec())))?;
            id = id * self.side + k;
        }
        Ok(id)
    }

    /// Tile centers; on integer axes the smallest integer in the tile, or
    /// nothing when the tile holds none.
    fn witnesses(&self) -> Vec<Option<ConcreteState>> {
        (0..self.len())
            .map(|id| {
                let mut s = Vec::new();
                for (d, k) in self.coords(id).into_iter().enumerate() {
                    let (a, b) = (self.edge(d, k), self.edge(d, k + 1));
                    if self.state_box.integer[d] {
                        let x = a.ceil();
                        let inside = x < b || (k + 1 == self.side && x <= b);
                        if !inside {
                            return None;
                        }
                        s.push(x);
                    } else {
                        s.push((a + b) / Rational::from_integer(2.into()));
                    }
                }
                Some(ConcreteState(s))
            })
            .collect()
    }
}

/// Action values and visit counts, one row per part.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable<F> {
    parts: usize,
    actions: usize,
    values: Vec<F>,
    visits: Vec<u64>,
}

impl<F: Float> QTable<F> {
    pub fn new(parts: usize, actions: usize) -> Self {
        QTable {
            parts,
            actions,
            values: vec![F::zero(); parts * actions],
            visits: vec![0; parts * actions],
        }
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn value(&self, part: usize, action: usize) -> F {
        self.values[part * self.actions + action]
    }

    pub fn set(&mut self, part: usize, action: usize, v: F) {
        self.values[part * self.actions + action] = v;
    }

    pub fn visits(&self, part: usize, action: usize) -> u64 {
        self.visits[part * self.actions + action]
    }

    pub fn part_visits(&self, part: usize) -> u64 {
        self.visits[part * self.actions..(part + 1) * self.actions].iter().sum()
    }

    /// Best action; ties go to the lowest index.
    pub fn greedy(&self, part: usize) -> usize {
        let row = &self.values[part * self.actions..(part + 1) * self.actions];
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, part: usize) -> F {
        self.value(part, self.greedy(part))
    }

    /// One Q-learning backup; `next` is `None` on a terminal transition.
    /// Returns the temporal-difference error.
    pub fn update(&mut self, part: usize, action: usize, reward: F, next: Option<usize>, alpha: F, gamma: F) -> F {
        let future = next.map_or(F::zero(), |o| self.max_value(o));
        let i = part * self.actions + action;
        let td = reward + gamma * future - self.values[i];
        self.values[i] = self.values[i] + alpha * td;
        self.visits[i] += 1;
        debug_assert!(self.values[i].is_finite());
        td
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedingMode {
    /// The first episodes start at each part's witness in turn.
    WitnessFirst,
    Random,
}

/// Where episodes start once witness seeding is over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitSampler {
    /// The program's `init` line, or uniform in the box without one.
    Program,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub decay: f64,
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize, episodes: usize) -> f64 {
        let span = self.decay * episodes as f64;
        if span <= 0.0 {
            return self.end;
        }
        let t = (episode as f64 / span).min(1.0);
        self.start + (self.end - self.start) * t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub episodes: usize,
    pub max_steps: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
    pub seeding: SeedingMode,
    pub init: InitSampler,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 1000,
            max_steps: 200,
            alpha: 0.1,
            gamma: 0.99,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay: 0.8,
            },
            seed: 0,
            seeding: SeedingMode::WitnessFirst,
            init: InitSampler::Program,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&e.decay) {
            return bad("epsilon decay fraction must lie in [0, 1]");
        }
        if self.episodes == 0 || self.max_steps == 0 {
            return bad("episodes and max steps must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub reward: f64,
    pub outcome: Outcome,
    pub steps: usize,
}

/// Mean greedy return over the evaluation starts after `episode` episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub episode: usize,
    pub mean_return: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub episodes: Vec<Episode>,
    pub checkpoints: Vec<Checkpoint>,
}

/// Aggregate row: percentages of success, failure, timeout, and of episodes
/// reaching the best accumulated reward observed in the run.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub parts: usize,
    pub succ: f64,
    pub fail: f64,
    pub t_out: f64,
    pub opt: f64,
}

pub const SUMMARY_HEADER: &str = "parts,succ,fail,t_out,opt";

impl Summary {
    pub fn csv_row(&self) -> String {
        format!("{},{:.2},{:.2},{:.2},{:.2}", self.parts, self.succ, self.fail, self.t_out, self.opt)
    }
}

impl RunMetrics {
    pub fn count(&self, o: Outcome) -> usize {
        self.episodes.iter().filter(|e| e.outcome == o).count()
    }

    pub fn success_rate(&self) -> f64 {
        self.count(Outcome::Success) as f64 / self.episodes.len().max(1) as f64
    }

    pub fn summary(&self, parts: usize) -> Summary {
        let n = self.episodes.len().max(1) as f64;
        let pct = |o| 100.0 * self.count(o) as f64 / n;
        let best = self.episodes.iter().map(|e| e.reward).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * best.abs().max(1.0);
        let opt = self.episodes.iter().filter(|e| e.reward >= best - tol).count();
        Summary {
            parts,
            succ: pct(Outcome::Success),
            fail: pct(Outcome::Failure),
            t_out: pct(Outcome::Timeout),
            opt: 100.0 * opt as f64 / n,
        }
    }

    pub fn best_checkpoint(&self) -> Option<&Checkpoint> {
        self.checkpoints
            .iter()
            .fold(None, |b: Option<&Checkpoint>, c| match b {
                Some(b) if b.mean_return >= c.mean_return => Some(b),
                _ => Some(c),
            })
    }

    /// `episode,accumulated_reward,outcome` per episode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,accumulated_reward,outcome\n");
        for (i, e) in self.episodes.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i, e.reward, e.outcome.label());
        }
        out
    }
}

/// Greedy evaluation during training.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPlan {
    pub starts: Vec<ConcreteState>,
    /// Evaluate after every this many episodes (and after the last).
    pub every: usize,
}

const ENV_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const EVAL_STREAM: u64 = 0x2545_f491_4f6c_dd1d;

fn to_float<F: Float>(r: &Rational) -> F {
    F::from(r.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(F::nan)
}

fn initial_state<R: Rng>(p: &Program, mode: InitSampler, rng: &mut R) -> ConcreteState {
    match (&p.init, mode) {
        (InitSpec::Fixed(v), InitSampler::Program) => ConcreteState(v.clone()),
        _ => p.state_box().sample(rng),
    }
}

pub fn train<F: Float, O: Observation + ?Sized>(
    p: &Program,
    obs: &O,
    cfg: &TrainConfig,
) -> Result<(QTable<F>, RunMetrics), LearnError> {
    train_with_eval(p, obs, cfg, None)
}

pub fn train_with_eval<F: Float, O: Observation + ?Sized>(
    p: &Program,
    obs: &O,
    cfg: &TrainConfig,
    eval: Option<&EvalPlan>,
) -> Result<(QTable<F>, RunMetrics), LearnError> {
    cfg.validate()?;
    let na = p.actions.len();
    let mut q = QTable::<F>::new(obs.len(), na);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ENV_STREAM);
    let alpha = F::from(cfg.alpha).unwrap();
    let gamma = F::from(cfg.gamma).unwrap();
    let seeds: Vec<ConcreteState> = match cfg.seeding {
        SeedingMode::WitnessFirst => obs.witnesses().into_iter().flatten().collect(),
        SeedingMode::Random => Vec::new(),
    };
    let mut metrics = RunMetrics {
        episodes: Vec::with_capacity(cfg.episodes),
        checkpoints: Vec::new(),
    };
    for ep in 0..cfg.episodes {
        let mut s = match seeds.get(ep) {
            Some(w) => w.clone(),
            None => initial_state(p, cfg.init, &mut env_rng),
        };
        let eps = cfg.epsilon.at(ep, cfg.episodes);
        let mut o = obs.observe(&s)?;
        let mut total = F::zero();
        let mut outcome = Outcome::Timeout;
        let mut steps = 0;
        while steps < cfg.max_steps {
            steps += 1;
            let a = if policy_rng.gen::<f64>() < eps {
                policy_rng.gen_range(0..na)
            } else {
                q.greedy(o)
            };
            let out = concrete_step(p, &s, a, &mut env_rng)?;
            let r: F = to_float(&out.reward);
            total = total + r;
            if out.done {
                q.update(o, a, r, None, alpha, gamma);
                outcome = if p.is_success(&out.reward) {
                    Outcome::Success
                } else {
                    Outcome::Failure
                };
                break;
            }
            let o2 = obs.observe(&out.next)?;
            q.update(o, a, r, Some(o2), alpha, gamma);
            s = out.next;
            o = o2;
        }
        metrics.episodes.push(Episode {
            reward: total.to_f64().unwrap_or(f64::NAN),
            outcome,
            steps,
        });
        if let Some(plan) = eval {
            let done = ep + 1;
            if plan.every > 0 && (done % plan.every == 0 || done == cfg.episodes) {
                let seed = cfg.seed ^ EVAL_STREAM;
                let res = evaluate_policy(p, obs, &q, &plan.starts, 1, cfg.max_steps, seed)?;
                let means: Vec<f64> = res.iter().map(|r| r.mean).collect();
                metrics.checkpoints.push(Checkpoint {
                    episode: done,
                    mean_return: mean_std(&means).0,
                });
            }
        }
    }
    Ok((q, metrics))
}

/// Returns of greedy rollouts from one start state.
#[derive(Clone, Debug, PartialEq)]
pub struct StartEvaluation {
    pub start: ConcreteState,
    pub returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Population mean and standard deviation; `(0, 0)` for no data.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Greedy rollouts, `episodes` per start, each with its own fixed seed.
pub fn evaluate_policy<F: Float, O: Observation + ?Sized>(
    p: &Program,
    obs: &O,
    q: &QTable<F>,
    starts: &[ConcreteState],
    episodes: usize,
    max_steps: usize,
    seed: u64,
) -> Result<Vec<StartEvaluation>, LearnError> {
    if q.parts() != obs.len() {
        return Err(LearnError::Shape {
            obs: obs.len(),
            table: q.parts(),
        });
    }
    let mut out = Vec::with_capacity(starts.len());
    for (i, start) in starts.iter().enumerate() {
        let mut returns = Vec::with_capacity(episodes);
        for e in 0..episodes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((i * episodes + e) as u64));
            let mut s = start.clone();
            let mut total = F::zero();
            for _ in 0..max_steps {
                let a = q.greedy(obs.observe(&s)?);
                let step = concrete_step(p, &s, a, &mut rng)?;
                total = total + to_float(&step.reward);
                if step.done {
                    break;
                }
                s = step.next;
            }
            returns.push(total.to_f64().unwrap_or(f64::NAN));
        }
        let (mean, std) = mean_std(&returns);
        out.push(StartEvaluation {
            start: start.clone(),
            returns,
            mean,
            std,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
