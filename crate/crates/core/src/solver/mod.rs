//! Satisfiability, witnesses and projection of sampling variables.
//!
//! Two backends answer [`check_sat`] and [`witness`]:
//!
//! * the internal one searches the formula's disjunctive structure depth
//!   first, keeping a conjunction of linear constraints per branch and pruning
//!   with Fourier–Motzkin. Nonlinear atoms are dropped for the pruning test (a
//!   linear relaxation) and then checked against a deterministic sample of
//!   points, so they can only ever yield `Sat` or `Unknown`;
//! * the external one writes SMT-LIB v2 to a solver process and reads back
//!   its verdict and model.
//!
//! [`eliminate`] always runs the exact internal projection.

mod internal;
mod sexpr;
mod smtlib;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use thiserror::Error;

use crate::dsl::{ConcreteState, StateBox};
use crate::formula::{Formula, Var};
use crate::Rational;

pub use smtlib::script as smtlib_script;

/// Largest number of search branches the internal backend explores before
/// answering `Unknown`.
pub const DEFAULT_CUBE_BUDGET: usize = 10_000;

/// Command used for the external backend when `SYMPAR_SOLVER` is unset.
pub const DEFAULT_EXTERNAL: &str = "z3 -in -smt2";

pub type Model = BTreeMap<Var, Rational>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SatResult::Sat(_) => "sat",
            SatResult::Unsat => "unsat",
            SatResult::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    Internal,
    External { command: Vec<String>, timeout: Duration },
}

/// What to do with a candidate part whose emptiness could not be decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UnknownPolicy {
    #[default]
    KeepPart,
    DropPart,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolverConfig {
    pub backend: Backend,
    pub unknown_policy: UnknownPolicy,
    pub cube_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::internal()
    }
}

impl SolverConfig {
    pub fn internal() -> Self {
        SolverConfig {
            backend: Backend::Internal,
            unknown_policy: UnknownPolicy::KeepPart,
            cube_budget: DEFAULT_CUBE_BUDGET,
        }
    }

    pub fn external(command: &str, timeout_ms: u64) -> Result<Self, SolverError> {
        if timeout_ms == 0 {
            return Err(SolverError::Config("timeout must be positive".into()));
        }
        let command: Vec<String> = command.split_whitespace().map(str::to_string).collect();
        if command.is_empty() {
            return Err(SolverError::Config("empty solver command".into()));
        }
        Ok(SolverConfig {
            backend: Backend::External {
                command,
                timeout: Duration::from_millis(timeout_ms),
            },
            unknown_policy: UnknownPolicy::KeepPart,
            cube_budget: DEFAULT_CUBE_BUDGET,
        })
    }

    /// External backend using `SYMPAR_SOLVER` or [`DEFAULT_EXTERNAL`].
    pub fn external_from_env(timeout_ms: u64) -> Result<Self, SolverError> {
        let cmd = std::env::var("SYMPAR_SOLVER").unwrap_or_else(|_| DEFAULT_EXTERNAL.to_string());
        Self::external(&cmd, timeout_ms)
    }

    pub fn with_policy(mut self, policy: UnknownPolicy) -> Self {
        self.unknown_policy = policy;
        self
    }

    /// Short description recorded in partition dumps.
    pub fn describe(&self) -> String {
        match &self.backend {
            Backend::Internal => "internal".to_string(),
            Backend::External { command, timeout } => {
                format!("external({}; {} ms)", command.join(" "), timeout.as_millis())
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("could not start solver '{command}': {reason}")]
    Spawn { command: String, reason: String },
    #[error("solver i/o failed: {0}")]
    Io(String),
    #[error("malformed solver reply: {0}")]
    Malformed(String),
    #[error("solver reported an error: {0}")]
    Backend(String),
    #[error("cannot eliminate {0:?}: it occurs in a nonlinear atom")]
    NonlinearElimination(Var),
    #[error("search budget exhausted during elimination")]
    Budget,
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

/// Outcome of a witness query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Witness {
    Found(ConcreteState),
    Unsat,
    Unknown,
}

pub fn check_sat(f: &Formula, cfg: &SolverConfig) -> Result<SatResult, SolverError> {
    match &cfg.backend {
        Backend::Internal => Ok(internal::check_sat(f, cfg.cube_budget)),
        Backend::External { command, timeout } => smtlib::check_sat(f, &BTreeSet::new(), command, *timeout),
    }
}

/// Exact projection `exists vars. f`.
pub fn eliminate(f: &Formula, vars: &BTreeSet<Var>, cfg: &SolverConfig) -> Result<Formula, SolverError> {
    internal::eliminate(f, vars, cfg.cube_budget)
}

/// A point of `f` inside `bx`. Discrete state variables get integer values.
pub fn witness(f: &Formula, bx: &StateBox, cfg: &SolverConfig) -> Result<Witness, SolverError> {
    let goal = Formula::And(vec![bx.formula(), f.clone()]).normalize();
    let ints: BTreeSet<Var> = (0..bx.dim())
        .filter(|&i| bx.integer[i])
        .map(|i| Var::State(i as u32))
        .collect();
    let result = match &cfg.backend {
        Backend::Internal => internal::find_model(&goal, &ints, cfg.cube_budget),
        Backend::External { command, timeout } => smtlib::check_sat(&goal, &ints, command, *timeout)?,
    };
    Ok(match result {
        SatResult::Sat(model) => {
            let point: Vec<Rational> = (0..bx.dim())
                .map(|i| model.get(&Var::State(i as u32)).cloned().unwrap_or_default())
                .collect();
            let ok = bx.contains(&point)
                && f.eval_at(&point) == Ok(true)
                && point.iter().zip(&bx.integer).all(|(v, &int)| !int || v.is_integer());
            if ok {
                Witness::Found(ConcreteState(point))
            } else {
                Witness::Unknown
            }
        }
        SatResult::Unsat => Witness::Unsat,
        SatResult::Unknown => Witness::Unknown,
    })
}

#[cfg(test)]
mod tests;
