//! Environment programs: a small imperative language with random sampling.
//!
//! One `.env` file holds one program. The surface syntax is line oriented,
//! blocks close with `end`, and `#` starts a comment:
//!
//! ```text
//! env walk
//! param S = 1
//! state x real in [0, 10 * S]
//! action_vars d
//! action left = (-S)
//! action right = (S)
//! init (5 * S)
//! success reward >= 0
//! body
//!   n ~ uniform(-1/2, 1/2)
//!   nx = x + d + n
//!   if nx < 0:
//!     nx = 0
//!   elif nx > 10 * S:
//!     nx = 10 * S
//!   end
//!   r = -1
//!   fin = 0
//!   if nx >= 9 * S:
//!     r = 0
//!     fin = 1
//!   end
//! end
//! next (nx)
//! reward r
//! done fin
//! ```
//!
//! The body runs once per environment step. `next` names the variables that
//! hold the successor state (one per state variable, in order), `reward` the
//! step reward, and `done` a flag that ends the episode when nonzero.

mod ast;
mod interp;
pub(crate) mod parse;

use std::fmt;
use std::ops::Deref;

use num_traits::ToPrimitive;
use rand::Rng;
use thiserror::Error;

pub use ast::{ArithOp, BoolExpr, CmpOp, Dist, Expr, Stmt, VarRef};
pub use interp::{concrete_step, concrete_step_with_fuel, InterpError, StepOutcome, DEFAULT_FUEL};
pub use parse::{bool_to_formula, expr_to_term, parse, parse_formula, parse_with_params};

use crate::formula::{fmt_rational, Atom, Formula, LinExpr, Rel, Var};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateVar {
    pub name: String,
    pub lower: Rational,
    pub upper: Rational,
    /// Integer-valued grid coordinate.
    pub discrete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Action {
    pub name: String,
    pub values: Vec<Rational>,
}

/// Where training episodes start when no witness is used.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitSpec {
    Uniform,
    Fixed(Vec<Rational>),
}

/// A validated environment program. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    pub params: Vec<(String, Rational)>,
    pub state_vars: Vec<StateVar>,
    pub action_vars: Vec<String>,
    pub actions: Vec<Action>,
    pub init: InitSpec,
    /// A terminal step with reward at least this much counts as a success.
    pub success_threshold: Option<Rational>,
    pub body: Stmt,
    pub next: Vec<VarRef>,
    pub reward: VarRef,
    pub done: VarRef,
    /// Variable table: state, action components, parameters, locals.
    pub slot_names: Vec<String>,
}

impl Program {
    pub fn state_names(&self) -> Vec<String> {
        self.state_vars.iter().map(|s| s.name.clone()).collect()
    }

    pub fn state_box(&self) -> StateBox {
        StateBox {
            lower: self.state_vars.iter().map(|s| s.lower.clone()).collect(),
            upper: self.state_vars.iter().map(|s| s.upper.clone()).collect(),
            integer: self.state_vars.iter().map(|s| s.discrete).collect(),
        }
    }

    pub fn action_slot(&self, component: usize) -> usize {
        self.state_vars.len() + component
    }

    pub fn param_slot(&self, index: usize) -> usize {
        self.state_vars.len() + self.action_vars.len() + index
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a.name == name)
    }

    pub fn is_success(&self, reward: &Rational) -> bool {
        match &self.success_threshold {
            Some(t) => reward >= t,
            None => true,
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lit = |r: &Rational| {
            let s = fmt_rational(r);
            if s.starts_with('-') || s.contains('/') {
                format!("({s})")
            } else {
                s
            }
        };
        let tuple = |vals: &[Rational]| vals.iter().map(lit).collect::<Vec<_>>().join(", ");
        writeln!(f, "env {}", self.name)?;
        for (n, v) in &self.params {
            writeln!(f, "param {n} = {}", lit(v))?;
        }
        for s in &self.state_vars {
            let kind = if s.discrete { "int" } else { "real" };
            writeln!(f, "state {} {kind} in [{}, {}]", s.name, lit(&s.lower), lit(&s.upper))?;
        }
        if !self.action_vars.is_empty() {
            writeln!(f, "action_vars {}", self.action_vars.join(", "))?;
        }
        for a in &self.actions {
            writeln!(f, "action {} = ({})", a.name, tuple(&a.values))?;
        }
        if let InitSpec::Fixed(v) = &self.init {
            writeln!(f, "init ({})", tuple(v))?;
        }
        if let Some(t) = &self.success_threshold {
            writeln!(f, "success reward >= {}", lit(t))?;
        }
        writeln!(f, "body")?;
        let mut body = String::new();
        ast::write_block(&mut body, &self.body, 1);
        f.write_str(&body)?;
        writeln!(f, "end")?;
        let next: Vec<&str> = self.next.iter().map(|v| v.name.as_str()).collect();
        writeln!(f, "next ({})", next.join(", "))?;
        writeln!(f, "reward {}", self.reward.name)?;
        writeln!(f, "done {}", self.done.name)
    }
}

/// A point of the state space, one exact rational per state variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConcreteState(pub Vec<Rational>);

impl Deref for ConcreteState {
    type Target = [Rational];
    fn deref(&self) -> &[Rational] {
        &self.0
    }
}

impl From<Vec<Rational>> for ConcreteState {
    fn from(v: Vec<Rational>) -> Self {
        ConcreteState(v)
    }
}

impl fmt::Display for ConcreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(fmt_rational).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Axis-aligned bounds of the state space (closed on both ends).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateBox {
    pub lower: Vec<Rational>,
    pub upper: Vec<Rational>,
    pub integer: Vec<bool>,
}

impl StateBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, s: &[Rational]) -> bool {
        s.len() == self.dim()
            && s
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    /// `lower_i <= s_i <= upper_i` for every dimension.
    pub fn constraints(&self) -> Vec<Formula> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for i in 0..self.dim() {
            let v = LinExpr::var(Var::State(i as u32));
            let lo = v.neg().add(&LinExpr::constant(self.lower[i].clone()));
            let hi = v.add(&LinExpr::constant(-self.upper[i].clone()));
            out.push(Atom::build(lo.to_term(), Rel::Le));
            out.push(Atom::build(hi.to_term(), Rel::Le));
        }
        out
    }

    pub fn formula(&self) -> Formula {
        Formula::And(self.constraints()).normalize()
    }

    /// Uniform random point: integers for discrete dimensions, multiples of
    /// 2^-20 of the width for continuous ones.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ConcreteState {
        const GRID: i64 = 1 << 20;
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let (lo, hi) = (&self.lower[i], &self.upper[i]);
            let x = if self.integer[i] {
                let lo = lo.ceil().to_integer();
                let hi = hi.floor().to_integer();
                let span = (&hi - &lo).to_i64().unwrap_or(i64::MAX - 1);
                Rational::from_integer(lo + rng.gen_range(0..=span))
            } else {
                let k = rng.gen_range(0..=GRID);
                lo + (hi - lo) * Rational::new(k.into(), GRID.into())
            };
            out.push(x);
        }
        ConcreteState(out)
    }

    /// Same box with every bound multiplied by `k`.
    pub fn scaled(&self, k: &Rational) -> StateBox {
        StateBox {
            lower: self.lower.iter().map(|x| x * k).collect(),
            upper: self.upper.iter().map(|x| x * k).collect(),
            integer: self.integer.clone(),
        }
    }
}

#[cfg(test)]
mod tests;
