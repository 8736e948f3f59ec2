//! Concrete semantics: one environment step on exact rationals.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

use super::ast::{ArithOp, BoolExpr, Dist, Expr, Stmt};
use super::{ConcreteState, Program};
use crate::formula::OpKind;
use crate::Rational;

/// Loop iterations allowed per step before the interpreter gives up.
pub const DEFAULT_FUEL: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpError {
    #[error("loop fuel exhausted after {0} iterations")]
    FuelExhausted(u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0} produced a non-finite value")]
    NonFinite(OpKind),
    #[error("read of unassigned variable '{0}'")]
    Unassigned(String),
    #[error("action index {0} out of range")]
    BadAction(usize),
    #[error("state has {got} components, program expects {expected}")]
    BadState { got: usize, expected: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub next: ConcreteState,
    pub reward: Rational,
    pub done: bool,
    /// Values drawn by sampling statements, in execution order. A Bernoulli
    /// statement records its underlying uniform draw.
    pub samples: Vec<Rational>,
}

/// Runs the program body once from `state` under action `action`.
pub fn concrete_step<R: Rng + ?Sized>(
    program: &Program,
    state: &[Rational],
    action: usize,
    rng: &mut R,
) -> Result<StepOutcome, InterpError> {
    concrete_step_with_fuel(program, state, action, rng, DEFAULT_FUEL)
}

pub fn concrete_step_with_fuel<R: Rng + ?Sized>(
    program: &Program,
    state: &[Rational],
    action: usize,
    rng: &mut R,
    fuel: u64,
) -> Result<StepOutcome, InterpError> {
    if state.len() != program.state_vars.len() {
        return Err(InterpError::BadState {
            got: state.len(),
            expected: program.state_vars.len(),
        });
    }
    let act = program.actions.get(action).ok_or(InterpError::BadAction(action))?;
    let mut env: Vec<Option<Rational>> = vec![None; program.slot_names.len()];
    for (i, v) in state.iter().enumerate() {
        env[i] = Some(v.clone());
    }
    for (i, v) in act.values.iter().enumerate() {
        env[program.action_slot(i)] = Some(v.clone());
    }
    for (i, (_, v)) in program.params.iter().enumerate() {
        env[program.param_slot(i)] = Some(v.clone());
    }
    let mut m = Machine {
        env,
        names: &program.slot_names,
        rng,
        samples: Vec::new(),
        fuel,
        used: 0,
    };
    m.exec(&program.body)?;
    let read = |m: &Machine<R>, slot: usize| {
        m.env[slot]
            .clone()
            .ok_or_else(|| InterpError::Unassigned(program.slot_names[slot].clone()))
    };
    let next = program
        .next
        .iter()
        .map(|v| read(&m, v.slot))
        .collect::<Result<Vec<_>, _>>()?;
    let reward = read(&m, program.reward.slot)?;
    let done = !read(&m, program.done.slot)?.is_zero();
    Ok(StepOutcome {
        next: ConcreteState(next),
        reward,
        done,
        samples: m.samples,
    })
}

struct Machine<'a, R: Rng + ?Sized> {
    env: Vec<Option<Rational>>,
    names: &'a [String],
    rng: &'a mut R,
    samples: Vec<Rational>,
    fuel: u64,
    used: u64,
}

impl<R: Rng + ?Sized> Machine<'_, R> {
    fn exec(&mut self, s: &Stmt) -> Result<(), InterpError> {
        match s {
            Stmt::Skip => {}
            Stmt::Assign(v, e) => {
                let val = self.eval(e)?;
                self.env[v.slot] = Some(val);
            }
            Stmt::Sample(v, d) => {
                let val = match d {
                    Dist::Uniform(lo, hi) => {
                        let u = self.unit();
                        self.samples.push(lo + (hi - lo) * &u);
                        self.samples.last().unwrap().clone()
                    }
                    Dist::Bernoulli(p) => {
                        let u = self.unit();
                        let hit = u < *p;
                        self.samples.push(u);
                        if hit {
                            Rational::one()
                        } else {
                            Rational::zero()
                        }
                    }
                };
                self.env[v.slot] = Some(val);
            }
            Stmt::Seq(v) => {
                for s in v {
                    self.exec(s)?;
                }
            }
            Stmt::If(c, t, e) => {
                if self.test(c)? {
                    self.exec(t)?;
                } else {
                    self.exec(e)?;
                }
            }
            Stmt::While(c, body) => {
                while self.test(c)? {
                    if self.used >= self.fuel {
                        return Err(InterpError::FuelExhausted(self.used));
                    }
                    self.used += 1;
                    self.exec(body)?;
                }
            }
        }
        Ok(())
    }

    /// Uniform on `[0, 1)` with 53 random bits, as an exact dyadic rational.
    fn unit(&mut self) -> Rational {
        let bits: u64 = self.rng.gen::<u64>() >> 11;
        Rational::new(BigInt::from(bits), BigInt::from(1u64 << 53))
    }

    fn eval(&self, e: &Expr) -> Result<Rational, InterpError> {
        Ok(match e {
            Expr::Num(r) => r.clone(),
            Expr::Var(v) => self.env[v.slot]
                .clone()
                .ok_or_else(|| InterpError::Unassigned(self.names[v.slot].clone()))?,
            Expr::Neg(a) => -self.eval(a)?,
            Expr::Bin(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                match op {
                    ArithOp::Add => x + y,
                    ArithOp::Sub => x - y,
                    ArithOp::Mul => x * y,
                    ArithOp::Div => {
                        if y.is_zero() {
                            return Err(InterpError::DivisionByZero);
                        }
                        x / y
                    }
                }
            }
            Expr::Call(k, a) => k.apply(&self.eval(a)?).map_err(|_| InterpError::NonFinite(*k))?,
        })
    }

    fn test(&self, b: &BoolExpr) -> Result<bool, InterpError> {
        Ok(match b {
            BoolExpr::Lit(v) => *v,
            BoolExpr::Cmp(op, x, y) => op.holds(&self.eval(x)?, &self.eval(y)?),
            BoolExpr::And(x, y) => self.test(x)? && self.test(y)?,
            BoolExpr::Or(x, y) => self.test(x)? || self.test(y)?,
            BoolExpr::Not(x) => !self.test(x)?,
        })
    }
}
