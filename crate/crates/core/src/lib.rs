//! Offline state-space partitioning for tabular reinforcement learning.
//!
//! An environment is written as a small probabilistic program ([`dsl`]). The
//! program is executed symbolically once per action ([`symexec`]); the path
//! conditions of all actions are intersected into the coarsest common
//! refinement ([`partition`]), which becomes the observation function for
//! tabular Q-learning ([`learn`]).
//!
//! Path conditions and parts are exact: all constraint arithmetic runs on
//! arbitrary-precision rationals ([`Rational`]). The linear-algebra layer
//! ([`linear`]) and the learner ([`learn`]) are generic over their scalar;
//! the aliases below fix the scalars the pipeline uses.

pub mod benchmarks;
pub mod dsl;
pub mod experiment;
pub mod formula;
pub mod learn;
pub mod linear;
pub mod partition;
pub mod solver;
pub mod symexec;

/// Exact scalar used for states, constraints and program constants.
pub type Rational = num_rational::BigRational;

/// Linear constraint system over exact rationals.
pub type LinearSystem = linear::LinearSystem<Rational>;

/// Q-table with double-precision action values.
pub type QTable = learn::QTable<f64>;

pub use dsl::{ConcreteState, Program, StateBox};
pub use formula::{Formula, Var};
