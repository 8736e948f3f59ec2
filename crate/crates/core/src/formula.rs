//! Quantifier-free arithmetic constraints over state and sampling variables.
//!
//! A [`Formula`] is a tree of [`Atom`]s joined by `and`/`or`/`not`. Every atom
//! is stored as `term REL 0` with `REL` one of `<`, `<=`, `==`. Linear terms are
//! kept as a [`LinExpr`] with exact rational coefficients; anything else
//! (products of variables, division by a variable, `cos`/`sin`/`exp`) is kept
//! opaquely as a [`Term`] tree.
//!
//! [`Formula::normalize`] produces negation normal form by rewriting negated
//! atoms instead of keeping a polarity flag:
//!
//! * `not (t < 0)`  becomes `-t <= 0`
//! * `not (t <= 0)` becomes `-t < 0`
//! * `not (t == 0)` becomes `t < 0 or -t < 0`
//!
//! Linear atoms are scaled so that the coefficient of the smallest variable has
//! absolute value one (and is positive for equalities), which makes `2x < 10`
//! and `x < 5` the same atom.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::Rational;

/// A symbolic variable. State variables are indexed by their position in the
/// program's state declaration; sampling variables by their allocation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    State(u32),
    Sample(u32),
}

impl Var {
    pub fn is_sample(self) -> bool {
        matches!(self, Var::Sample(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no value for variable {0:?}")]
    Unbound(Var),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0} is not finite at this point")]
    NonFinite(OpKind),
}

/// Lookup of variable values during evaluation.
pub trait Valuation {
    fn value(&self, var: Var) -> Option<&Rational>;
}

impl Valuation for BTreeMap<Var, Rational> {
    fn value(&self, var: Var) -> Option<&Rational> {
        self.get(&var)
    }
}

/// State values plus the samples drawn along a concrete trace.
#[derive(Clone, Debug, Default)]
pub struct TraceValuation<'a> {
    pub state: &'a [Rational],
    pub samples: &'a [Rational],
}

impl Valuation for TraceValuation<'_> {
    fn value(&self, var: Var) -> Option<&Rational> {
        match var {
            Var::State(i) => self.state.get(i as usize),
            Var::Sample(k) => self.samples.get(k as usize),
        }
    }
}

/// Only state variables are bound.
pub struct StateValuation<'a>(pub &'a [Rational]);

impl Valuation for StateValuation<'_> {
    fn value(&self, var: Var) -> Option<&Rational> {
        match var {
            Var::State(i) => self.0.get(i as usize),
            Var::Sample(_) => None,
        }
    }
}

/// Affine combination `sum(c_v * v) + constant`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct LinExpr {
    pub coeffs: BTreeMap<Var, Rational>,
    pub constant: Rational,
}

impl LinExpr {
    pub fn constant(c: Rational) -> Self {
        LinExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: Var) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(v, Rational::one());
        LinExpr {
            coeffs,
            constant: Rational::zero(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        for (v, c) in &other.coeffs {
            let entry = out.coeffs.entry(*v).or_insert_with(Rational::zero);
            *entry += c;
        }
        out.coeffs.retain(|_, c| !c.is_zero());
        out.constant += &other.constant;
        out
    }

    pub fn scale(&self, k: &Rational) -> LinExpr {
        if k.is_zero() {
            return LinExpr::default();
        }
        LinExpr {
            coeffs: self.coeffs.iter().map(|(v, c)| (*v, c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn neg(&self) -> LinExpr {
        self.scale(&-Rational::one())
    }

    pub fn coeff(&self, v: Var) -> Rational {
        self.coeffs.get(&v).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn eval(&self, env: &dyn Valuation) -> Result<Rational, EvalError> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            let x = env.value(*v).ok_or(EvalError::Unbound(*v))?;
            acc += c * x;
        }
        Ok(acc)
    }

    pub fn to_term(&self) -> Term {
        let mut parts: Vec<Term> = self
            .coeffs
            .iter()
            .map(|(v, c)| Term::mul(Term::Const(c.clone()), Term::Var(*v)))
            .collect();
        if !self.constant.is_zero() || parts.is_empty() {
            parts.push(Term::Const(self.constant.clone()));
        }
        parts
            .into_iter()
            .reduce(Term::add)
            .expect("at least one summand")
    }
}

/// Transcendental operators carried opaquely.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Cos,
    Sin,
    Exp,
}

impl OpKind {
    pub fn name(self) -> &'static str {
        match self {
            OpKind::Cos => "cos",
            OpKind::Sin => "sin",
            OpKind::Exp => "exp",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        match name {
            "cos" => Some(OpKind::Cos),
            "sin" => Some(OpKind::Sin),
            "exp" => Some(OpKind::Exp),
            _ => None,
        }
    }

    /// Evaluated in floating point and converted back exactly; the only
    /// inexact step anywhere in formula evaluation.
    pub fn apply(self, x: &Rational) -> Result<Rational, EvalError> {
        let xf = x.to_f64().unwrap_or(f64::NAN);
        let y = match self {
            OpKind::Cos => xf.cos(),
            OpKind::Sin => xf.sin(),
            OpKind::Exp => xf.exp(),
        };
        Rational::from_float(y).ok_or(EvalError::NonFinite(self))
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Arithmetic expression over symbolic variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Rational),
    Var(Var),
    Add(Arc<Term>, Arc<Term>),
    Sub(Arc<Term>, Arc<Term>),
    Mul(Arc<Term>, Arc<Term>),
    Div(Arc<Term>, Arc<Term>),
    Neg(Arc<Term>),
    Op(OpKind, Arc<Term>),
}

impl Term {
    pub fn int(n: i64) -> Term {
        Term::Const(Rational::from_integer(n.into()))
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            Term::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn add(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Const(x), Term::Const(y)) => Term::Const(x + y),
            (Term::Const(x), _) if x.is_zero() => b,
            (_, Term::Const(y)) if y.is_zero() => a,
            _ => Term::Add(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn sub(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Const(x), Term::Const(y)) => Term::Const(x - y),
            (_, Term::Const(y)) if y.is_zero() => a,
            _ => Term::Sub(Arc::new(a), Arc::new(b)),
        }
    }

    pub fn mul(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Const(x), Term::Const(y)) => Term::Const(x * y),
            (Term::Const(x), _) | (_, Term::Const(x)) if x.is_zero() => Term::int(0),
            (Term::Const(x), _) if x.is_one() => b,
            (_, Term::Const(y)) if y.is_one() => a,
            _ => Term::Mul(Arc::new(a), Arc::new(b)),
        }
    }

    /// Constant division by zero is reported by the caller; here it is left
    /// symbolic so evaluation surfaces it.
    pub fn div(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Const(x), Term::Const(y)) if !y.is_zero() => Term::Const(x / y),
            (_, Term::Const(y)) if y.is_one() => a,
            _ => Term::Div(Arc::new(a), Arc::new(b)),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(a: Term) -> Term {
        match a {
            Term::Const(x) => Term::Const(-x),
            Term::Neg(inner) => (*inner).clone(),
            other => Term::Neg(Arc::new(other)),
        }
    }

    pub fn op(kind: OpKind, a: Term) -> Term {
        Term::Op(kind, Arc::new(a))
    }

    pub fn eval(&self, env: &dyn Valuation) -> Result<Rational, EvalError> {
        Ok(match self {
            Term::Const(c) => c.clone(),
            Term::Var(v) => env.value(*v).cloned().ok_or(EvalError::Unbound(*v))?,
            Term::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Term::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Term::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Term::Div(a, b) => {
                let d = b.eval(env)?;
                if d.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(env)? / d
            }
            Term::Neg(a) => -a.eval(env)?,
            Term::Op(k, a) => k.apply(&a.eval(env)?)?,
        })
    }

    /// Affine form of this term, when it has one.
    pub fn to_linear(&self) -> Option<LinExpr> {
        Some(match self {
            Term::Const(c) => LinExpr::constant(c.clone()),
            Term::Var(v) => LinExpr::var(*v),
            Term::Add(a, b) => a.to_linear()?.add(&b.to_linear()?),
            Term::Sub(a, b) => a.to_linear()?.add(&b.to_linear()?.neg()),
            Term::Neg(a) => a.to_linear()?.neg(),
            Term::Mul(a, b) => {
                let (la, lb) = (a.to_linear()?, b.to_linear()?);
                if la.is_constant() {
                    lb.scale(&la.constant)
                } else if lb.is_constant() {
                    la.scale(&lb.constant)
                } else {
                    return None;
                }
            }
            Term::Div(a, b) => {
                let lb = b.to_linear()?;
                if !lb.is_constant() || lb.constant.is_zero() {
                    return None;
                }
                a.to_linear()?.scale(&lb.constant.recip())
            }
            Term::Op(..) => return None,
        })
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => {
                out.insert(*v);
            }
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) | Term::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Term::Neg(a) | Term::Op(_, a) => a.collect_vars(out),
        }
    }

    pub fn substitute(&self, f: &dyn Fn(Var) -> Option<Term>) -> Term {
        match self {
            Term::Const(_) => self.clone(),
            Term::Var(v) => f(*v).unwrap_or_else(|| self.clone()),
            Term::Add(a, b) => Term::add(a.substitute(f), b.substitute(f)),
            Term::Sub(a, b) => Term::sub(a.substitute(f), b.substitute(f)),
            Term::Mul(a, b) => Term::mul(a.substitute(f), b.substitute(f)),
            Term::Div(a, b) => Term::div(a.substitute(f), b.substitute(f)),
            Term::Neg(a) => Term::neg(a.substitute(f)),
            Term::Op(k, a) => Term::op(*k, a.substitute(f)),
        }
    }
}

/// Relation of an atom's term against zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Lt,
    Le,
    Eq,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "==",
        }
    }

    pub fn holds(self, value: &Rational) -> bool {
        match self {
            Rel::Lt => value.is_negative(),
            Rel::Le => !value.is_positive(),
            Rel::Eq => value.is_zero(),
        }
    }
}

/// Left-hand side of an atom; the right-hand side is always zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AtomTerm {
    Linear(LinExpr),
    Nonlinear(Term),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub lhs: AtomTerm,
    pub rel: Rel,
}

/// Outcome of building an atom: it may fold to a constant.
enum Built {
    Const(bool),
    Atom(Atom),
}

impl Atom {
    /// `term rel 0`, canonicalized. Returns a constant formula when the term
    /// has no variables.
    pub fn build(term: Term, rel: Rel) -> Formula {
        match Self::build_inner(term, rel) {
            Built::Const(b) => Formula::constant(b),
            Built::Atom(a) => Formula::Atom(a),
        }
    }

    fn build_inner(term: Term, rel: Rel) -> Built {
        match term.to_linear() {
            Some(lin) => Self::from_linear(lin, rel),
            None => {
                let mut vars = BTreeSet::new();
                term.collect_vars(&mut vars);
                if vars.is_empty() {
                    // Closed nonlinear term such as cos(1/2).
                    match term.eval(&BTreeMap::new()) {
                        Ok(v) => Built::Const(rel.holds(&v)),
                        Err(_) => Built::Atom(Atom {
                            lhs: AtomTerm::Nonlinear(term),
                            rel,
                        }),
                    }
                } else {
                    Built::Atom(Atom {
                        lhs: AtomTerm::Nonlinear(term),
                        rel,
                    })
                }
            }
        }
    }

    fn from_linear(lin: LinExpr, rel: Rel) -> Built {
        let Some(lead) = lin.coeffs.values().next().cloned() else {
            return Built::Const(rel.holds(&lin.constant));
        };
        let mut factor = lead.abs().recip();
        if rel == Rel::Eq && lead.is_negative() {
            factor = -factor;
        }
        Built::Atom(Atom {
            lhs: AtomTerm::Linear(lin.scale(&factor)),
            rel,
        })
    }

    pub fn linear(&self) -> Option<&LinExpr> {
        match &self.lhs {
            AtomTerm::Linear(l) => Some(l),
            AtomTerm::Nonlinear(_) => None,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.linear().is_some()
    }

    pub fn lhs_term(&self) -> Term {
        match &self.lhs {
            AtomTerm::Linear(l) => l.to_term(),
            AtomTerm::Nonlinear(t) => t.clone(),
        }
    }

    pub fn eval(&self, env: &dyn Valuation) -> Result<bool, EvalError> {
        let v = match &self.lhs {
            AtomTerm::Linear(l) => l.eval(env)?,
            AtomTerm::Nonlinear(t) => t.eval(env)?,
        };
        Ok(self.rel.holds(&v))
    }

    /// The negation as a disjunction of atoms (one atom except for `==`).
    pub fn negate(&self) -> Vec<Atom> {
        let neg_lhs = match &self.lhs {
            AtomTerm::Linear(l) => AtomTerm::Linear(l.neg()),
            AtomTerm::Nonlinear(t) => AtomTerm::Nonlinear(Term::neg(t.clone())),
        };
        match self.rel {
            Rel::Lt => vec![Atom {
                lhs: neg_lhs,
                rel: Rel::Le,
            }],
            Rel::Le => vec![Atom {
                lhs: neg_lhs,
                rel: Rel::Lt,
            }],
            Rel::Eq => vec![
                Atom {
                    lhs: self.lhs.clone(),
                    rel: Rel::Lt,
                },
                Atom {
                    lhs: neg_lhs,
                    rel: Rel::Lt,
                },
            ],
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match &self.lhs {
            AtomTerm::Linear(l) => out.extend(l.coeffs.keys().copied()),
            AtomTerm::Nonlinear(t) => t.collect_vars(out),
        }
    }

    pub fn mentions(&self, var: Var) -> bool {
        let mut vs = BTreeSet::new();
        self.collect_vars(&mut vs);
        vs.contains(&var)
    }
}

/// Quantifier-free formula.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
}

impl Formula {
    pub fn constant(b: bool) -> Formula {
        if b {
            Formula::True
        } else {
            Formula::False
        }
    }

    /// `lhs rel rhs` for `rel` in `<`, `<=`, `==`.
    pub fn compare(lhs: Term, rel: Rel, rhs: Term) -> Formula {
        Atom::build(Term::sub(lhs, rhs), rel)
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::True)
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Formula::False)
    }

    pub fn eval(&self, env: &dyn Valuation) -> Result<bool, EvalError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.eval(env)?,
            Formula::And(fs) => {
                for f in fs {
                    if !f.eval(env)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(fs) => {
                for f in fs {
                    if f.eval(env)? {
                        return Ok(true);
                    }
                }
                false
            }
            Formula::Not(f) => !f.eval(env)?,
        })
    }

    /// Exact membership test of a concrete state. Fails if the formula still
    /// mentions a sampling variable.
    pub fn eval_at(&self, point: &[Rational]) -> Result<bool, EvalError> {
        self.eval(&StateValuation(point))
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => a.collect_vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_vars(out)),
            Formula::Not(f) => f.collect_vars(out),
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| out.push(a));
        out
    }

    fn visit_atoms<'a>(&'a self, f: &mut dyn FnMut(&'a Atom)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => f(a),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| g.visit_atoms(f)),
            Formula::Not(g) => g.visit_atoms(f),
        }
    }

    pub fn is_linear(&self) -> bool {
        self.atoms().iter().all(|a| a.is_linear())
    }

    /// Negation normal form with flattening, constant folding and duplicate
    /// removal. Idempotent.
    pub fn normalize(&self) -> Formula {
        self.nnf(true)
    }

    fn nnf(&self, positive: bool) -> Formula {
        match (self, positive) {
            (Formula::True, p) | (Formula::False, p) if !p => Formula::constant(self.is_false()),
            (Formula::True, _) => Formula::True,
            (Formula::False, _) => Formula::False,
            (Formula::Atom(a), true) => match Atom::from_parts(a) {
                Built::Const(b) => Formula::constant(b),
                Built::Atom(a) => Formula::Atom(a),
            },
            (Formula::Atom(a), false) => {
                Formula::Or(a.negate().into_iter().map(Formula::Atom).collect()).nnf(true)
            }
            (Formula::Not(f), p) => f.nnf(!p),
            (Formula::And(fs), true) | (Formula::Or(fs), false) => {
                conjoin_flat(fs.iter().map(|f| f.nnf(positive)))
            }
            (Formula::Or(fs), true) | (Formula::And(fs), false) => {
                disjoin_flat(fs.iter().map(|f| f.nnf(positive)))
            }
        }
    }

    pub fn substitute(&self, f: &dyn Fn(Var) -> Option<Term>) -> Formula {
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Atom(a) => Atom::build(a.lhs_term().substitute(f), a.rel),
            Formula::And(fs) => Formula::And(fs.iter().map(|g| g.substitute(f)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|g| g.substitute(f)).collect()),
            Formula::Not(g) => Formula::Not(Box::new(g.substitute(f))),
        }
    }

    pub fn display<'a>(&'a self, names: &'a dyn VarNames) -> FormulaDisplay<'a> {
        FormulaDisplay {
            formula: self,
            names,
        }
    }
}

impl Atom {
    fn from_parts(a: &Atom) -> Built {
        match &a.lhs {
            AtomTerm::Linear(l) => Atom::from_linear(l.clone(), a.rel),
            AtomTerm::Nonlinear(t) => Atom::build_inner(t.clone(), a.rel),
        }
    }
}

fn conjoin_flat(children: impl Iterator<Item = Formula>) -> Formula {
    let mut out: Vec<Formula> = Vec::new();
    for c in children {
        match c {
            Formula::True => {}
            Formula::False => return Formula::False,
            Formula::And(inner) => {
                for g in inner {
                    if !out.contains(&g) {
                        out.push(g);
                    }
                }
            }
            other => {
                if !out.contains(&other) {
                    out.push(other);
                }
            }
        }
    }
    match out.len() {
        0 => Formula::True,
        1 => out.pop().unwrap(),
        _ => Formula::And(out),
    }
}

fn disjoin_flat(children: impl Iterator<Item = Formula>) -> Formula {
    let mut out: Vec<Formula> = Vec::new();
    for c in children {
        match c {
            Formula::False => {}
            Formula::True => return Formula::True,
            Formula::Or(inner) => {
                for g in inner {
                    if !out.contains(&g) {
                        out.push(g);
                    }
                }
            }
            other => {
                if !out.contains(&other) {
                    out.push(other);
                }
            }
        }
    }
    match out.len() {
        0 => Formula::False,
        1 => out.pop().unwrap(),
        _ => Formula::Or(out),
    }
}

/// Normalized conjunction.
pub fn conjoin<I: IntoIterator<Item = Formula>>(fs: I) -> Formula {
    Formula::And(fs.into_iter().collect()).normalize()
}

/// Normalized disjunction.
pub fn disjoin<I: IntoIterator<Item = Formula>>(fs: I) -> Formula {
    Formula::Or(fs.into_iter().collect()).normalize()
}

/// Normalized negation.
pub fn negate(f: &Formula) -> Formula {
    f.nnf(false)
}

/// Naming of variables for printing.
pub trait VarNames {
    fn name(&self, var: Var) -> String;
}

/// `s0, s1, ...` for state variables and `y0, y1, ...` for samples.
pub struct DefaultNames;

impl VarNames for DefaultNames {
    fn name(&self, var: Var) -> String {
        match var {
            Var::State(i) => format!("s{i}"),
            Var::Sample(k) => format!("y{k}"),
        }
    }
}

/// State variables by declared name; samples as `y#k`, which is not a valid
/// program identifier and so cannot collide.
pub struct StateNames<'a>(pub &'a [String]);

impl VarNames for StateNames<'_> {
    fn name(&self, var: Var) -> String {
        match var {
            Var::State(i) => self
                .0
                .get(i as usize)
                .cloned()
                .unwrap_or_else(|| format!("s{i}")),
            Var::Sample(k) => format!("y#{k}"),
        }
    }
}

pub fn fmt_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub struct FormulaDisplay<'a> {
    formula: &'a Formula,
    names: &'a dyn VarNames,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(f, self.formula, self.names, false)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(f, self, &DefaultNames, false)
    }
}

fn write_formula(
    f: &mut fmt::Formatter<'_>,
    formula: &Formula,
    names: &dyn VarNames,
    nested: bool,
) -> fmt::Result {
    match formula {
        Formula::True => f.write_str("true"),
        Formula::False => f.write_str("false"),
        Formula::Atom(a) => write_atom(f, a, names),
        Formula::Not(g) => {
            f.write_str("not ")?;
            write_formula(f, g, names, true)
        }
        Formula::And(fs) | Formula::Or(fs) => {
            let sep = if matches!(formula, Formula::And(_)) {
                " and "
            } else {
                " or "
            };
            if nested {
                f.write_str("(")?;
            }
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write_formula(f, g, names, true)?;
            }
            if nested {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

fn write_atom(f: &mut fmt::Formatter<'_>, a: &Atom, names: &dyn VarNames) -> fmt::Result {
    match &a.lhs {
        AtomTerm::Linear(l) => {
            // Variables on the left, constant on the right.
            let mut first = true;
            for (v, c) in &l.coeffs {
                let mag = c.abs();
                if first {
                    if c.is_negative() {
                        f.write_str("-")?;
                    }
                } else if c.is_negative() {
                    f.write_str(" - ")?;
                } else {
                    f.write_str(" + ")?;
                }
                if !mag.is_one() {
                    write!(f, "{}*", fmt_rational_atom(&mag))?;
                }
                f.write_str(&names.name(*v))?;
                first = false;
            }
            write!(f, " {} {}", a.rel.symbol(), fmt_rational(&-&l.constant))
        }
        AtomTerm::Nonlinear(t) => {
            write_term(f, t, names, 0)?;
            write!(f, " {} 0", a.rel.symbol())
        }
    }
}

fn fmt_rational_atom(r: &Rational) -> String {
    if r.is_integer() {
        fmt_rational(r)
    } else {
        format!("({})", fmt_rational(r))
    }
}

pub struct TermDisplay<'a> {
    pub term: &'a Term,
    pub names: &'a dyn VarNames,
}

impl fmt::Display for TermDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self.term, self.names, 0)
    }
}

/// Precedence: 0 top, 1 additive operand on the right, 2 multiplicative.
fn write_term(f: &mut fmt::Formatter<'_>, t: &Term, names: &dyn VarNames, prec: u8) -> fmt::Result {
    let (my, body): (u8, Box<dyn Fn(&mut fmt::Formatter<'_>) -> fmt::Result + '_>) = match t {
        Term::Const(c) => {
            if c.is_negative() || !c.is_integer() {
                return write!(f, "({})", fmt_rational(c));
            }
            return f.write_str(&fmt_rational(c));
        }
        Term::Var(v) => return f.write_str(&names.name(*v)),
        Term::Op(k, a) => {
            write!(f, "{}(", k.name())?;
            write_term(f, a, names, 0)?;
            return f.write_str(")");
        }
        Term::Add(a, b) => (
            0,
            Box::new(move |f| {
                write_term(f, a, names, 0)?;
                f.write_str(" + ")?;
                write_term(f, b, names, 1)
            }),
        ),
        Term::Sub(a, b) => (
            0,
            Box::new(move |f| {
                write_term(f, a, names, 0)?;
                f.write_str(" - ")?;
                write_term(f, b, names, 1)
            }),
        ),
        Term::Mul(a, b) => (
            2,
            Box::new(move |f| {
                write_term(f, a, names, 2)?;
                f.write_str("*")?;
                write_term(f, b, names, 3)
            }),
        ),
        Term::Div(a, b) => (
            2,
            Box::new(move |f| {
                write_term(f, a, names, 2)?;
                f.write_str("/")?;
                write_term(f, b, names, 3)
            }),
        ),
        Term::Neg(a) => (
            3,
            Box::new(move |f| {
                f.write_str("-")?;
                write_term(f, a, names, 3)
            }),
        ),
    };
    if my < prec {
        f.write_str("(")?;
        body(f)?;
        f.write_str(")")
    } else {
        body(f)
    }
}
