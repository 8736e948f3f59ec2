use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Model, SatResult, SolverError};
use crate::formula::{Atom, AtomTerm, Formula, LinExpr, OpKind, Rel, Term, Var};
use crate::linear::{Constraint, LinearSystem};
use crate::Rational;

/// Random points tried per branch that carries nonlinear atoms.
const NONLINEAR_SAMPLES: usize = 64;
const SAMPLE_SEED: u64 = 0x5eed_5a4d;

/// Column layout of one query: variables first, then one column per
/// distinct nonlinear subterm. Treating those subterms as free unknowns
/// gives a linear relaxation of the nonlinear atoms.
struct Columns {
    vars: Vec<Var>,
    index: BTreeMap<Var, usize>,
    opaque: Vec<Term>,
    opaque_index: HashMap<Term, usize>,
}

impl Columns {
    fn of(f: &Formula, extra: &BTreeSet<Var>) -> Self {
        let mut vars = f.vars();
        vars.extend(extra.iter().copied());
        let vars: Vec<Var> = vars.into_iter().collect();
        let index = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut cols = Columns {
            vars,
            index,
            opaque: Vec::new(),
            opaque_index: HashMap::new(),
        };
        for a in f.atoms() {
            if let AtomTerm::Nonlinear(t) = &a.lhs {
                cols.register(t);
            }
        }
        cols
    }

    fn register(&mut self, t: &Term) {
        match t {
            Term::Const(_) | Term::Var(_) => {}
            Term::Add(a, b) | Term::Sub(a, b) => {
                self.register(a);
                self.register(b);
            }
            Term::Neg(a) => self.register(a),
            Term::Mul(a, b) if a.to_linear().is_some_and(|l| l.is_constant()) => self.register(b),
            Term::Mul(a, b) if b.to_linear().is_some_and(|l| l.is_constant()) => self.register(a),
            Term::Div(a, b) if b.to_linear().is_some_and(|l| l.is_constant() && !l.constant.is_zero()) => {
                self.register(a)
            }
            _ => {
                if !self.opaque_index.contains_key(t) {
                    self.opaque_index.insert(t.clone(), self.vars.len() + self.opaque.len());
                    self.opaque.push(t.clone());
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.vars.len() + self.opaque.len()
    }

    /// Coefficients over the columns, or `None` for an unregistered subterm.
    fn decompose(&self, t: &Term, k: &Rational, coeffs: &mut [Rational], constant: &mut Rational) -> Option<()> {
        if let Some(l) = t.to_linear() {
            for (v, c) in &l.coeffs {
                coeffs[self.index[v]] += k * c;
            }
            *constant += k * &l.constant;
            return Some(());
        }
        match t {
            Term::Add(a, b) => {
                self.decompose(a, k, coeffs, constant)?;
                self.decompose(b, k, coeffs, constant)
            }
            Term::Sub(a, b) => {
                self.decompose(a, k, coeffs, constant)?;
                self.decompose(b, &-k, coeffs, constant)
            }
            Term::Neg(a) => self.decompose(a, &-k, coeffs, constant),
            Term::Mul(a, b) => match (a.to_linear(), b.to_linear()) {
                (Some(la), _) if la.is_constant() => self.decompose(b, &(k * &la.constant), coeffs, constant),
                (_, Some(lb)) if lb.is_constant() => self.decompose(a, &(k * &lb.constant), coeffs, constant),
                _ => self.opaque_term(t, k, coeffs),
            },
            Term::Div(a, b) => match b.to_linear() {
                Some(lb) if lb.is_constant() && !lb.constant.is_zero() => {
                    self.decompose(a, &(k / &lb.constant), coeffs, constant)
                }
                _ => self.opaque_term(t, k, coeffs),
            },
            _ => self.opaque_term(t, k, coeffs),
        }
    }

    fn opaque_term(&self, t: &Term, k: &Rational, coeffs: &mut [Rational]) -> Option<()> {
        let i = *self.opaque_index.get(t)?;
        coeffs[i] += k;
        Some(())
    }

    fn constraint(&self, a: &Atom) -> Option<Constraint<Rational>> {
        let mut coeffs = vec![Rational::zero(); self.len()];
        let mut constant = Rational::zero();
        match &a.lhs {
            AtomTerm::Linear(l) => {
                for (v, c) in &l.coeffs {
                    coeffs[self.index[v]] = c.clone();
                }
                constant = l.constant.clone();
            }
            AtomTerm::Nonlinear(t) => self.decompose(t, &Rational::one(), &mut coeffs, &mut constant)?,
        }
        Some(Constraint::new(coeffs, constant, a.rel))
    }

    /// Range facts about opaque columns (`-1 <= cos t <= 1`, `exp t > 0`).
    fn opaque_bounds(&self, sys: &mut LinearSystem<Rational>) {
        for (j, t) in self.opaque.iter().enumerate() {
            let col = self.vars.len() + j;
            let unit = |sign: i64| {
                let mut c = vec![Rational::zero(); self.len()];
                c[col] = Rational::from_integer(sign.into());
                c
            };
            match t {
                Term::Op(OpKind::Cos | OpKind::Sin, _) => {
                    sys.push(Constraint::new(unit(1), -Rational::one(), Rel::Le));
                    sys.push(Constraint::new(unit(-1), -Rational::one(), Rel::Le));
                }
                Term::Op(OpKind::Exp, _) => sys.push(Constraint::new(unit(-1), Rational::zero(), Rel::Lt)),
                _ => {}
            }
        }
    }

    fn to_formula(&self, c: &Constraint<Rational>) -> Formula {
        let mut lin = LinExpr::constant(c.constant.clone());
        let mut term: Option<Term> = None;
        for (i, a) in c.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            if i < self.vars.len() {
                lin.coeffs.insert(self.vars[i], a.clone());
            } else {
                let piece = Term::mul(Term::Const(a.clone()), self.opaque[i - self.vars.len()].clone());
                term = Some(match term {
                    None => piece,
                    Some(t) => Term::add(t, piece),
                });
            }
        }
        let lhs = match term {
            None => lin.to_term(),
            Some(t) => Term::add(t, lin.to_term()),
        };
        Atom::build(lhs, c.rel)
    }

    fn model(&self, point: &[Rational]) -> Model {
        self.vars.iter().copied().zip(point.iter().cloned()).collect()
    }
}

#[derive(Clone)]
enum Goal<'a> {
    F(&'a Formula, bool),
    A(Atom),
}

impl Goal<'_> {
    fn is_literal(&self) -> bool {
        matches!(self, Goal::A(_) | Goal::F(Formula::Atom(_), _))
    }

    fn negated(&self) -> Option<Self> {
        match self {
            Goal::F(f, pol) => Some(Goal::F(f, !pol)),
            Goal::A(a) => {
                let mut n = a.negate();
                (n.len() == 1).then(|| Goal::A(n.pop().unwrap()))
            }
        }
    }
}

#[derive(PartialEq, Eq)]
enum Mode {
    /// Stop at the first satisfying point.
    Model,
    /// Collect every feasible branch.
    Enumerate,
}

struct Search<'c> {
    cols: &'c Columns,
    integer: Vec<bool>,
    mode: Mode,
    budget: usize,
    exhausted: bool,
    unknown: bool,
    rng: ChaCha8Rng,
    cubes: Vec<LinearSystem<Rational>>,
    unknown_terms: bool,
}

impl<'c> Search<'c> {
    fn new(cols: &'c Columns, integer: Vec<bool>, mode: Mode, budget: usize) -> Self {
        Search {
            cols,
            integer,
            mode,
            budget,
            exhausted: false,
            unknown: false,
            rng: ChaCha8Rng::seed_from_u64(SAMPLE_SEED),
            cubes: Vec::new(),
            unknown_terms: false,
        }
    }

    fn feasible(&mut self, sys: &LinearSystem<Rational>) -> bool {
        match sys.is_feasible() {
            Ok(b) => b,
            Err(_) => {
                self.unknown = true;
                false
            }
        }
    }

    fn add_atom(&mut self, a: &Atom, sys: &mut LinearSystem<Rational>, nonlin: &mut Vec<Atom>) {
        match self.cols.constraint(a) {
            Some(c) => sys.push(c),
            // Unregistered subterm: the relaxation just loses this row, which
            // only matters when cubes are collected.
            None => self.unknown_terms = true,
        }
        if !a.is_linear() {
            nonlin.push(a.clone());
        }
    }

    fn solve<'a>(
        &mut self,
        mut goals: Vec<Goal<'a>>,
        mut sys: LinearSystem<Rational>,
        mut nonlin: Vec<Atom>,
    ) -> Option<Vec<Rational>> {
        loop {
            if sys.is_trivially_infeasible() {
                return None;
            }
            let Some(goal) = goals.pop() else {
                return self.leaf(sys, nonlin);
            };
            let (f, pol) = match goal {
                Goal::A(a) => {
                    self.add_atom(&a, &mut sys, &mut nonlin);
                    continue;
                }
                Goal::F(f, pol) => (f, pol),
            };
            match f {
                Formula::True | Formula::False => {
                    if f.is_true() != pol {
                        return None;
                    }
                }
                Formula::Not(g) => goals.push(Goal::F(g, !pol)),
                Formula::Atom(a) => {
                    if pol {
                        self.add_atom(a, &mut sys, &mut nonlin);
                    } else {
                        let mut neg = a.negate();
                        if neg.len() == 1 {
                            self.add_atom(&neg.pop().unwrap(), &mut sys, &mut nonlin);
                        } else {
                            let alts = neg.into_iter().map(Goal::A).collect();
                            return self.branch(goals, sys, nonlin, alts);
                        }
                    }
                }
                Formula::And(fs) if pol => goals.extend(fs.iter().rev().map(|g| Goal::F(g, true))),
                Formula::Or(fs) if !pol => goals.extend(fs.iter().rev().map(|g| Goal::F(g, false))),
                Formula::And(fs) | Formula::Or(fs) => {
                    let alts = fs.iter().map(|g| Goal::F(g, pol)).collect();
                    return self.branch(goals, sys, nonlin, alts);
                }
            }
        }
    }

    /// Tries each alternative in turn. Literal alternatives are made disjoint
    /// by assuming the negation of the earlier ones.
    fn branch<'a>(
        &mut self,
        goals: Vec<Goal<'a>>,
        sys: LinearSystem<Rational>,
        nonlin: Vec<Atom>,
        alts: Vec<Goal<'a>>,
    ) -> Option<Vec<Rational>> {
        if !self.feasible(&sys) {
            return None;
        }
        let disjoint = alts.iter().all(Goal::is_literal);
        for (i, alt) in alts.iter().enumerate() {
            if self.budget == 0 {
                self.exhausted = true;
                return None;
            }
            self.budget -= 1;
            let mut next = goals.clone();
            if disjoint {
                next.extend(alts[..i].iter().filter_map(Goal::negated));
            }
            next.push(alt.clone());
            if let Some(p) = self.solve(next, sys.clone(), nonlin.clone()) {
                return Some(p);
            }
            if self.exhausted {
                return None;
            }
        }
        None
    }

    fn leaf(&mut self, sys: LinearSystem<Rational>, nonlin: Vec<Atom>) -> Option<Vec<Rational>> {
        if !self.feasible(&sys) {
            return None;
        }
        if self.mode == Mode::Enumerate {
            self.cubes.push(sys);
            return None;
        }
        let order: Vec<usize> = (0..self.cols.len()).collect();
        let nvars = self.cols.vars.len();
        if nonlin.is_empty() {
            return match sys.find_point(&order, &self.integer) {
                Ok(p) => p,
                Err(_) => {
                    self.unknown = true;
                    None
                }
            };
        }
        // Opaque columns are free in the relaxation, so a candidate is
        // judged by its variable values alone.
        let holds = |p: &[Rational]| {
            let env = self.cols.model(&p[..nvars]);
            nonlin.iter().all(|a| a.eval(&env) == Ok(true))
        };
        let mut candidates = Vec::new();
        if let Ok(Some(p)) = sys.find_point(&order, &self.integer) {
            candidates.push(p);
        }
        for _ in 0..NONLINEAR_SAMPLES {
            let rng = &mut self.rng;
            let mut draw = || {
                let k: i64 = rng.gen_range(0..4096);
                Rational::new(BigInt::from(2 * k + 1), BigInt::from(8192))
            };
            match sys.sample_point(&order, &mut draw) {
                Ok(Some(mut p)) => {
                    for (i, v) in p.iter_mut().enumerate().take(nvars) {
                        if self.integer[i] {
                            *v = v.round();
                        }
                    }
                    candidates.push(p);
                }
                Ok(None) => break,
                Err(_) => break,
            }
        }
        for p in candidates {
            if sys.holds_at(&p) && holds(&p) {
                return Some(p);
            }
        }
        self.unknown = true;
        None
    }
}

pub(super) fn check_sat(f: &Formula, budget: usize) -> SatResult {
    find_model(f, &BTreeSet::new(), budget)
}

pub(super) fn find_model(f: &Formula, ints: &BTreeSet<Var>, budget: usize) -> SatResult {
    let cols = Columns::of(f, &BTreeSet::new());
    let integer = (0..cols.len())
        .map(|i| i < cols.vars.len() && ints.contains(&cols.vars[i]))
        .collect();
    let mut search = Search::new(&cols, integer, Mode::Model, budget);
    let mut sys = LinearSystem::new(cols.len());
    cols.opaque_bounds(&mut sys);
    let found = search.solve(vec![Goal::F(f, true)], sys, Vec::new());
    match found {
        Some(p) => SatResult::Sat(cols.model(&p[..cols.vars.len()])),
        None if search.exhausted || search.unknown => SatResult::Unknown,
        None => SatResult::Unsat,
    }
}

pub(super) fn eliminate(f: &Formula, vars: &BTreeSet<Var>, budget: usize) -> Result<Formula, SolverError> {
    let f = f.normalize();
    let conjuncts = match f {
        Formula::And(fs) => fs,
        other => vec![other],
    };
    let (relevant, keep): (Vec<Formula>, Vec<Formula>) = conjuncts
        .into_iter()
        .partition(|g| g.vars().iter().any(|v| vars.contains(v)));
    if relevant.is_empty() {
        return Ok(Formula::And(keep).normalize());
    }
    for g in &relevant {
        for a in g.atoms() {
            if !a.is_linear() {
                if let Some(v) = vars.iter().find(|v| a.mentions(**v)) {
                    return Err(SolverError::NonlinearElimination(*v));
                }
            }
        }
    }
    let body = Formula::And(relevant);
    let cols = Columns::of(&body, vars);
    let integer = vec![false; cols.len()];
    let mut search = Search::new(&cols, integer, Mode::Enumerate, budget);
    search.solve(vec![Goal::F(&body, true)], LinearSystem::new(cols.len()), Vec::new());
    if search.exhausted || search.unknown || search.unknown_terms {
        return Err(SolverError::Budget);
    }
    let drop: Vec<usize> = vars.iter().filter_map(|v| cols.index.get(v).copied()).collect();
    let mut pieces = Vec::new();
    for sys in &search.cubes {
        let projected = sys.project_out(&drop).map_err(|_| SolverError::Budget)?;
        if projected.is_trivially_infeasible() {
            continue;
        }
        pieces.push(Formula::And(projected.constraints.iter().map(|c| cols.to_formula(c)).collect()));
    }
    let mut out = keep;
    out.push(Formula::Or(pieces));
    Ok(Formula::And(out).normalize())
}
