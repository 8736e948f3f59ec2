//! Depth-bounded symbolic execution of one action.
//!
//! State variables start as their own symbols, action components and
//! parameters as constants. Exploration is depth first and takes the true
//! branch first. The depth bound counts guard evaluations that actually
//! branch: a guard that folds to a constant (typically a test on an action
//! component) costs nothing.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::dsl::{bool_to_formula, expr_to_term, BoolExpr, Dist, Program, StateBox, Stmt, VarRef, DEFAULT_FUEL};
use crate::formula::{conjoin, negate, Formula, Rel, Term, Var};
use crate::solver::{check_sat, eliminate, SatResult, SolverConfig, SolverError, UnknownPolicy};

/// Path conditions of one action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathConditionSet {
    pub action: usize,
    pub pcs: Vec<Formula>,
    /// Per path condition: whether the path was cut by the depth bound.
    pub truncated: Vec<bool>,
    pub complete: bool,
}

impl PathConditionSet {
    pub fn len(&self) -> usize {
        self.pcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pcs.is_empty()
    }
}

/// Symbolic value of every program slot; `None` until assigned.
#[derive(Clone, Debug)]
pub struct SymbolicStore(Vec<Option<Term>>);

impl SymbolicStore {
    /// State slots map to their symbols, action components and parameters to
    /// their constant values.
    pub fn initial(p: &Program, action: usize) -> Self {
        let mut slots = vec![None; p.slot_names.len()];
        for (i, slot) in slots.iter_mut().enumerate().take(p.state_vars.len()) {
            *slot = Some(Term::Var(Var::State(i as u32)));
        }
        for (i, v) in p.actions[action].values.iter().enumerate() {
            slots[p.action_slot(i)] = Some(Term::Const(v.clone()));
        }
        for (i, (_, v)) in p.params.iter().enumerate() {
            slots[p.param_slot(i)] = Some(Term::Const(v.clone()));
        }
        SymbolicStore(slots)
    }

    pub fn get(&self, v: &VarRef) -> Term {
        self.0[v.slot]
            .clone()
            .unwrap_or_else(|| panic!("read of unassigned '{}' survived validation", v.name))
    }

    pub fn set(&mut self, v: &VarRef, t: Term) {
        self.0[v.slot] = Some(t);
    }

    pub fn guard(&self, b: &BoolExpr) -> Formula {
        bool_to_formula(b, &|v| self.get(v)).normalize()
    }
}

/// One pending path.
#[derive(Clone)]
struct SymState<'a> {
    rest: Vec<&'a Stmt>,
    store: SymbolicStore,
    sample_index: u32,
    path_condition: Vec<Formula>,
    branch_depth: usize,
    /// Iterations of loops whose guard folded to true.
    spins: u64,
}

impl SymState<'_> {
    fn pc(&self) -> Formula {
        Formula::And(self.path_condition.clone()).normalize()
    }
}

/// Explores every path of `p` under action `action`, cutting paths at the
/// first branching guard beyond `depth`.
pub fn sym_execute(p: &Program, action: usize, depth: usize) -> PathConditionSet {
    let mut out = PathConditionSet {
        action,
        pcs: Vec::new(),
        truncated: Vec::new(),
        complete: true,
    };
    let start = SymState {
        rest: vec![&p.body],
        store: SymbolicStore::initial(p, action),
        sample_index: 0,
        path_condition: Vec::new(),
        branch_depth: 0,
        spins: 0,
    };
    let mut work = vec![start];
    while let Some(mut st) = work.pop() {
        loop {
            let Some(s) = st.rest.pop() else {
                out.pcs.push(st.pc());
                out.truncated.push(false);
                break;
            };
            match s {
                Stmt::Skip => {}
                Stmt::Assign(v, e) => {
                    let t = expr_to_term(e, &|r| st.store.get(r));
                    st.store.set(v, t);
                }
                Stmt::Sample(v, dist) => {
                    let y = Term::Var(Var::Sample(st.sample_index));
                    st.sample_index += 1;
                    let (lo, hi) = match dist {
                        Dist::Uniform(lo, hi) => (Term::Const(lo.clone()), Term::Const(hi.clone())),
                        Dist::Bernoulli(_) => (Term::int(0), Term::int(1)),
                    };
                    st.path_condition.push(Formula::compare(lo, Rel::Le, y.clone()));
                    st.path_condition.push(Formula::compare(y.clone(), Rel::Le, hi));
                    match dist {
                        Dist::Uniform(..) => st.store.set(v, y),
                        Dist::Bernoulli(prob) => {
                            let g = Formula::compare(y, Rel::Lt, Term::Const(prob.clone()));
                            let mut t = st.clone();
                            t.store.set(v, Term::int(1));
                            st.store.set(v, Term::int(0));
                            if !fork(&mut out, &mut work, st, t, g, depth) {
                                break;
                            }
                            st = work.pop().expect("fork pushed the true branch");
                        }
                    }
                }
                Stmt::Seq(v) => st.rest.extend(v.iter().rev()),
                Stmt::If(c, then, els) => {
                    let g = st.store.guard(c);
                    match g {
                        Formula::True => st.rest.push(then),
                        Formula::False => st.rest.push(els),
                        g => {
                            let mut t = st.clone();
                            t.rest.push(then);
                            st.rest.push(els);
                            if !fork(&mut out, &mut work, st, t, g, depth) {
                                break;
                            }
                            st = work.pop().expect("fork pushed the true branch");
                        }
                    }
                }
                Stmt::While(c, body) => {
                    let g = st.store.guard(c);
                    match g {
                        Formula::False => {}
                        Formula::True => {
                            st.spins += 1;
                            if st.spins > DEFAULT_FUEL {
                                out.pcs.push(st.pc());
                                out.truncated.push(true);
                                out.complete = false;
                                break;
                            }
                            st.rest.push(s);
                            st.rest.push(body);
                        }
                        g => {
                            let mut t = st.clone();
                            t.rest.push(s);
                            t.rest.push(body);
                            if !fork(&mut out, &mut work, st, t, g, depth) {
                                break;
                            }
                            st = work.pop().expect("fork pushed the true branch");
                        }
                    }
                }
            }
        }
    }
    out
}

/// Splits on `guard`: `t` continues under the guard, `f` under its negation.
/// Pushes both (false first, so the true branch is explored first) and
/// returns true; at the depth bound records the prefix instead and returns
/// false.
fn fork<'a>(
    out: &mut PathConditionSet,
    work: &mut Vec<SymState<'a>>,
    mut f: SymState<'a>,
    mut t: SymState<'a>,
    guard: Formula,
    depth: usize,
) -> bool {
    if f.branch_depth >= depth {
        out.pcs.push(f.pc());
        out.truncated.push(true);
        out.complete = false;
        return false;
    }
    f.branch_depth += 1;
    t.branch_depth += 1;
    f.path_condition.push(negate(&guard));
    t.path_condition.push(guard);
    work.push(f);
    work.push(t);
    true
}

/// [`sym_execute`] for every action, in parallel.
pub fn sym_execute_all(p: &Program, depth: usize) -> Vec<PathConditionSet> {
    (0..p.actions.len())
        .into_par_iter()
        .map(|a| sym_execute(p, a, depth))
        .collect()
}

/// Emptiness inside the box, with undecided answers resolved by the policy.
pub(crate) fn keep(f: &Formula, bx: &StateBox, cfg: &SolverConfig) -> Result<bool, SolverError> {
    let q = Formula::And(vec![bx.formula(), f.clone()]).normalize();
    Ok(match check_sat(&q, cfg)? {
        SatResult::Sat(_) => true,
        SatResult::Unsat => false,
        SatResult::Unknown => cfg.unknown_policy == UnknownPolicy::KeepPart,
    })
}

fn empty_in(f: &Formula, bx: &StateBox, cfg: &SolverConfig) -> Result<bool, SolverError> {
    let q = Formula::And(vec![bx.formula(), f.clone()]).normalize();
    Ok(check_sat(&q, cfg)?.is_unsat())
}

/// Projects the sampling variables out of every path condition, drops the
/// ones empty inside `bx`, and splits overlapping results until the set is
/// pairwise disjoint again. The union is unchanged inside the box.
pub fn project_and_disjointify(
    set: &PathConditionSet,
    bx: &StateBox,
    cfg: &SolverConfig,
) -> Result<PathConditionSet, SolverError> {
    let mut projected = Vec::with_capacity(set.pcs.len());
    let mut had_samples = false;
    for pc in &set.pcs {
        let samples: BTreeSet<Var> = pc.vars().into_iter().filter(|v| v.is_sample()).collect();
        let f = if samples.is_empty() {
            pc.clone()
        } else {
            had_samples = true;
            eliminate(pc, &samples, cfg)?
        };
        projected.push(f);
    }
    let verdicts: Vec<(bool, bool)> = projected
        .par_iter()
        .map(|f| Ok((keep(f, bx, cfg)?, empty_in(f, bx, cfg)?)))
        .collect::<Result<_, SolverError>>()?;
    // A cut path only costs completeness if it can reach a state in the box.
    let complete = set.complete
        || set
            .truncated
            .iter()
            .zip(&verdicts)
            .all(|(cut, (_, empty))| !cut || *empty);
    let mut truncated = Vec::new();
    let projected: Vec<Formula> = projected
        .into_iter()
        .zip(verdicts)
        .zip(&set.truncated)
        .filter_map(|((f, (k, _)), cut)| {
            k.then(|| {
                truncated.push(*cut);
                f
            })
        })
        .collect();
    let pcs = if had_samples {
        let pcs = disjointify(projected, bx, cfg)?;
        // Pieces no longer map to single paths.
        truncated = vec![!complete; pcs.len()];
        pcs
    } else {
        projected
    };
    Ok(PathConditionSet {
        action: set.action,
        truncated,
        pcs,
        complete,
    })
}

/// Incremental Venn split: each new formula is cut against the pieces built
/// so far.
fn disjointify(fs: Vec<Formula>, bx: &StateBox, cfg: &SolverConfig) -> Result<Vec<Formula>, SolverError> {
    let mut out: Vec<Formula> = Vec::new();
    for f in fs {
        let mut rest = Some(f);
        let mut next = Vec::with_capacity(out.len() + 2);
        for g in out {
            let Some(r) = rest.clone() else {
                next.push(g);
                continue;
            };
            let inter = conjoin([g.clone(), r.clone()]);
            if empty_in(&inter, bx, cfg)? {
                next.push(g);
                continue;
            }
            let g_only = conjoin([g.clone(), negate(&r)]);
            if empty_in(&g_only, bx, cfg)? {
                // g lies inside r.
                next.push(g.clone());
            } else {
                if keep(&g_only, bx, cfg)? {
                    next.push(g_only);
                }
                next.push(inter);
            }
            let r_only = conjoin([r, negate(&g)]);
            rest = if empty_in(&r_only, bx, cfg)? { None } else { Some(r_only) };
        }
        if let Some(r) = rest {
            if keep(&r, bx, cfg)? {
                next.push(r);
            }
        }
        out = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
