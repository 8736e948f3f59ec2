//! Coarsest common refinement of the per-action path conditions.
//!
//! [`sympar`] runs the whole pipeline: symbolic execution per action,
//! projection of sampling variables, the cross product of the action sets
//! with empty intersections removed, a complement part when the result does
//! not cover the state box, and one witness per part.

use std::fmt::Write as _;
use std::sync::Arc;

use num_traits::Zero;
use rayon::prelude::*;
use thiserror::Error;

use crate::dsl::{parse_formula, ConcreteState, Program, StateBox};
use crate::formula::{conjoin, disjoin, fmt_rational, negate, EvalError, Formula, StateNames};
use crate::solver::{check_sat, witness, SatResult, SolverConfig, SolverError, UnknownPolicy, Witness};
use crate::symexec::{project_and_disjointify, sym_execute_all, PathConditionSet};
use crate::Rational;

/// Whether a part is known to contain a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emptiness {
    Nonempty,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Part {
    pub id: usize,
    pub formula: Formula,
    pub witness: Option<ConcreteState>,
    /// `(action, index into that action's path conditions)`.
    pub provenance: Vec<(usize, usize)>,
    pub is_complement: bool,
    pub status: Emptiness,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub program: Arc<Program>,
    pub parts: Vec<Part>,
    pub depth: usize,
    pub complete: bool,
    /// Per action, the path conditions after projection and filtering.
    pub action_sets: Vec<PathConditionSet>,
    pub backend: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("search depth must be at least 1")]
    Depth,
    #[error("partition dump line {line}: {message}")]
    Dump { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LocateError {
    #[error("state {0} lies in no part")]
    NoPart(ConcreteState),
    #[error("state {state} lies in parts {ids:?}")]
    Ambiguous { state: ConcreteState, ids: Vec<usize> },
    #[error("state has {got} components, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Lower and upper size bounds implied by the per-action sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SizeBounds {
    pub lower: usize,
    pub upper: u128,
    pub parts: usize,
    pub has_complement: bool,
}

impl SizeBounds {
    pub fn holds(&self) -> bool {
        let extra = u128::from(self.has_complement);
        self.lower <= self.parts && (self.parts as u128) <= self.upper.saturating_add(extra)
    }
}

impl std::fmt::Display for SizeBounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let plus = if self.has_complement { " + 1" } else { "" };
        write!(
            f,
            "max|PC^a| = {} <= {} <= prod|PC^a|{plus} = {}{plus}: {}",
            self.lower,
            self.parts,
            self.upper,
            self.holds()
        )
    }
}

fn in_box(f: &Formula, bx: &StateBox) -> Formula {
    Formula::And(vec![bx.formula(), f.clone()]).normalize()
}

/// Drops top-level conjuncts implied by the box and the remaining ones.
pub fn simplify_in_box(f: &Formula, bx: &StateBox, cfg: &SolverConfig) -> Result<Formula, SolverError> {
    let Formula::And(items) = f else {
        return Ok(f.clone());
    };
    let mut items = items.clone();
    let mut i = 0;
    while i < items.len() {
        let mut others: Vec<Formula> = items.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, g)| g.clone()).collect();
        others.push(negate(&items[i]));
        if check_sat(&in_box(&Formula::And(others), bx), cfg)?.is_unsat() {
            items.remove(i);
        } else {
            i += 1;
        }
    }
    Ok(Formula::And(items).normalize())
}

/// `None` when the candidate should be dropped.
fn filter(f: Formula, bx: &StateBox, cfg: &SolverConfig) -> Result<Option<Formula>, SolverError> {
    let keep = match check_sat(&in_box(&f, bx), cfg)? {
        SatResult::Sat(_) => true,
        SatResult::Unsat => false,
        SatResult::Unknown => cfg.unknown_policy == UnknownPolicy::KeepPart,
    };
    if !keep {
        return Ok(None);
    }
    Ok(Some(simplify_in_box(&f, bx, cfg)?))
}

/// Every nonempty conjunction picking one formula per set, folded in order
/// with empty intersections removed after each step. Provenance lists the
/// chosen index per set.
fn refine(sets: &[Vec<Formula>], bx: &StateBox, cfg: &SolverConfig) -> Result<Vec<(Formula, Vec<usize>)>, SolverError> {
    let mut frontier: Vec<(Formula, Vec<usize>)> = vec![(Formula::True, Vec::new())];
    for set in sets {
        let candidates: Vec<(usize, usize)> = (0..frontier.len())
            .flat_map(|i| (0..set.len()).map(move |j| (i, j)))
            .collect();
        let next: Vec<Option<(Formula, Vec<usize>)>> = candidates
            .par_iter()
            .map(|&(i, j)| {
                let (q, prov) = &frontier[i];
                let conj = conjoin([q.clone(), set[j].clone()]);
                Ok(filter(conj, bx, cfg)?.map(|f| {
                    let mut p = prov.clone();
                    p.push(j);
                    (f, p)
                }))
            })
            .collect::<Result<_, SolverError>>()?;
        frontier = next.into_iter().flatten().collect();
    }
    Ok(frontier)
}

/// Coarsest partition finer than each input partition: all nonempty
/// conjunctions choosing one formula per set.
pub fn coarsest_common_refinement(
    sets: &[Vec<Formula>],
    bx: &StateBox,
    cfg: &SolverConfig,
) -> Result<Vec<Formula>, SolverError> {
    Ok(refine(sets, bx, cfg)?.into_iter().map(|(f, _)| f).collect())
}

/// Partitions the state box of `p` using symbolic execution to depth `k`.
pub fn sympar(p: &Program, k: usize, cfg: &SolverConfig) -> Result<Partition, PartitionError> {
    if k == 0 {
        return Err(PartitionError::Depth);
    }
    let bx = p.state_box();
    let raw = sym_execute_all(p, k);
    let mut action_sets = Vec::with_capacity(raw.len());
    for set in &raw {
        let mut projected = project_and_disjointify(set, &bx, cfg)?;
        projected.pcs = projected
            .pcs
            .par_iter()
            .map(|f| simplify_in_box(f, &bx, cfg))
            .collect::<Result<_, _>>()?;
        action_sets.push(projected);
    }
    let sets: Vec<Vec<Formula>> = action_sets.iter().map(|s| s.pcs.clone()).collect();
    let refined = refine(&sets, &bx, cfg)?;
    let mut candidates: Vec<(Formula, Vec<(usize, usize)>, bool)> = refined
        .into_iter()
        .map(|(f, prov)| (f, prov.into_iter().enumerate().collect(), false))
        .collect();

    let union = disjoin(candidates.iter().map(|(f, _, _)| f.clone()));
    let complement = negate(&union);
    let covered = match check_sat(&in_box(&complement, &bx), cfg)? {
        SatResult::Unsat => Some(true),
        SatResult::Sat(_) => Some(false),
        SatResult::Unknown if cfg.unknown_policy == UnknownPolicy::KeepPart => per_action_cover(&action_sets, &bx, cfg)?,
        SatResult::Unknown => None,
    };
    if covered != Some(true) {
        candidates.push((complement, Vec::new(), true));
    }

    let witnesses: Vec<Witness> = candidates
        .par_iter()
        .map(|(f, _, _)| witness(f, &bx, cfg))
        .collect::<Result<_, _>>()?;
    let parts = candidates
        .into_iter()
        .zip(witnesses)
        .enumerate()
        .map(|(id, ((formula, provenance, is_complement), w))| {
            let (witness, status) = match w {
                Witness::Found(s) => (Some(s), Emptiness::Nonempty),
                Witness::Unsat | Witness::Unknown => (None, Emptiness::Unknown),
            };
            Part {
                id,
                formula,
                witness,
                provenance,
                is_complement,
                status,
            }
        })
        .collect();
    Ok(Partition {
        program: Arc::new(p.clone()),
        parts,
        depth: k,
        complete: action_sets.iter().all(|s| s.complete),
        action_sets,
        backend: cfg.describe(),
    })
}

/// With nothing dropped as undecided, the refinement covers the box exactly
/// when every action set does.
fn per_action_cover(sets: &[PathConditionSet], bx: &StateBox, cfg: &SolverConfig) -> Result<Option<bool>, SolverError> {
    let mut all = true;
    for s in sets {
        let gap = negate(&disjoin(s.pcs.iter().cloned()));
        match check_sat(&in_box(&gap, bx), cfg)? {
            SatResult::Unsat => {}
            SatResult::Sat(_) => return Ok(Some(false)),
            SatResult::Unknown => all = false,
        }
    }
    Ok(all.then_some(true))
}

impl Partition {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn state_box(&self) -> StateBox {
        self.program.state_box()
    }

    pub fn pc_counts(&self) -> Vec<usize> {
        self.action_sets.iter().map(|s| s.len()).collect()
    }

    pub fn has_complement(&self) -> bool {
        self.parts.iter().any(|p| p.is_complement)
    }

    pub fn bounds(&self) -> SizeBounds {
        let counts = self.pc_counts();
        SizeBounds {
            lower: counts.iter().copied().max().unwrap_or(0),
            upper: counts.iter().fold(1u128, |acc, &c| acc.saturating_mul(c as u128)),
            parts: self.len(),
            has_complement: self.has_complement(),
        }
    }

    /// The unique part containing `s`.
    pub fn locate(&self, s: &[Rational]) -> Result<usize, LocateError> {
        let dim = self.program.state_vars.len();
        if s.len() != dim {
            return Err(LocateError::Dimension {
                got: s.len(),
                expected: dim,
            });
        }
        let mut hits = Vec::new();
        for p in &self.parts {
            if p.formula.eval_at(s)? {
                hits.push(p.id);
            }
        }
        match hits.len() {
            1 => Ok(hits[0]),
            0 => Err(LocateError::NoPart(ConcreteState(s.to_vec()))),
            _ => Err(LocateError::Ambiguous {
                state: ConcreteState(s.to_vec()),
                ids: hits,
            }),
        }
    }

    pub fn witnesses(&self) -> Vec<Option<ConcreteState>> {
        self.parts.iter().map(|p| p.witness.clone()).collect()
    }

    /// Versioned text dump; see [`Partition::load`].
    pub fn dump(&self) -> String {
        let p = &self.program;
        let names = p.state_names();
        let sn = StateNames(&names);
        let mut out = String::new();
        out.push_str("sympar-partition v1\n");
        let _ = writeln!(out, "program {}", p.name);
        for s in &p.state_vars {
            let kind = if s.discrete { "int" } else { "real" };
            let _ = writeln!(out, "state {} {kind} {} {}", s.name, fmt_rational(&s.lower), fmt_rational(&s.upper));
        }
        let actions: Vec<&str> = p.actions.iter().map(|a| a.name.as_str()).collect();
        let _ = writeln!(out, "actions {}", actions.join(" "));
        let _ = writeln!(out, "depth {}", self.depth);
        let _ = writeln!(out, "complete {}", self.complete);
        let _ = writeln!(out, "backend {}", self.backend);
        let counts: Vec<String> = self.pc_counts().iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "pc_counts {}", counts.join(" "));
        let _ = writeln!(out, "parts {}", self.len());
        for part in &self.parts {
            let status = match part.status {
                Emptiness::Nonempty => "nonempty",
                Emptiness::Unknown => "unknown",
            };
            let comp = if part.is_complement { " complement" } else { "" };
            let _ = writeln!(out, "part {} {status}{comp}", part.id);
            let _ = writeln!(out, "  formula {}", part.formula.display(&sn));
            match &part.witness {
                Some(w) => {
                    let vals: Vec<String> = w.iter().map(fmt_rational).collect();
                    let _ = writeln!(out, "  witness {}", vals.join(" "));
                }
                None => out.push_str("  witness -\n"),
            }
            if part.provenance.is_empty() {
                out.push_str("  provenance -\n");
            } else {
                let prov: Vec<String> = part
                    .provenance
                    .iter()
                    .map(|(a, i)| format!("{}:{i}", p.actions[*a].name))
                    .collect();
                let _ = writeln!(out, "  provenance {}", prov.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }

    /// Reads a dump written by [`Partition::dump`] for the same program.
    /// Per-action sets are not stored; only their sizes are restored.
    pub fn load(text: &str, program: Arc<Program>) -> Result<Partition, PartitionError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, message: String| PartitionError::Dump { line, message };
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| err(0, format!("unexpected end of dump, expected {what}")))
        };
        let (ln, header) = next("header")?;
        if header != "sympar-partition v1" {
            return Err(err(ln, format!("unsupported header '{header}'")));
        }
        let field = |(ln, line): (usize, &str), key: &str| -> Result<String, PartitionError> {
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                .map(str::to_string)
                .ok_or_else(|| err(ln, format!("expected '{key}'")))
        };
        let name = field(next("program")?, "program")?;
        if name != program.name {
            return Err(err(ln + 1, format!("dump is for program '{name}', not '{}'", program.name)));
        }
        for s in &program.state_vars {
            let l = next("state")?;
            let decl = field(l, "state")?;
            if decl.split_whitespace().next() != Some(s.name.as_str()) {
                return Err(err(l.0, format!("state variable mismatch, expected '{}'", s.name)));
            }
        }
        let l = next("actions")?;
        let actions: Vec<String> = field(l, "actions")?.split_whitespace().map(str::to_string).collect();
        let expected: Vec<String> = program.actions.iter().map(|a| a.name.clone()).collect();
        if actions != expected {
            return Err(err(l.0, "action list does not match the program".into()));
        }
        let l = next("depth")?;
        let depth: usize = field(l, "depth")?.parse().map_err(|_| err(l.0, "bad depth".into()))?;
        let l = next("complete")?;
        let complete: bool = field(l, "complete")?.parse().map_err(|_| err(l.0, "bad flag".into()))?;
        let backend = field(next("backend")?, "backend")?;
        let l = next("pc_counts")?;
        let counts: Vec<usize> = field(l, "pc_counts")?
            .split_whitespace()
            .map(|c| c.parse().map_err(|_| err(l.0, format!("bad count '{c}'"))))
            .collect::<Result<_, _>>()?;
        if counts.len() != program.actions.len() {
            return Err(err(l.0, "one count per action expected".into()));
        }
        let l = next("parts")?;
        let n: usize = field(l, "parts")?.parse().map_err(|_| err(l.0, "bad part count".into()))?;
        let names = program.state_names();
        let mut parts = Vec::with_capacity(n);
        for id in 0..n {
            let l = next("part")?;
            let head = field(l, "part")?;
            let words: Vec<&str> = head.split_whitespace().collect();
            if words.first().and_then(|w| w.parse::<usize>().ok()) != Some(id) {
                return Err(err(l.0, format!("expected part {id}")));
            }
            let status = match words.get(1) {
                Some(&"nonempty") => Emptiness::Nonempty,
                Some(&"unknown") => Emptiness::Unknown,
                _ => return Err(err(l.0, "missing part status".into())),
            };
            let is_complement = words.get(2) == Some(&"complement");
            let l = next("formula")?;
            let text = field(l, "formula")?;
            let formula = parse_formula(&text, &names).map_err(|e| err(l.0, e.to_string()))?;
            let l = next("witness")?;
            let wtext = field(l, "witness")?;
            let witness = if wtext == "-" {
                None
            } else {
                let vals = wtext
                    .split_whitespace()
                    .map(|v| parse_rational(v).ok_or_else(|| err(l.0, format!("bad value '{v}'"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if vals.len() != names.len() {
                    return Err(err(l.0, "witness has the wrong dimension".into()));
                }
                Some(ConcreteState(vals))
            };
            let l = next("provenance")?;
            let ptext = field(l, "provenance")?;
            let mut provenance = Vec::new();
            if ptext != "-" {
                for item in ptext.split_whitespace() {
                    let (a, i) = item.split_once(':').ok_or_else(|| err(l.0, format!("bad provenance '{item}'")))?;
                    let a = program
                        .action_index(a)
                        .ok_or_else(|| err(l.0, format!("unknown action '{a}'")))?;
                    let i: usize = i.parse().map_err(|_| err(l.0, format!("bad provenance '{item}'")))?;
                    provenance.push((a, i));
                }
            }
            parts.push(Part {
                id,
                formula,
                witness,
                provenance,
                is_complement,
                status,
            });
        }
        let l = next("end")?;
        if l.1 != "end" {
            return Err(err(l.0, "expected 'end'".into()));
        }
        let action_sets = counts
            .iter()
            .enumerate()
            .map(|(a, &c)| PathConditionSet {
                action: a,
                pcs: vec![Formula::True; c],
                truncated: vec![false; c],
                complete,
            })
            .collect();
        Ok(Partition {
            program,
            parts,
            depth,
            complete,
            action_sets,
            backend,
        })
    }

    /// Part id at the center of each cell of a `width` x `height` grid over
    /// the first two state dimensions (row 0 at the top). Other dimensions
    /// are fixed at the middle of their range.
    pub fn raster(&self, width: usize, height: usize) -> Vec<Vec<Option<usize>>> {
        let bx = self.state_box();
        let mid: Vec<Rational> = bx
            .lower
            .iter()
            .zip(&bx.upper)
            .map(|(l, u)| (l + u) / Rational::from_integer(2.into()))
            .collect();
        let coord = |d: usize, i: usize, n: usize| {
            let frac = Rational::new((2 * i + 1).into(), (2 * n).into());
            &bx.lower[d] + (&bx.upper[d] - &bx.lower[d]) * frac
        };
        (0..height)
            .into_par_iter()
            .map(|row| {
                (0..width)
                    .map(|col| {
                        let mut s = mid.clone();
                        if !s.is_empty() {
                            s[0] = coord(0, col, width);
                        }
                        if s.len() > 1 {
                            s[1] = coord(1, height - 1 - row, height);
                        }
                        self.locate(&s).ok()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Plain (ASCII) PPM image of a raster; cells without a part are black.
pub fn raster_to_ppm(grid: &[Vec<Option<usize>>]) -> String {
    let height = grid.len();
    let width = grid.first().map_or(0, Vec::len);
    let mut out = format!("P3\n{width} {height}\n255\n");
    for row in grid {
        let cells: Vec<String> = row
            .iter()
            .map(|c| {
                let (r, g, b) = c.map_or((0, 0, 0), color);
                format!("{r} {g} {b}")
            })
            .collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

fn color(id: usize) -> (u8, u8, u8) {
    // Golden-ratio hue steps keep neighbouring ids apart.
    let h = (id as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let s = |v: f64| (55.0 + 200.0 * v) as u8;
    (s(r), s(g), s(b))
}

/// Parses `n` or `n/d` with an optional leading minus.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: num_bigint::BigInt = num.parse().ok()?;
    let d: num_bigint::BigInt = den.parse().ok()?;
    (!d.is_zero()).then(|| Rational::new(n, d))
}

#[cfg(test)]
mod tests;
