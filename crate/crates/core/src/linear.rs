//! Conjunctions of linear constraints and Fourier–Motzkin elimination.
//!
//! The system is generic over the coefficient field. Exact arithmetic
//! ([`crate::Rational`]) is what the partitioner uses; `f64` is supported for
//! quick experiments but its answers near boundaries are not trustworthy.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Num, Signed, Zero};

use crate::formula::Rel;

/// Scalar field usable by [`LinearSystem`].
pub trait Field: Clone + Debug + PartialOrd + Num + Signed + Send + Sync {
    fn floor(&self) -> Self;
    fn ceil(&self) -> Self;
    fn is_integral(&self) -> bool {
        self.floor() == *self
    }
    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }
}

impl<I> Field for Ratio<I>
where
    I: Clone + Debug + num_integer::Integer + Signed + Send + Sync,
{
    fn floor(&self) -> Self {
        Ratio::floor(self)
    }
    fn ceil(&self) -> Self {
        Ratio::ceil(self)
    }
}

impl Field for f64 {
    fn floor(&self) -> Self {
        f64::floor(*self)
    }
    fn ceil(&self) -> Self {
        f64::ceil(*self)
    }
}

/// `coeffs . x + constant REL 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub constant: T,
    pub rel: Rel,
}

impl<T: Field> Constraint<T> {
    pub fn new(coeffs: Vec<T>, constant: T, rel: Rel) -> Self {
        Constraint {
            coeffs,
            constant,
            rel,
        }
    }

    fn is_trivial(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    /// Truth value of a constraint without variables.
    fn constant_holds(&self) -> bool {
        match self.rel {
            Rel::Lt => self.constant.is_negative(),
            Rel::Le => !self.constant.is_positive(),
            Rel::Eq => self.constant.is_zero(),
        }
    }

    /// Scale so the first nonzero coefficient has magnitude one; equalities
    /// also get a positive leading sign.
    fn normalized(mut self) -> Self {
        if let Some(lead) = self.coeffs.iter().find(|c| !c.is_zero()).cloned() {
            let mut k = T::one() / lead.abs();
            if self.rel == Rel::Eq && lead.is_negative() {
                k = -k;
            }
            for c in &mut self.coeffs {
                *c = c.clone() * k.clone();
            }
            self.constant = self.constant * k;
        }
        self
    }

    pub fn holds_at(&self, x: &[T]) -> bool {
        let mut acc = self.constant.clone();
        for (c, v) in self.coeffs.iter().zip(x) {
            acc = acc + c.clone() * v.clone();
        }
        match self.rel {
            Rel::Lt => acc.is_negative(),
            Rel::Le => !acc.is_positive(),
            Rel::Eq => acc.is_zero(),
        }
    }
}

/// Result of running elimination out of budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blowup;

/// Conjunction of linear constraints over `nvars` variables (dense columns).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem<T> {
    pub nvars: usize,
    pub constraints: Vec<Constraint<T>>,
    /// Set once a constant constraint evaluated to false.
    infeasible: bool,
}

/// Constraint count above which elimination gives up.
pub const MAX_CONSTRAINTS: usize = 4096;

impl<T: Field> LinearSystem<T> {
    pub fn new(nvars: usize) -> Self {
        LinearSystem {
            nvars,
            constraints: Vec::new(),
            infeasible: false,
        }
    }

    pub fn push(&mut self, c: Constraint<T>) {
        debug_assert_eq!(c.coeffs.len(), self.nvars);
        if self.infeasible {
            return;
        }
        if c.is_trivial() {
            if !c.constant_holds() {
                self.infeasible = true;
                self.constraints.clear();
            }
            return;
        }
        let c = c.normalized();
        // Same left-hand side: keep the tighter one.
        for existing in &mut self.constraints {
            if existing.coeffs != c.coeffs {
                continue;
            }
            match (existing.rel, c.rel) {
                (Rel::Eq, Rel::Eq) => {
                    if existing.constant != c.constant {
                        self.infeasible = true;
                        self.constraints.clear();
                    }
                    return;
                }
                (Rel::Eq, _) | (_, Rel::Eq) => continue,
                _ => {
                    // a.x + k REL 0 : a larger constant is tighter.
                    if c.constant > existing.constant
                        || (c.constant == existing.constant && c.rel == Rel::Lt)
                    {
                        *existing = c;
                    }
                    return;
                }
            }
        }
        self.constraints.push(c);
    }

    pub fn is_trivially_infeasible(&self) -> bool {
        self.infeasible
    }

    pub fn holds_at(&self, x: &[T]) -> bool {
        !self.infeasible && self.constraints.iter().all(|c| c.holds_at(x))
    }

    fn mentions(&self, var: usize) -> bool {
        self.constraints.iter().any(|c| !c.coeffs[var].is_zero())
    }

    /// Exact projection that removes `var` (the column stays, with zero
    /// coefficients everywhere).
    pub fn eliminate(&self, var: usize) -> Result<LinearSystem<T>, Blowup> {
        let mut out = LinearSystem::new(self.nvars);
        if self.infeasible {
            out.infeasible = true;
            return Ok(out);
        }
        // An equality lets us substitute instead of combining pairs.
        if let Some(pivot) = self
            .constraints
            .iter()
            .find(|c| c.rel == Rel::Eq && !c.coeffs[var].is_zero())
        {
            for c in &self.constraints {
                if std::ptr::eq(c, pivot) {
                    continue;
                }
                if c.coeffs[var].is_zero() {
                    out.push(c.clone());
                    continue;
                }
                // c - (c_v / p_v) * pivot
                let k = c.coeffs[var].clone() / pivot.coeffs[var].clone();
                let coeffs = c
                    .coeffs
                    .iter()
                    .zip(&pivot.coeffs)
                    .enumerate()
                    .map(|(j, (a, b))| {
                        if j == var {
                            T::zero()
                        } else {
                            a.clone() - k.clone() * b.clone()
                        }
                    })
                    .collect();
                let constant = c.constant.clone() - k * pivot.constant.clone();
                out.push(Constraint::new(coeffs, constant, c.rel));
            }
            return Ok(out);
        }
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for c in &self.constraints {
            let a = &c.coeffs[var];
            if a.is_zero() {
                out.push(c.clone());
            } else if a.is_negative() {
                lower.push(c);
            } else {
                upper.push(c);
            }
        }
        if lower.len() * upper.len() + out.constraints.len() > MAX_CONSTRAINTS {
            return Err(Blowup);
        }
        for l in &lower {
            for u in &upper {
                // l: a x + r REL 0 with a<0; u: b x + s REL 0 with b>0.
                let a = -l.coeffs[var].clone();
                let b = u.coeffs[var].clone();
                let coeffs = l
                    .coeffs
                    .iter()
                    .zip(&u.coeffs)
                    .enumerate()
                    .map(|(j, (lc, uc))| {
                        if j == var {
                            T::zero()
                        } else {
                            b.clone() * lc.clone() + a.clone() * uc.clone()
                        }
                    })
                    .collect();
                let constant = b.clone() * l.constant.clone() + a.clone() * u.constant.clone();
                let rel = if l.rel == Rel::Lt || u.rel == Rel::Lt {
                    Rel::Lt
                } else {
                    Rel::Le
                };
                out.push(Constraint::new(coeffs, constant, rel));
                if out.infeasible {
                    return Ok(out);
                }
            }
        }
        if out.constraints.len() > MAX_CONSTRAINTS {
            return Err(Blowup);
        }
        Ok(out)
    }

    /// Eliminates the given columns one by one.
    pub fn project_out(&self, vars: &[usize]) -> Result<LinearSystem<T>, Blowup> {
        let mut sys = self.clone();
        for &v in vars {
            sys = sys.eliminate(v)?;
        }
        Ok(sys)
    }

    pub fn is_feasible(&self) -> Result<bool, Blowup> {
        let mut sys = self.clone();
        loop {
            if sys.infeasible {
                return Ok(false);
            }
            if sys.constraints.is_empty() {
                return Ok(true);
            }
            // Cheapest column first.
            let var = (0..sys.nvars)
                .filter(|&v| sys.mentions(v))
                .min_by_key(|&v| {
                    let mut lo = 0usize;
                    let mut hi = 0usize;
                    let mut eq = false;
                    for c in &sys.constraints {
                        let a = &c.coeffs[v];
                        if c.rel == Rel::Eq && !a.is_zero() {
                            eq = true;
                        }
                        if a.is_negative() {
                            lo += 1;
                        } else if a.is_positive() {
                            hi += 1;
                        }
                    }
                    if eq {
                        0
                    } else {
                        lo * hi + 1
                    }
                })
                .expect("nonempty system mentions a variable");
            sys = sys.eliminate(var)?;
        }
    }

    /// A point satisfying the system, assigning variables in `order`.
    ///
    /// Each variable takes the midpoint of its feasible interval given the
    /// earlier choices (an endpoint when the interval is a single point or
    /// half-unbounded). Variables flagged in `integer` take the smallest
    /// feasible integer, with bounded backtracking when a later variable
    /// runs out of room.
    pub fn find_point(&self, order: &[usize], integer: &[bool]) -> Result<Option<Vec<T>>, Blowup> {
        let Some(stages) = self.stages(order)? else {
            return Ok(None);
        };
        let mut point = vec![T::zero(); self.nvars];
        let mut budget = 4096usize;
        let found = assign(&stages, order, integer, 0, &mut point, &mut budget);
        Ok(found.then_some(point))
    }

    /// A random point of the system (real variables only). `draw` returns
    /// values in `[0, 1)`; each variable is placed at that fraction of its
    /// feasible interval.
    pub fn sample_point(&self, order: &[usize], draw: &mut dyn FnMut() -> T) -> Result<Option<Vec<T>>, Blowup> {
        let Some(stages) = self.stages(order)? else {
            return Ok(None);
        };
        let mut point = vec![T::zero(); self.nvars];
        let ten = (0..10).fold(T::zero(), |acc, _| acc + T::one());
        for (depth, &var) in order.iter().enumerate() {
            let iv = interval_for(&stages[depth], var, &point);
            if iv.empty {
                return Ok(None);
            }
            let u = draw();
            let v = match (&iv.fixed, &iv.lo, &iv.hi) {
                (Some(f), _, _) => f.clone(),
                (None, Some((lo, _)), Some((hi, _))) => lo.clone() + (hi.clone() - lo.clone()) * u,
                (None, Some((lo, _)), None) => lo.clone() + ten.clone() * u,
                (None, None, Some((hi, _))) => hi.clone() - ten.clone() * u,
                (None, None, None) => (u - T::half()) * ten.clone(),
            };
            point[var] = if iv.admits(&v) {
                v
            } else {
                match iv.real_choice() {
                    Some(c) => c,
                    None => return Ok(None),
                }
            };
        }
        Ok(Some(point))
    }

    /// `stages[i]` mentions only `order[..=i]`. `None` when infeasible.
    fn stages(&self, order: &[usize]) -> Result<Option<Vec<LinearSystem<T>>>, Blowup> {
        if self.infeasible {
            return Ok(None);
        }
        let mut stages = vec![self.clone()];
        for &v in order.iter().skip(1).rev() {
            let next = stages.last().unwrap().eliminate(v)?;
            stages.push(next);
        }
        stages.reverse();
        if stages[0].infeasible || !stages[0].constant_part_holds() {
            return Ok(None);
        }
        Ok(Some(stages))
    }

    fn constant_part_holds(&self) -> bool {
        self.constraints
            .iter()
            .filter(|c| c.is_trivial())
            .all(|c| c.constant_holds())
    }
}

/// Bounds on one variable after substituting the ones already fixed.
struct Interval<T> {
    lo: Option<(T, bool)>,
    hi: Option<(T, bool)>,
    fixed: Option<T>,
    empty: bool,
}

impl<T: Field> Interval<T> {
    fn new() -> Self {
        Interval {
            lo: None,
            hi: None,
            fixed: None,
            empty: false,
        }
    }

    fn raise_lo(&mut self, v: T, strict: bool) {
        let replace = match &self.lo {
            None => true,
            Some((cur, cur_strict)) => v > *cur || (v == *cur && strict && !cur_strict),
        };
        if replace {
            self.lo = Some((v, strict));
        }
    }

    fn lower_hi(&mut self, v: T, strict: bool) {
        let replace = match &self.hi {
            None => true,
            Some((cur, cur_strict)) => v < *cur || (v == *cur && strict && !cur_strict),
        };
        if replace {
            self.hi = Some((v, strict));
        }
    }

    fn admits(&self, v: &T) -> bool {
        if let Some(f) = &self.fixed {
            if f != v {
                return false;
            }
        }
        if let Some((lo, strict)) = &self.lo {
            if v < lo || (*strict && v == lo) {
                return false;
            }
        }
        if let Some((hi, strict)) = &self.hi {
            if v > hi || (*strict && v == hi) {
                return false;
            }
        }
        true
    }

    fn real_choice(&self) -> Option<T> {
        if self.empty {
            return None;
        }
        let v = if let Some(f) = &self.fixed {
            f.clone()
        } else {
            match (&self.lo, &self.hi) {
                (Some((lo, _)), Some((hi, _))) => {
                    if lo == hi {
                        lo.clone()
                    } else {
                        (lo.clone() + hi.clone()) * T::half()
                    }
                }
                (Some((lo, strict)), None) => {
                    if *strict {
                        lo.clone() + T::one()
                    } else {
                        lo.clone()
                    }
                }
                (None, Some((hi, strict))) => {
                    if *strict {
                        hi.clone() - T::one()
                    } else {
                        hi.clone()
                    }
                }
                (None, None) => T::zero(),
            }
        };
        self.admits(&v).then_some(v)
    }

    /// Integer candidates in ascending order, at most `limit` of them.
    fn integer_choices(&self, limit: usize) -> Vec<T> {
        if self.empty {
            return Vec::new();
        }
        if let Some(f) = &self.fixed {
            return if f.is_integral() && self.admits(f) {
                vec![f.clone()]
            } else {
                Vec::new()
            };
        }
        let start = match (&self.lo, &self.hi) {
            (Some((lo, _)), _) => lo.ceil(),
            (None, Some((hi, _))) => hi.floor(),
            (None, None) => T::zero(),
        };
        let mut out = Vec::new();
        let mut v = start;
        // Skip a strict lower endpoint.
        if !self.admits(&v) && self.lo.as_ref().is_some_and(|(lo, _)| v == *lo) {
            v = v + T::one();
        }
        while out.len() < limit && self.admits(&v) {
            out.push(v.clone());
            v = v + T::one();
        }
        out
    }
}

fn interval_for<T: Field>(sys: &LinearSystem<T>, var: usize, point: &[T]) -> Interval<T> {
    let mut iv = Interval::new();
    for c in &sys.constraints {
        let a = c.coeffs[var].clone();
        let mut rest = c.constant.clone();
        for (j, cj) in c.coeffs.iter().enumerate() {
            if j != var && !cj.is_zero() {
                rest = rest + cj.clone() * point[j].clone();
            }
        }
        if a.is_zero() {
            let ok = match c.rel {
                Rel::Lt => rest.is_negative(),
                Rel::Le => !rest.is_positive(),
                Rel::Eq => rest.is_zero(),
            };
            if !ok {
                iv.empty = true;
            }
            continue;
        }
        // a x + rest REL 0  =>  x REL' -rest/a
        let bound = -rest / a.clone();
        match c.rel {
            Rel::Eq => match &iv.fixed {
                Some(f) if *f != bound => iv.empty = true,
                _ => iv.fixed = Some(bound),
            },
            rel => {
                let strict = rel == Rel::Lt;
                if a.is_positive() {
                    iv.lower_hi(bound, strict);
                } else {
                    iv.raise_lo(bound, strict);
                }
            }
        }
    }
    if let (Some((lo, ls)), Some((hi, hs))) = (&iv.lo, &iv.hi) {
        if lo > hi || (lo == hi && (*ls || *hs)) {
            iv.empty = true;
        }
    }
    iv
}

fn assign<T: Field>(
    stages: &[LinearSystem<T>],
    order: &[usize],
    integer: &[bool],
    depth: usize,
    point: &mut Vec<T>,
    budget: &mut usize,
) -> bool {
    if depth == order.len() {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let var = order[depth];
    let iv = interval_for(&stages[depth], var, point);
    let is_int = integer.get(var).copied().unwrap_or(false);
    let candidates = if is_int {
        iv.integer_choices(64)
    } else {
        iv.real_choice().into_iter().collect()
    };
    for v in candidates {
        point[var] = v;
        if assign(stages, order, integer, depth + 1, point, budget) {
            return true;
        }
    }
    point[var] = T::zero();
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn c(coeffs: &[i64], k: i64, rel: Rel) -> Constraint<Rational> {
        Constraint::new(coeffs.iter().map(|&a| q(a, 1)).collect(), q(k, 1), rel)
    }

    #[test]
    fn strict_pair_is_infeasible() {
        // x > 10 and x <= 10
        let mut s = LinearSystem::new(1);
        s.push(c(&[-1], 10, Rel::Lt));
        s.push(c(&[1], -10, Rel::Le));
        assert_eq!(s.is_feasible(), Ok(false));
    }

    #[test]
    fn projection_of_sandwich() {
        // x < y, y < 5  =>  x < 5
        let mut s = LinearSystem::new(2);
        s.push(c(&[1, -1], 0, Rel::Lt));
        s.push(c(&[0, 1], -5, Rel::Lt));
        let p = s.eliminate(1).unwrap();
        assert_eq!(p.constraints, vec![c(&[1, 0], -5, Rel::Lt)]);
    }

    #[test]
    fn equality_substitution() {
        // 0 <= y <= 1, x == y  =>  0 <= x <= 1
        let mut s = LinearSystem::new(2);
        s.push(c(&[0, -1], 0, Rel::Le));
        s.push(c(&[0, 1], -1, Rel::Le));
        s.push(c(&[1, -1], 0, Rel::Eq));
        let p = s.eliminate(1).unwrap();
        assert!(p.holds_at(&[q(0, 1), q(0, 1)]));
        assert!(p.holds_at(&[q(1, 1), q(0, 1)]));
        assert!(!p.holds_at(&[q(11, 10), q(0, 1)]));
        assert!(!p.holds_at(&[q(-1, 10), q(0, 1)]));
    }

    #[test]
    fn narrow_interval_gets_interior_point() {
        // 5 <= x < 5.001
        let mut s = LinearSystem::new(1);
        s.push(c(&[-1], 5, Rel::Le));
        s.push(Constraint::new(vec![q(1, 1)], q(-5001, 1000), Rel::Lt));
        let p = s.find_point(&[0], &[false]).unwrap().unwrap();
        assert!(s.holds_at(&p));
    }

    #[test]
    fn integer_point_with_backtracking() {
        // 2x + 2y == 5 has no integer point; x + y == 3, x >= 0, y >= 0, 2y >= 3 has.
        let mut s = LinearSystem::new(2);
        s.push(c(&[2, 2], -5, Rel::Eq));
        assert_eq!(s.find_point(&[0, 1], &[true, true]).unwrap(), None);

        let mut s = LinearSystem::new(2);
        s.push(c(&[1, 1], -3, Rel::Eq));
        s.push(c(&[-1, 0], 0, Rel::Le));
        s.push(c(&[0, -2], 3, Rel::Le));
        let p = s.find_point(&[0, 1], &[true, true]).unwrap().unwrap();
        assert_eq!(p, vec![q(0, 1), q(3, 1)]);
    }

    #[test]
    fn works_over_floats() {
        let mut s: LinearSystem<f64> = LinearSystem::new(2);
        s.push(Constraint::new(vec![1.0, 1.0], -1.0, Rel::Le));
        s.push(Constraint::new(vec![-1.0, 0.0], 0.0, Rel::Lt));
        s.push(Constraint::new(vec![0.0, -1.0], 0.0, Rel::Lt));
        assert_eq!(s.is_feasible(), Ok(true));
        let p = s.find_point(&[0, 1], &[false, false]).unwrap().unwrap();
        assert!(s.holds_at(&p));
    }
}
