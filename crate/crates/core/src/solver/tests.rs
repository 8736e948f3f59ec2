use std::collections::BTreeSet;

use super::*;
use crate::dsl::parse_formula;
use crate::formula::{Rel, Term};

fn names() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

fn f(text: &str) -> Formula {
    parse_formula(text, &names()).unwrap()
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn cfg() -> SolverConfig {
    SolverConfig::internal()
}

fn x() -> Term {
    Term::Var(Var::State(0))
}

fn y0() -> Term {
    Term::Var(Var::Sample(0))
}

#[test]
fn strict_and_nonstrict_bounds_conflict() {
    assert_eq!(check_sat(&f("x > 10 and x <= 10"), &cfg()).unwrap(), SatResult::Unsat);
}

#[test]
fn model_satisfies_formula() {
    let g = f("x >= 0 and x < 1");
    let SatResult::Sat(m) = check_sat(&g, &cfg()).unwrap() else {
        panic!("expected sat")
    };
    assert_eq!(g.eval(&m), Ok(true));
}

#[test]
fn disjunction_and_disequality() {
    let g = f("(x < 0 or x > 3) and x != 5 and x >= 4 and x <= 5");
    let SatResult::Sat(m) = check_sat(&g, &cfg()).unwrap() else {
        panic!("expected sat")
    };
    assert_eq!(g.eval(&m), Ok(true));
    assert!(check_sat(&f("x == 2 and x != 2"), &cfg()).unwrap().is_unsat());
}

#[test]
fn constants_short_circuit() {
    assert!(check_sat(&Formula::True, &cfg()).unwrap().is_sat());
    assert!(check_sat(&Formula::False, &cfg()).unwrap().is_unsat());
}

#[test]
fn eliminate_sandwiched_variable() {
    // exists y. x < y and y < 5
    let g = Formula::And(vec![
        Formula::compare(x(), Rel::Lt, y0()),
        Formula::compare(y0(), Rel::Lt, Term::int(5)),
    ]);
    let vars: BTreeSet<Var> = [Var::Sample(0)].into();
    let p = eliminate(&g, &vars, &cfg()).unwrap();
    assert_eq!(p, f("x < 5"));
}

#[test]
fn eliminate_through_equality() {
    // exists y. 0 <= y <= 1 and x == y
    let g = Formula::And(vec![
        Formula::compare(Term::int(0), Rel::Le, y0()),
        Formula::compare(y0(), Rel::Le, Term::int(1)),
        Formula::compare(x(), Rel::Eq, y0()),
    ]);
    let vars: BTreeSet<Var> = [Var::Sample(0)].into();
    let p = eliminate(&g, &vars, &cfg()).unwrap();
    for (v, expect) in [(q(0, 1), true), (q(1, 1), true), (q(1, 2), true), (q(-1, 10), false), (q(11, 10), false)] {
        assert_eq!(p.eval_at(&[v]), Ok(expect));
    }
    assert!(!p.vars().contains(&Var::Sample(0)));
}

#[test]
fn eliminate_over_disjunction() {
    // exists y in [0,1]. (x + y < 1 or x - y > 4)  ==  x < 1 or x > 4
    let g = Formula::And(vec![
        Formula::compare(Term::int(0), Rel::Le, y0()),
        Formula::compare(y0(), Rel::Le, Term::int(1)),
        Formula::Or(vec![
            Formula::compare(Term::add(x(), y0()), Rel::Lt, Term::int(1)),
            Formula::compare(Term::int(4), Rel::Lt, Term::sub(x(), y0())),
        ]),
    ]);
    let vars: BTreeSet<Var> = [Var::Sample(0)].into();
    let p = eliminate(&g, &vars, &cfg()).unwrap();
    for (v, expect) in [(q(0, 1), true), (q(1, 1), false), (q(4, 1), false), (q(9, 2), true)] {
        assert_eq!(p.eval_at(std::slice::from_ref(&v)), Ok(expect), "at {v}");
    }
}

#[test]
fn eliminate_rejects_nonlinear_sample() {
    let g = Formula::compare(Term::mul(x(), y0()), Rel::Lt, Term::int(1));
    let vars: BTreeSet<Var> = [Var::Sample(0)].into();
    assert_eq!(
        eliminate(&g, &vars, &cfg()),
        Err(SolverError::NonlinearElimination(Var::Sample(0)))
    );
}

#[test]
fn eliminate_keeps_unrelated_conjuncts() {
    let g = Formula::And(vec![f("x < 3"), Formula::compare(y0(), Rel::Lt, x())]);
    let vars: BTreeSet<Var> = [Var::Sample(0)].into();
    assert_eq!(eliminate(&g, &vars, &cfg()).unwrap(), f("x < 3"));
}

fn unit_box() -> StateBox {
    StateBox {
        lower: vec![q(0, 1), q(0, 1)],
        upper: vec![q(10, 1), q(10, 1)],
        integer: vec![false, false],
    }
}

#[test]
fn witness_of_narrow_part() {
    let g = f("x >= 5 and x < 5.001");
    let Witness::Found(p) = witness(&g, &unit_box(), &cfg()).unwrap() else {
        panic!("expected a witness")
    };
    assert!(p[0] >= q(5, 1) && p[0] < q(5001, 1000));
    assert!(unit_box().contains(&p));
}

#[test]
fn witness_of_unsat_is_none() {
    assert_eq!(witness(&f("x > 11"), &unit_box(), &cfg()).unwrap(), Witness::Unsat);
}

#[test]
fn witness_is_deterministic() {
    let g = f("x + y > 3 and x < 7 or y == 2");
    let a = witness(&g, &unit_box(), &cfg()).unwrap();
    let b = witness(&g, &unit_box(), &cfg()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn integer_witness_skips_fractional_region() {
    let mut bx = unit_box();
    bx.integer = vec![true, true];
    // First branch has no integer point; second does.
    let g = f("(x > 2 and x < 3) or (x > 6 and y == 4)");
    let Witness::Found(p) = witness(&g, &bx, &cfg()).unwrap() else {
        panic!("expected a witness")
    };
    assert_eq!(p.0, vec![q(7, 1), q(4, 1)]);
    let g = f("x > 2 and x < 3");
    assert_eq!(witness(&g, &bx, &cfg()).unwrap(), Witness::Unsat);
}

#[test]
fn nonlinear_atoms() {
    let sat = f("x * x < 2 and x > 1");
    let SatResult::Sat(m) = check_sat(&sat, &cfg()).unwrap() else {
        panic!("expected sat")
    };
    assert_eq!(sat.eval(&m), Ok(true));
    // The linear relaxation is already infeasible.
    assert!(check_sat(&f("x * y < 2 and x > 1 and x < 0"), &cfg()).unwrap().is_unsat());
    // Sampling cannot refute, so this stays undecided.
    assert_eq!(
        check_sat(&f("x * x < 0 and x > -1 and x < 1"), &cfg()).unwrap(),
        SatResult::Unknown
    );
    let trig = f("cos(x) > 0.5 and x >= 0 and x <= 3");
    assert!(check_sat(&trig, &cfg()).unwrap().is_sat());
}

#[test]
fn budget_exhaustion_is_unknown() {
    let mut c = cfg();
    c.cube_budget = 3;
    let g = f("(x < 1 or x > 2) and (y < 1 or y > 2) and (x + y == 1.5 or x + y == 10)");
    let g = Formula::And(vec![g, f("x > 5 and x < 4")]);
    // Budget runs out before the contradiction is reached only if it is
    // checked late; the result must never be a wrong SAT.
    assert_ne!(check_sat(&g, &c).unwrap().label(), "sat");
    let hard = f("(x < 1 or x > 2) and (y < 1 or y > 2) and (x < 3 or y < 3) and x + y > 100");
    assert_eq!(check_sat(&hard, &c).unwrap(), SatResult::Unknown);
}

#[test]
fn config_validation() {
    assert!(SolverConfig::external("z3 -in", 0).is_err());
    assert!(SolverConfig::external("  ", 100).is_err());
    let c = SolverConfig::external("z3 -in -smt2", 100).unwrap();
    assert_eq!(c.describe(), "external(z3 -in -smt2; 100 ms)");
}
