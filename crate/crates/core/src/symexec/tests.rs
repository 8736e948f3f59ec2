use super::*;
use crate::dsl::parse;
use crate::dsl::parse_formula;
use crate::Rational;

fn program(body: &str) -> Program {
    let src = format!(
        "env t\nparam n = 10\nstate x real in [0, 10]\naction_vars d\naction a = (1)\naction b = (2)\n\
         body\n{body}\n  r = 0\n  fin = 0\nend\nnext (x)\nreward r\ndone fin\n"
    );
    parse(&src).unwrap()
}

fn names() -> Vec<String> {
    vec!["x".into()]
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

#[test]
fn single_branch_gives_dual_conditions() {
    let p = program("  if x < 5:\n    x = 0\n  else:\n    x = 1\n  end");
    let set = sym_execute(&p, 0, 4);
    assert!(set.complete);
    assert_eq!(set.pcs, vec![parse_formula("x < 5", &names()).unwrap(), parse_formula("not (x < 5)", &names()).unwrap()]);
}

#[test]
fn sampling_allocates_fresh_symbol_with_support() {
    let p = program("  y ~ uniform(0, 1)\n  if x + y < 1:\n    x = 0\n  end");
    let set = sym_execute(&p, 0, 4);
    assert_eq!(set.pcs.len(), 2);
    let y = Term::Var(Var::Sample(0));
    let x = Term::Var(Var::State(0));
    let support = vec![
        Formula::compare(Term::int(0), Rel::Le, y.clone()),
        Formula::compare(y.clone(), Rel::Le, Term::int(1)),
    ];
    let guard = Formula::compare(Term::add(x, y), Rel::Lt, Term::int(1));
    let mut t = support.clone();
    t.push(guard.clone());
    let mut f = support;
    f.push(negate(&guard));
    assert_eq!(set.pcs[0], conjoin(t));
    assert_eq!(set.pcs[1], conjoin(f));
}

#[test]
fn loop_unrolling_is_cut_at_depth() {
    let p = program("  while x < n:\n    x = x + 1\n  end");
    let set = sym_execute(&p, 0, 3);
    assert!(!set.complete);
    assert_eq!(set.pcs.len(), 4);
    assert_eq!(set.truncated, vec![true, false, false, false]);
    let f = |s: &str| parse_formula(s, &names()).unwrap();
    assert_eq!(set.pcs[0], f("x < 10 and x < 9 and x < 8"));
    assert_eq!(set.pcs[1], f("x < 10 and x < 9 and x >= 8"));
    assert_eq!(set.pcs[2], f("x < 10 and x >= 9"));
    assert_eq!(set.pcs[3], f("x >= 10"));
    // Without the box the loop never provably exits; the extra prefixes
    // are empty inside it.
    let deep = sym_execute(&p, 0, 11);
    assert!(!deep.complete);
    assert_eq!(deep.pcs.len(), 12);
    let kept = project_and_disjointify(&deep, &p.state_box(), &SolverConfig::internal()).unwrap();
    assert_eq!(kept.pcs.len(), 11);
    assert!(kept.complete);
}

#[test]
fn action_guards_fold_without_cost() {
    let p = program("  if d == 1:\n    if x < 3:\n      x = 0\n    end\n  else:\n    skip\n  end");
    let a = sym_execute(&p, 0, 1);
    assert!(a.complete);
    assert_eq!(a.pcs.len(), 2);
    let b = sym_execute(&p, 1, 1);
    assert_eq!(b.pcs, vec![Formula::True]);
}

#[test]
fn bernoulli_branches_on_its_draw() {
    let p = program("  c ~ bernoulli(1/4)\n  x = x + c");
    let set = sym_execute(&p, 0, 2);
    assert_eq!(set.pcs.len(), 2);
    let env_hit = crate::formula::TraceValuation {
        state: &[q(1, 1)],
        samples: &[q(1, 8)],
    };
    assert_eq!(set.pcs[0].eval(&env_hit), Ok(true));
    assert_eq!(set.pcs[1].eval(&env_hit), Ok(false));
    let cut = sym_execute(&p, 0, 0);
    assert!(!cut.complete);
    assert_eq!(cut.pcs.len(), 1);
}

#[test]
fn projection_without_samples_is_identity() {
    let p = program("  if x < 5:\n    x = 0\n  end");
    let set = sym_execute(&p, 0, 2);
    let out = project_and_disjointify(&set, &p.state_box(), &SolverConfig::internal()).unwrap();
    assert_eq!(out.pcs, set.pcs);
}

#[test]
fn overlapping_projections_are_split() {
    // exists y in [0,1]. x + y < 3   and   exists y in [0,1]. x + y >= 3 and x + y < 5
    let p = program("  y ~ uniform(0, 1)\n  if x + y < 3:\n    x = 0\n  elif x + y < 5:\n    x = 1\n  end");
    let set = sym_execute(&p, 0, 4);
    let out = project_and_disjointify(&set, &p.state_box(), &SolverConfig::internal()).unwrap();
    // Projections: x < 3, 2 <= x < 5, x >= 4.
    let pieces: Vec<Vec<i64>> = (0..=40)
        .map(|i| q(i, 4))
        .map(|v| {
            out.pcs
                .iter()
                .enumerate()
                .filter(|(_, f)| f.eval_at(std::slice::from_ref(&v)) == Ok(true))
                .map(|(i, _)| i as i64)
                .collect()
        })
        .collect();
    assert!(pieces.iter().all(|m| m.len() == 1), "{pieces:?}");
    assert_eq!(out.pcs.len(), 5);
    for i in 0..out.pcs.len() {
        for j in i + 1..out.pcs.len() {
            let both = conjoin([out.pcs[i].clone(), out.pcs[j].clone()]);
            assert!(check_sat(&both, &SolverConfig::internal()).unwrap().is_unsat());
        }
    }
}

#[test]
fn nested_overlap_keeps_the_inner_piece() {
    let bx = program("  skip").state_box();
    let f = |s: &str| parse_formula(s, &names()).unwrap();
    let out = disjointify(vec![f("x < 3"), f("x < 5")], &bx, &SolverConfig::internal()).unwrap();
    assert_eq!(out, vec![f("x < 3"), f("x < 5 and not (x < 3)")]);
}
