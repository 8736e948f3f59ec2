use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sympar::dsl::{concrete_step, parse};
use sympar::formula::{negate, Rel, Term, TraceValuation};
use sympar::partition::sympar;
use sympar::solver::{check_sat, eliminate, SatResult, SolverConfig};
use sympar::symexec::sym_execute;
use sympar::{Formula, Program, Rational, Var};

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn cfg() -> SolverConfig {
    SolverConfig::internal()
}

fn lin(a: i64, b: i64, c: i64, second: Var) -> Term {
    let x = Term::mul(Term::int(a), Term::Var(Var::State(0)));
    let y = Term::mul(Term::int(b), Term::Var(second));
    Term::add(Term::add(x, y), Term::int(c))
}

fn atom(second: Var) -> impl Strategy<Value = Formula> {
    let rel = prop::sample::select(vec![Rel::Lt, Rel::Le, Rel::Eq]);
    (-3i64..=3, -3i64..=3, -4i64..=4, rel).prop_map(move |(a, b, c, r)| Formula::compare(lin(a, b, c, second), r, Term::int(0)))
}

fn formula(second: Var) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![6 => atom(second), 1 => any::<bool>().prop_map(Formula::constant)];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 1..4).prop_map(Formula::Or),
            inner.prop_map(|f| Formula::Not(Box::new(f))),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec((-8i64..=8).prop_map(|n| q(n, 2)), 2)
}

fn linear_expr(vars: &'static [&'static str]) -> impl Strategy<Value = String> {
    (prop::sample::subsequence(vars.to_vec(), 1..=vars.len()), prop::collection::vec(-2i64..=2, 3), -3i64..=3)
        .prop_map(|(names, ks, c)| {
            let mut s = format!("{c}");
            for (n, k) in names.iter().zip(ks) {
                s.push_str(&format!(" + {k} * {n}"));
            }
            s
        })
}

fn guard() -> impl Strategy<Value = String> {
    let cmp = prop::sample::select(vec!["<", "<=", "==", ">="]);
    prop_oneof![
        4 => (linear_expr(&["x", "y", "n"]), cmp, -6i64..=6).prop_map(|(e, c, k)| format!("{e} {c} {k}")),
        1 => Just("d == 1".to_string()),
    ]
}

fn stmt(depth: u32) -> BoxedStrategy<String> {
    let target = prop::sample::select(vec!["nx", "r"]);
    let assign = (target, linear_expr(&["x", "y", "d", "n"])).prop_map(|(t, e)| format!("{t} = {e}\n"));
    let draw = (0i64..3).prop_map(|lo| format!("n ~ uniform({lo}, {})\n", lo + 2));
    let simple = prop_oneof![3 => assign, 1 => draw];
    if depth == 0 {
        return simple.boxed();
    }
    let block = prop::collection::vec(stmt(depth - 1), 1..3).prop_map(|v| v.concat());
    prop_oneof![
        2 => simple,
        2 => (guard(), block.clone(), prop::option::of(block)).prop_map(|(g, t, e)| match e {
            Some(e) => format!("if {g}:\n{t}else:\n{e}end\n"),
            None => format!("if {g}:\n{t}end\n"),
        }),
    ]
    .boxed()
}

/// Loop-free programs over a real and an integer axis with linear guards,
/// some of which read a uniform draw.
fn program() -> impl Strategy<Value = Program> {
    prop::collection::vec(stmt(2), 1..4).prop_map(|body| {
        let src = format!(
            "env gen\nstate x real in [0, 10]\nstate y int in [0, 6]\naction_vars d\naction a = (1)\naction b = (2)\n\
             body\nn = 0\nnx = x\nr = 0\n{}end\nnext (nx, y)\nreward r\ndone d\n",
            body.concat()
        );
        parse(&src).unwrap_or_else(|e| panic!("{e}\n{src}"))
    })
}

const DEPTH: usize = 10;

fn unsat(f: Formula) -> bool {
    check_sat(&f.normalize(), &cfg()).unwrap().is_unsat()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalize_keeps_truth_and_is_idempotent(f in formula(Var::State(1)), pts in prop::collection::vec(point(), 8)) {
        let n = f.normalize();
        prop_assert_eq!(n.normalize(), n.clone());
        for p in &pts {
            prop_assert_eq!(f.eval_at(p), n.eval_at(p));
        }
    }

    #[test]
    fn negation_flips_truth(f in formula(Var::State(1)), pts in prop::collection::vec(point(), 8)) {
        let g = negate(&f);
        for p in &pts {
            prop_assert_eq!(g.eval_at(p).unwrap(), !f.eval_at(p).unwrap());
        }
    }

    #[test]
    fn sat_answers_are_sound(f in formula(Var::State(1)), pts in prop::collection::vec(point(), 16)) {
        match check_sat(&f.normalize(), &cfg()).unwrap() {
            SatResult::Sat(m) => {
                // Variables the normal form dropped are free; any value works.
                let at: Vec<Rational> = (0..2).map(|i| m.get(&Var::State(i)).cloned().unwrap_or_default()).collect();
                prop_assert_eq!(f.eval_at(&at), Ok(true));
            }
            SatResult::Unsat => {
                for p in &pts {
                    prop_assert_eq!(f.eval_at(p), Ok(false));
                }
            }
            SatResult::Unknown => prop_assert!(false, "linear query left undecided"),
        }
    }

    #[test]
    fn elimination_is_exact(f in formula(Var::Sample(0)), xs in prop::collection::vec(-8i64..=8, 6), ys in prop::collection::vec(-8i64..=8, 6)) {
        let f = f.normalize();
        let g = eliminate(&f, &BTreeSet::from([Var::Sample(0)]), &cfg()).unwrap();
        prop_assert!(g.vars().iter().all(|v| !v.is_sample()));
        for &x in &xs {
            let x = q(x, 2);
            let projected = g.eval_at(std::slice::from_ref(&x)).unwrap();
            for &y in &ys {
                let at = TraceValuation { state: std::slice::from_ref(&x), samples: &[q(y, 2)] };
                if f.eval(&at).unwrap() {
                    prop_assert!(projected);
                }
            }
            let fixed = f.substitute(&|v| (v == Var::State(0)).then(|| Term::Const(x.clone())));
            prop_assert_eq!(check_sat(&fixed.normalize(), &cfg()).unwrap().is_sat(), projected);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn path_conditions_are_exclusive(p in program()) {
        for a in 0..p.actions.len() {
            let set = sym_execute(&p, a, DEPTH);
            for i in 0..set.len() {
                for j in i + 1..set.len() {
                    prop_assert!(unsat(Formula::And(vec![set.pcs[i].clone(), set.pcs[j].clone()])), "{i} {j}");
                }
            }
        }
    }

    #[test]
    fn concrete_run_follows_one_path(p in program(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bx = p.state_box();
        for a in 0..p.actions.len() {
            let set = sym_execute(&p, a, DEPTH);
            for _ in 0..10 {
                let s = bx.sample(&mut rng);
                let out = concrete_step(&p, &s.0, a, &mut rng).unwrap();
                let at = TraceValuation { state: &s.0, samples: &out.samples };
                let hits = set.pcs.iter().filter(|pc| pc.eval(&at) == Ok(true)).count();
                prop_assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn every_state_has_one_part(p in program(), seed in any::<u64>()) {
        let part = sympar(&p, DEPTH, &cfg()).unwrap();
        prop_assert!(part.bounds().holds());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..30 {
            let s = p.state_box().sample(&mut rng);
            prop_assert!(part.locate(&s.0).is_ok(), "{:?}", part.locate(&s.0));
        }
        for (id, w) in part.witnesses().iter().enumerate() {
            if let Some(w) = w {
                prop_assert_eq!(part.locate(&w.0), Ok(id));
            }
        }
    }

    #[test]
    fn parts_sit_inside_one_condition_per_action(p in program()) {
        let part = sympar(&p, DEPTH, &cfg()).unwrap();
        let inside = p.state_box().formula();
        for piece in &part.parts {
            for set in &part.action_sets {
                let within = set.pcs.iter().any(|pc| {
                    unsat(Formula::And(vec![inside.clone(), piece.formula.clone(), negate(pc)]))
                });
                prop_assert!(within, "part {} vs action {}", piece.id, set.action);
            }
        }
    }

    #[test]
    fn deeper_partitions_refine_shallower_ones(p in program(), k in 1usize..4, seed in any::<u64>()) {
        let coarse = sympar(&p, k, &cfg()).unwrap();
        let fine = sympar(&p, k + 1, &cfg()).unwrap();
        prop_assert!(fine.len() >= coarse.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut image = HashMap::new();
        for _ in 0..40 {
            let s = p.state_box().sample(&mut rng);
            let (f, c) = (fine.locate(&s.0).unwrap(), coarse.locate(&s.0).unwrap());
            prop_assert_eq!(*image.entry(f).or_insert(c), c);
        }
    }

    #[test]
    fn partitioning_is_deterministic(p in program()) {
        prop_assert_eq!(sympar(&p, DEPTH, &cfg()).unwrap(), sympar(&p, DEPTH, &cfg()).unwrap());
    }
}
