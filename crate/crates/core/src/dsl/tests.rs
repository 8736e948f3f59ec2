use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::benchmarks::load_benchmark;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn wrap(header: &str, body: &str) -> String {
    format!("env t\n{header}state x real in [0, 10]\naction_vars d\naction a = (1)\naction b = (2)\nbody\n{body}\n  r = 0\n  fin = 0\nend\nnext (x)\nreward r\ndone fin\n")
}

#[test]
fn assignment_node() {
    let p = parse(&wrap("", "  x = x + 1")).unwrap();
    let Stmt::Seq(stmts) = &p.body else { panic!("{:?}", p.body) };
    let x = VarRef {
        name: "x".into(),
        slot: 0,
    };
    assert_eq!(
        stmts[0],
        Stmt::Assign(
            x.clone(),
            Expr::Bin(ArithOp::Add, Box::new(Expr::Var(x)), Box::new(Expr::Num(q(1, 1))))
        )
    );
}

#[test]
fn guard_on_action_component() {
    let p = parse(&wrap("", "  if d == 1:\n    x = 0\n  end")).unwrap();
    let Stmt::Seq(stmts) = &p.body else { panic!() };
    let Stmt::If(BoolExpr::Cmp(CmpOp::Eq, Expr::Var(v), Expr::Num(c)), _, els) = &stmts[0] else {
        panic!("{:?}", stmts[0])
    };
    assert_eq!(v.name, "d");
    assert_eq!(v.slot, p.action_slot(0));
    assert_eq!(*c, q(1, 1));
    assert_eq!(**els, Stmt::Skip);
}

#[test]
fn unbound_variable_names_its_line() {
    let e = parse(&wrap("", "  x = 1\n  x = z + 1")).unwrap_err();
    assert_eq!(e.line, 8);
    assert_eq!(e.message, "unbound variable z at line 8");
}

#[test]
fn other_validation_errors() {
    let arity = wrap("", "  skip").replace("action b = (2)", "action b = (2, 3)");
    assert!(parse(&arity).unwrap_err().message.contains("arity"), "{:?}", parse(&arity));
    let flat = wrap("", "  skip").replace("[0, 10]", "[3, 3]");
    assert!(parse(&flat).is_err());
    assert!(parse("env\n").is_err());
    let bad_uniform = wrap("", "  y ~ uniform(2, 1)");
    assert!(parse(&bad_uniform).is_err());
}

#[test]
fn navigation_step_up() {
    let (p, _) = load_benchmark("navigation").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let up = p.action_index("U").unwrap();
    let out = concrete_step(&p, &[q(1, 1), q(1, 1)], up, &mut rng).unwrap();
    assert_eq!(out.next.0, vec![q(1, 1), q(2, 1)]);
    assert_eq!(out.reward, q(-1, 1));
    assert!(!out.done);
}

#[test]
fn navigation_trap_and_cheese() {
    let (p, _) = load_benchmark("navigation").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let right = p.action_index("R").unwrap();
    let trap = concrete_step(&p, &[q(8, 1), q(1, 1)], right, &mut rng).unwrap();
    assert_eq!((trap.reward.clone(), trap.done), (q(-1000, 1), true));
    let cheese = concrete_step(&p, &[q(8, 1), q(5, 2)], right, &mut rng).unwrap();
    assert_eq!((cheese.reward.clone(), cheese.done), (q(0, 1), true));
    assert!(p.is_success(&cheese.reward));
    assert!(!p.is_success(&trap.reward));
}

#[test]
fn skip_path_leaves_state_alone() {
    let p = parse(&wrap("", "  if d == 1:\n    x = 0\n  else:\n    skip\n  end")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = concrete_step(&p, &[q(7, 3)], 1, &mut rng).unwrap();
    assert_eq!(out.next.0, vec![q(7, 3)]);
}

#[test]
fn seeded_steps_repeat() {
    let (p, _) = load_benchmark("random_walk").unwrap();
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        (0..20)
            .map(|i| concrete_step(&p, &[q(5, 1)], i % 2, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.windows(2).any(|w| w[0].next != w[1].next));
}

#[test]
fn runaway_loop_and_division() {
    let p = parse(&wrap("", "  while x >= 0:\n    x = x + 1\n  end")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        concrete_step_with_fuel(&p, &[q(1, 1)], 0, &mut rng, 50),
        Err(InterpError::FuelExhausted(50))
    );
    let p = parse(&wrap("", "  x = 1 / x")).unwrap();
    assert_eq!(concrete_step(&p, &[q(0, 1)], 0, &mut rng), Err(InterpError::DivisionByZero));
}

#[test]
fn params_override_bounds_and_actions() {
    let src = "env s\nparam S = 1\nstate x real in [0, 10 * S]\naction_vars d\naction go = (S)\nbody\n  nx = x + d\n  r = 0\n  fin = 0\nend\nnext (nx)\nreward r\ndone fin\n";
    let p = parse_with_params(src, &[("S", q(10, 1))]).unwrap();
    assert_eq!(p.state_vars[0].upper, q(100, 1));
    assert_eq!(p.actions[0].values, vec![q(10, 1)]);
    assert!(parse_with_params(src, &[("T", q(1, 1))]).is_err());
}

#[test]
fn shipped_programs_print_and_reparse() {
    for n in crate::benchmarks::names() {
        let (p, _) = load_benchmark(n).unwrap();
        assert_eq!(parse(&p.to_string()).unwrap(), p, "{n}");
    }
}

// Random programs for the round-trip property. Locals are assigned up front
// so every read is bound.

fn expr_src(depth: u32) -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        (-20i64..20).prop_map(|n| n.to_string()),
        (1i64..20, 2i64..9).prop_map(|(n, d)| format!("{n}/{d}")),
        prop::sample::select(vec!["x", "y", "d", "K", "t0", "t1"]).prop_map(str::to_string),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    let sub = expr_src(depth - 1);
    prop_oneof![
        2 => leaf,
        1 => (sub.clone(), prop::sample::select(vec!["+", "-", "*", "/"]), sub.clone())
            .prop_map(|(a, op, b)| format!("({a} {op} {b})")),
        1 => sub.clone().prop_map(|a| format!("-({a})")),
        1 => sub.prop_map(|a| format!("cos({a})")),
    ]
    .boxed()
}

fn bool_src() -> BoxedStrategy<String> {
    let cmp = (expr_src(1), prop::sample::select(vec!["<", "<=", ">", ">=", "==", "!="]), expr_src(1))
        .prop_map(|(a, op, b)| format!("{a} {op} {b}"));
    prop_oneof![
        3 => cmp.clone(),
        1 => (cmp.clone(), cmp.clone()).prop_map(|(a, b)| format!("({a}) and ({b})")),
        1 => (cmp.clone(), cmp.clone()).prop_map(|(a, b)| format!("({a}) or ({b})")),
        1 => cmp.prop_map(|a| format!("not ({a})")),
    ]
    .boxed()
}

fn stmt_src(depth: u32) -> BoxedStrategy<String> {
    let target = prop::sample::select(vec!["t0", "t1"]);
    let assign = (target.clone(), expr_src(2)).prop_map(|(t, e)| format!("{t} = {e}\n"));
    let sample = prop_oneof![
        (target.clone(), 0i64..5).prop_map(|(t, lo)| format!("{t} ~ uniform({lo}, {})\n", lo + 3)),
        (target, 1i64..9).prop_map(|(t, p)| format!("{t} ~ bernoulli({p}/10)\n")),
    ];
    let simple = prop_oneof![3 => assign, 1 => sample, 1 => Just("skip\n".to_string())];
    if depth == 0 {
        return simple.boxed();
    }
    let block = prop::collection::vec(stmt_src(depth - 1), 1..3).prop_map(|v| v.concat());
    prop_oneof![
        3 => simple,
        1 => (bool_src(), block.clone(), prop::option::of(block.clone()))
            .prop_map(|(c, t, e)| match e {
                Some(e) => format!("if {c}:\n{t}else:\n{e}end\n"),
                None => format!("if {c}:\n{t}end\n"),
            }),
        1 => (bool_src(), block).prop_map(|(c, b)| format!("while {c}:\n{b}end\n")),
    ]
    .boxed()
}

fn program_src() -> impl Strategy<Value = String> {
    (prop::collection::vec(stmt_src(2), 1..5), any::<bool>(), -5i64..5).prop_map(|(body, int_y, k)| {
        let kind = if int_y { "int" } else { "real" };
        format!(
            "env gen\nparam K = {k}\nstate x real in [-1, 1/2]\nstate y {kind} in [0, 4]\naction_vars d\n\
             action a = (1)\naction b = (-3/2)\ninit (0, 1)\nsuccess reward >= -1\nbody\nt0 = 0\nt1 = x\n{}end\n\
             next (t0, t1)\nreward t0\ndone t1\n",
            body.concat()
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_then_parse_is_identity(src in program_src()) {
        let p = parse(&src).unwrap();
        let printed = p.to_string();
        let back = parse(&printed).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn step_is_a_function_of_its_inputs(x in -10i64..=5, y in 0i64..=4, a in 0usize..2, seed in any::<u64>(), src in program_src()) {
        let p = parse(&src).unwrap();
        let s = [q(x, 10), q(y, 1)];
        let go = || concrete_step_with_fuel(&p, &s, a, &mut ChaCha8Rng::seed_from_u64(seed), 200);
        prop_assert_eq!(go(), go());
    }
}
