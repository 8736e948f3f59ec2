use super::*;
use crate::dsl::parse;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn names2() -> Vec<String> {
    vec!["x".into(), "y".into()]
}

fn f(s: &str) -> Formula {
    parse_formula(s, &names2()).unwrap()
}

fn box10() -> StateBox {
    StateBox {
        lower: vec![q(0, 1), q(0, 1)],
        upper: vec![q(10, 1), q(10, 1)],
        integer: vec![false, false],
    }
}

fn cfg() -> SolverConfig {
    SolverConfig::internal()
}

const TWO_ACTIONS: &str = "env two
state x real in [0, 10]
state y real in [0, 10]
action_vars d
action a = (1)
action b = (2)
body
  r = 0
  if d == 1:
    if x < 5:
      r = 1
    end
  else:
    if x < 3:
      r = 2
    end
  end
  fin = 1
end
next (x, y)
reward r
done fin
";

#[test]
fn refinement_of_two_interval_splits() {
    let sets = vec![vec![f("x < 5"), f("x >= 5")], vec![f("x < 3"), f("x >= 3")]];
    let parts = coarsest_common_refinement(&sets, &box10(), &cfg()).unwrap();
    assert_eq!(parts, vec![f("x < 3"), f("x < 5 and x >= 3"), f("x >= 5")]);
}

#[test]
fn refinement_identity_and_quadrants() {
    let one = vec![vec![f("x < 5"), f("x >= 5")]];
    assert_eq!(coarsest_common_refinement(&one, &box10(), &cfg()).unwrap(), one[0]);
    let sets = vec![vec![f("x < 5"), f("x >= 5")], vec![f("y < 5"), f("y >= 5")]];
    let parts = coarsest_common_refinement(&sets, &box10(), &cfg()).unwrap();
    assert_eq!(parts.len(), 4);
}

#[test]
fn sympar_on_two_actions() {
    let p = parse(TWO_ACTIONS).unwrap();
    let part = sympar(&p, 4, &cfg()).unwrap();
    assert_eq!(part.len(), 3);
    assert!(part.complete);
    assert!(!part.has_complement());
    assert_eq!(part.pc_counts(), vec![2, 2]);
    let b = part.bounds();
    assert!(b.holds());
    assert_eq!((b.lower, b.upper, b.parts), (2, 4, 3));
    for p in &part.parts {
        let w = p.witness.as_ref().unwrap();
        assert_eq!(part.locate(w), Ok(p.id));
        assert_eq!(p.status, Emptiness::Nonempty);
    }
    assert_eq!(part.locate(&[q(3, 1), q(0, 1)]), Ok(1));
    assert!(matches!(part.locate(&[q(3, 1)]), Err(LocateError::Dimension { .. })));
}

#[test]
fn zero_depth_is_rejected() {
    let p = parse(TWO_ACTIONS).unwrap();
    assert_eq!(sympar(&p, 0, &cfg()), Err(PartitionError::Depth));
}

#[test]
fn single_action_program_still_splits() {
    let src = "env one
state x real in [0, 10]
action_vars d
action go = (1)
body
  if x < 5:
    nx = x + d
  else:
    nx = x + d
  end
  r = 0
  fin = 0
end
next (nx)
reward r
done fin
";
    let p = parse(src).unwrap();
    let part = sympar(&p, 2, &cfg()).unwrap();
    assert_eq!(part.len(), 2);
}

#[test]
fn dropped_region_becomes_complement() {
    let src = "env gap
state x real in [0, 10]
action_vars d
action go = (1)
body
  if x * x > 9999/100:
    r = 1
  else:
    r = 0
  end
  fin = 0
end
next (x)
reward r
done fin
";
    let p = parse(src).unwrap();
    let c = cfg().with_policy(UnknownPolicy::DropPart);
    let part = sympar(&p, 2, &c).unwrap();
    assert!(part.has_complement());
    let comp = part.parts.iter().find(|p| p.is_complement).unwrap();
    assert_eq!(part.locate(&[q(10, 1)]), Ok(comp.id));
    assert_eq!(part.locate(&[q(1, 1)]), Ok(0));
    // Keeping undecided parts needs no complement.
    let kept = sympar(&p, 2, &cfg()).unwrap();
    assert!(!kept.has_complement());
    assert_eq!(kept.len(), 2);
}

#[test]
fn dump_round_trip() {
    let p = parse(TWO_ACTIONS).unwrap();
    let part = sympar(&p, 4, &cfg()).unwrap();
    let text = part.dump();
    assert!(text.starts_with("sympar-partition v1\nprogram two\n"));
    let back = Partition::load(&text, part.program.clone()).unwrap();
    assert_eq!(back.parts, part.parts);
    assert_eq!(back.pc_counts(), part.pc_counts());
    assert_eq!(back.depth, 4);
    assert_eq!(back.dump(), text);
}

#[test]
fn dump_errors_carry_line_numbers() {
    let p = parse(TWO_ACTIONS).unwrap();
    let part = sympar(&p, 4, &cfg()).unwrap();
    let text = part.dump().replace("sympar-partition v1", "sympar-partition v9");
    assert!(matches!(Partition::load(&text, part.program.clone()), Err(PartitionError::Dump { line: 1, .. })));
    let text = part.dump().replace("formula x < 3", "formula x <");
    let e = Partition::load(&text, part.program.clone()).unwrap_err();
    assert!(matches!(e, PartitionError::Dump { line, .. } if line > 10));
    let other = parse(&TWO_ACTIONS.replace("env two", "env three")).unwrap();
    assert!(Partition::load(&part.dump(), Arc::new(other)).is_err());
}

#[test]
fn raster_and_ppm() {
    let p = parse(TWO_ACTIONS).unwrap();
    let part = sympar(&p, 4, &cfg()).unwrap();
    let grid = part.raster(10, 4);
    assert_eq!(grid.len(), 4);
    assert_eq!(grid[0].len(), 10);
    // Columns 0..3 have x < 3, 3..5 have 3 <= x < 5.
    assert_eq!(grid[0][0], Some(0));
    assert_eq!(grid[3][4], Some(1));
    assert_eq!(grid[2][9], Some(2));
    let ppm = raster_to_ppm(&grid);
    assert!(ppm.starts_with("P3\n10 4\n255\n"));
    assert_eq!(ppm.lines().count(), 3 + 4);
}

#[test]
fn rational_text() {
    assert_eq!(parse_rational("-3/4"), Some(q(-3, 4)));
    assert_eq!(parse_rational("7"), Some(q(7, 1)));
    assert_eq!(parse_rational("1/0"), None);
    assert_eq!(parse_rational("x"), None);
}

#[test]
fn simplification_drops_implied_conjuncts() {
    let g = f("x < 3 and x < 5 and x >= 0 and y <= 10");
    assert_eq!(simplify_in_box(&g, &box10(), &cfg()).unwrap(), f("x < 3"));
}
