use proptest::prelude::*;
use rand::SeedableRng;

use super::*;
use crate::benchmarks::load_benchmark;
use crate::dsl::parse;
use crate::partition::sympar;
use crate::solver::SolverConfig;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

// From 0: `stay` earns 1/5 and stays, `go` earns 0 and moves to 1.
// From 1 the episode ends: `stay` earns 0, `go` earns 5.
const CHAIN: &str = "env chain
state x int in [0, 1]
action_vars m
action stay = (0)
action go = (1)
body
  nx = x
  r = 0
  fin = 0
  if x == 0:
    if m == 0:
      r = 1/5
    else:
      nx = 1
    end
  else:
    fin = 1
    r = 5 * m
  end
end
next (nx)
reward r
done fin
";

/// (next state, reward, terminal) for the chain, written out by hand.
fn chain_model(s: usize, a: usize) -> (usize, f64, bool) {
    match (s, a) {
        (0, 0) => (0, 0.2, false),
        (0, 1) => (1, 0.0, false),
        (1, 0) => (1, 0.0, true),
        (1, _) => (1, 5.0, true),
        _ => unreachable!(),
    }
}

fn value_iteration(gamma: f64) -> [[f64; 2]; 2] {
    let mut qv = [[0.0; 2]; 2];
    for _ in 0..2000 {
        let v = [qv[0][0].max(qv[0][1]), qv[1][0].max(qv[1][1])];
        let mut next = qv;
        for s in 0..2 {
            for a in 0..2 {
                let (t, r, done) = chain_model(s, a);
                next[s][a] = r + if done { 0.0 } else { gamma * v[t] };
            }
        }
        qv = next;
    }
    qv
}

fn chain_tiles(p: &Program) -> TilePartition {
    // Side 2 on [0, 1]: tile 0 holds x = 0, tile 1 holds x = 1.
    make_tiling(&p.state_box(), 1).unwrap()
}

#[test]
fn single_terminal_update() {
    let mut t = QTable::<f64>::new(3, 2);
    let td = t.update(1, 0, 1.0, None, 0.5, 1.0);
    assert_eq!(td, 1.0);
    assert_eq!(t.value(1, 0), 0.5);
    assert_eq!(t.visits(1, 0), 1);
    assert_eq!(t.part_visits(1), 1);
    assert_eq!(t.part_visits(0), 0);
}

#[test]
fn greedy_ties_pick_lowest_index() {
    let mut t = QTable::<f32>::new(1, 4);
    assert_eq!(t.greedy(0), 0);
    t.set(0, 2, 1.0);
    t.set(0, 3, 1.0);
    assert_eq!(t.greedy(0), 2);
}

#[test]
fn learned_policy_matches_value_iteration() {
    let p = parse(CHAIN).unwrap();
    let tiles = chain_tiles(&p);
    assert_eq!(tiles.observe(&[q(0, 1)]), Ok(0));
    assert_eq!(tiles.observe(&[q(1, 1)]), Ok(1));
    let cfg = TrainConfig {
        episodes: 3000,
        max_steps: 50,
        gamma: 0.9,
        init: InitSampler::Uniform,
        seed: 11,
        ..TrainConfig::default()
    };
    let (table, _) = train::<f64, _>(&p, &tiles, &cfg).unwrap();
    let oracle = value_iteration(0.9);
    for s in 0..2 {
        let best = if oracle[s][1] > oracle[s][0] { 1 } else { 0 };
        assert_eq!(table.greedy(s), best, "state {s}: {oracle:?}");
        for a in 0..2 {
            assert!((table.value(s, a) - oracle[s][a]).abs() < 0.5, "{s},{a}");
        }
    }
}

#[test]
fn bellman_sweeps_contract() {
    let gamma = 0.9;
    let mut cur = QTable::<f64>::new(2, 2);
    let mut last = f64::INFINITY;
    for _ in 0..30 {
        let mut next = cur.clone();
        for s in 0..2 {
            for a in 0..2 {
                let (t, r, done) = chain_model(s, a);
                let mut scratch = cur.clone();
                scratch.update(s, a, r, (!done).then_some(t), 1.0, gamma);
                next.set(s, a, scratch.value(s, a));
            }
        }
        let change = (0..2)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| (next.value(s, a) - cur.value(s, a)).abs())
            .fold(0.0, f64::max);
        assert!(change <= last + 1e-12, "{change} after {last}");
        if last.is_finite() && last > 0.0 {
            assert!(change <= gamma * last + 1e-12);
        }
        last = change;
        cur = next;
    }
    assert!(last < 1e-3);
}

#[test]
fn training_is_reproducible() {
    let (p, e) = load_benchmark("braking_car").unwrap();
    let part = sympar(&p, e.recommended_depth, &SolverConfig::internal()).unwrap();
    let cfg = TrainConfig {
        episodes: 300,
        seed: 5,
        ..TrainConfig::default()
    };
    let a = train::<f64, _>(&p, &part, &cfg).unwrap();
    let b = train::<f64, _>(&p, &part, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.1.to_csv(), b.1.to_csv());
    let other = train::<f64, _>(&p, &part, &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.1, other.1);
}

#[test]
fn witness_seeding_visits_every_part() {
    let (p, e) = load_benchmark("navigation").unwrap();
    let part = sympar(&p, e.recommended_depth, &SolverConfig::internal()).unwrap();
    assert!(part.witnesses().iter().all(Option::is_some));
    let cfg = TrainConfig {
        episodes: part.len(),
        max_steps: 1,
        ..TrainConfig::default()
    };
    let (table, _) = train::<f64, _>(&p, &part, &cfg).unwrap();
    for i in 0..part.len() {
        assert!(table.part_visits(i) >= 1, "part {i}");
    }
}

#[test]
fn summary_percentages() {
    let ep = |reward, outcome| Episode {
        reward,
        outcome,
        steps: 1,
    };
    let m = RunMetrics {
        episodes: vec![
            ep(-3.0, Outcome::Success),
            ep(-1.0, Outcome::Success),
            ep(-1000.0, Outcome::Failure),
            ep(-1.0, Outcome::Timeout),
        ],
        checkpoints: Vec::new(),
    };
    let s = m.summary(7);
    assert_eq!((s.succ, s.fail, s.t_out, s.opt), (50.0, 25.0, 25.0, 50.0));
    assert_eq!(s.csv_row(), "7,50.00,25.00,25.00,50.00");
    assert!(m.to_csv().starts_with("episode,accumulated_reward,outcome\n0,-3,success\n"));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = TrainConfig::default();
    assert!(base.validate().is_ok());
    for bad in [
        TrainConfig { alpha: 0.0, ..base.clone() },
        TrainConfig { gamma: 1.5, ..base.clone() },
        TrainConfig { episodes: 0, ..base.clone() },
        TrainConfig {
            epsilon: EpsilonSchedule {
                start: 2.0,
                ..base.epsilon
            },
            ..base.clone()
        },
    ] {
        assert!(matches!(bad.validate(), Err(LearnError::Config(_))));
    }
}

#[test]
fn epsilon_decays_linearly_then_holds() {
    let e = TrainConfig::default().epsilon;
    assert_eq!(e.at(0, 100), 1.0);
    assert!((e.at(40, 100) - 0.525).abs() < 1e-12);
    assert!((e.at(80, 100) - 0.05).abs() < 1e-12);
    assert!((e.at(99, 100) - 0.05).abs() < 1e-12);
}

#[test]
fn tile_budget_rule() {
    assert_eq!(tiling_side(51, 2).unwrap(), 8);
    assert_eq!(tiling_side(33, 2).unwrap(), 6);
    assert_eq!(tiling_side(36, 2).unwrap(), 7);
    assert_eq!(tiling_side(1, 2).unwrap(), 2);
    assert_eq!(tiling_side(7, 3).unwrap(), 2);
    assert_eq!(tiling_side(0, 2), Err(LearnError::ZeroBudget));
    let (p, _) = load_benchmark("navigation").unwrap();
    assert_eq!(make_tiling(&p.state_box(), 51).unwrap().len(), 64);
}

#[test]
fn tile_edges_are_half_open() {
    let (p, _) = load_benchmark("navigation").unwrap();
    let t = make_tiling(&p.state_box(), 15).unwrap();
    assert_eq!(t.side, 4);
    // x = 5/2 is the edge between columns 0 and 1.
    assert_eq!(t.observe(&[q(5, 2), q(0, 1)]), Ok(4));
    assert_eq!(t.observe(&[q(249, 100), q(0, 1)]), Ok(0));
    assert_eq!(t.observe(&[q(10, 1), q(10, 1)]), Ok(15));
    assert!(matches!(t.observe(&[q(11, 1), q(0, 1)]), Err(LocateError::NoPart(_))));
    for (id, w) in t.witnesses().iter().enumerate() {
        assert_eq!(t.observe(w.as_ref().unwrap()), Ok(id));
    }
}

#[test]
fn integer_tiles_without_points_have_no_witness() {
    let (p, _) = load_benchmark("simple_maze").unwrap();
    // 8 tiles per axis over 0..=4: some hold no integer.
    let t = make_tiling(&p.state_box(), 63).unwrap();
    let ws = t.witnesses();
    assert!(ws.iter().any(Option::is_none));
    for (id, w) in ws.iter().enumerate() {
        if let Some(w) = w {
            assert_eq!(t.observe(w), Ok(id));
        }
    }
}

proptest! {
    #[test]
    fn tiles_cover_the_box_exactly(budget in 1usize..200, seed in any::<u64>()) {
        let (p, _) = load_benchmark("navigation").unwrap();
        let t = make_tiling(&p.state_box(), budget).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let s = p.state_box().sample(&mut rng);
            let id = t.observe(&s).unwrap();
            prop_assert!(id < t.len());
            // The tile's own bounds contain the point.
            for (d, k) in t.coords(id).into_iter().enumerate() {
                prop_assert!(t.edge(d, k) <= s[d]);
                prop_assert!(s[d] < t.edge(d, k + 1) || (k + 1 == t.side && s[d] == t.edge(d, k + 1)));
            }
        }
    }
}

#[test]
fn greedy_rollouts_in_a_deterministic_env_have_no_spread() {
    let (p, e) = load_benchmark("navigation").unwrap();
    let part = sympar(&p, e.recommended_depth, &SolverConfig::internal()).unwrap();
    let table = QTable::<f64>::new(part.len(), p.actions.len());
    let starts = vec![ConcreteState(vec![q(1, 1), q(1, 1)]); 3];
    let res = evaluate_policy(&p, &part, &table, &starts, 4, 30, 9).unwrap();
    for r in &res {
        assert_eq!(r.std, 0.0);
        assert_eq!(r.mean, res[0].mean);
    }
    let wrong = QTable::<f64>::new(2, 4);
    assert!(matches!(
        evaluate_policy(&p, &part, &wrong, &starts, 1, 5, 0),
        Err(LearnError::Shape { .. })
    ));
}
