//! The shipped benchmark programs.
//!
//! Sources live under `benchmarks/` at the repository root and are compiled
//! into the library. Programs that declare a parameter `S` scale every
//! length by it, so `load_scaled(name, 10)` is the same problem on a box ten
//! times larger.

use thiserror::Error;

use crate::dsl::{parse, parse_with_params, ParseError, Program};
use crate::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BenchmarkError {
    #[error("unknown benchmark '{0}'")]
    Unknown(String),
    #[error("benchmark '{0}' has no scale parameter")]
    NotScalable(String),
    #[error("benchmark '{name}' does not parse: {source}")]
    Parse { name: String, source: ParseError },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkEntry {
    pub name: &'static str,
    pub file: &'static str,
    /// Depth at which the partition is computed by default.
    pub recommended_depth: usize,
    pub success_threshold: Option<Rational>,
    /// Whether the program takes the scale parameter `S`.
    pub scalable: bool,
    pub notes: &'static str,
}

struct Source {
    name: &'static str,
    file: &'static str,
    text: &'static str,
    depth: usize,
    scalable: bool,
    notes: &'static str,
}

const SOURCES: &[Source] = &[
    Source {
        name: "navigation",
        file: "navigation.env",
        text: include_str!("../../../benchmarks/navigation.env"),
        depth: 12,
        scalable: true,
        notes: "continuous 10x10 room, trap -1000, cheese 0, step -1",
    },
    Source {
        name: "navigation_speeds",
        file: "navigation_speeds.env",
        text: include_str!("../../../benchmarks/navigation_speeds.env"),
        depth: 12,
        scalable: true,
        notes: "navigation with speeds S and 2S in every direction",
    },
    Source {
        name: "simple_maze",
        file: "simple_maze.env",
        text: include_str!("../../../benchmarks/simple_maze.env"),
        depth: 8,
        scalable: true,
        notes: "5x5 integer grid with three walls",
    },
    Source {
        name: "wumpus",
        file: "wumpus.env",
        text: include_str!("../../../benchmarks/wumpus.env"),
        depth: 8,
        scalable: true,
        notes: "6x6 integer grid, pits and wumpus -1000, gold 0",
    },
    Source {
        name: "braking_car",
        file: "braking_car.env",
        text: include_str!("../../../benchmarks/braking_car.env"),
        depth: 8,
        scalable: false,
        notes: "one decision per episode; loop simulates the braking",
    },
    Source {
        name: "mountain_car",
        file: "mountain_car.env",
        text: include_str!("../../../benchmarks/mountain_car.env"),
        depth: 4,
        scalable: false,
        notes: "cosine dynamics; needs the internal backend",
    },
    Source {
        name: "random_walk",
        file: "random_walk.env",
        text: include_str!("../../../benchmarks/random_walk.env"),
        depth: 6,
        scalable: true,
        notes: "uniform step noise, hole left, goal right",
    },
    Source {
        name: "synthetic_one_action",
        file: "synthetic_one_action.env",
        text: include_str!("../../../benchmarks/synthetic_one_action.env"),
        depth: 2,
        scalable: false,
        notes: "single action with one branch",
    },
];

pub fn names() -> Vec<&'static str> {
    SOURCES.iter().map(|s| s.name).collect()
}

fn find(name: &str) -> Result<&'static Source, BenchmarkError> {
    SOURCES
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| BenchmarkError::Unknown(name.to_string()))
}

/// Program text as shipped.
pub fn source(name: &str) -> Result<&'static str, BenchmarkError> {
    find(name).map(|s| s.text)
}

fn entry(s: &Source, p: &Program) -> BenchmarkEntry {
    BenchmarkEntry {
        name: s.name,
        file: s.file,
        recommended_depth: s.depth,
        success_threshold: p.success_threshold.clone(),
        scalable: s.scalable,
        notes: s.notes,
    }
}

pub fn load_benchmark(name: &str) -> Result<(Program, BenchmarkEntry), BenchmarkError> {
    let s = find(name)?;
    let p = parse(s.text).map_err(|source| BenchmarkError::Parse {
        name: name.to_string(),
        source,
    })?;
    let e = entry(s, &p);
    Ok((p, e))
}

/// The benchmark with scale parameter `S` set to `scale`.
pub fn load_scaled(name: &str, scale: i64) -> Result<(Program, BenchmarkEntry), BenchmarkError> {
    let s = find(name)?;
    if !s.scalable {
        return Err(BenchmarkError::NotScalable(name.to_string()));
    }
    let p = parse_with_params(s.text, &[("S", Rational::from_integer(scale.into()))]).map_err(|source| {
        BenchmarkError::Parse {
            name: name.to_string(),
            source,
        }
    })?;
    let e = entry(s, &p);
    Ok((p, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_benchmark_parses() {
        for n in names() {
            let (p, e) = load_benchmark(n).unwrap_or_else(|e| panic!("{e}"));
            assert_eq!(p.name, n);
            assert_eq!(e.name, n);
            if e.scalable {
                load_scaled(n, 10).unwrap();
            }
        }
    }

    #[test]
    fn unknown_and_unscalable() {
        assert_eq!(load_benchmark("nope").unwrap_err(), BenchmarkError::Unknown("nope".into()));
        assert!(matches!(load_scaled("braking_car", 10), Err(BenchmarkError::NotScalable(_))));
    }

    #[test]
    fn navigation_shape() {
        let (p, _) = load_benchmark("navigation").unwrap();
        assert_eq!(p.state_vars.len(), 2);
        assert!(p.state_vars.iter().all(|s| !s.discrete));
        let names: Vec<&str> = p.actions.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["U", "D", "R", "L"]);
        assert!(p.actions.iter().all(|a| a.values[1] == Rational::from_integer(1.into())));
    }

    #[test]
    fn braking_car_shape() {
        let (p, _) = load_benchmark("braking_car").unwrap();
        assert_eq!(p.state_names(), ["p", "v"]);
        assert!(p.state_vars.iter().all(|s| !s.discrete));
    }
}
