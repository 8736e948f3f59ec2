//! SMT-LIB v2 encoding and the external solver process.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use num_traits::{Signed, Zero};
use wait_timeout::ChildExt;

use super::sexpr::{parse_all, Sexp};
use super::{Model, SatResult, SolverError};
use crate::dsl::parse::parse_decimal;
use crate::formula::{Atom, AtomTerm, Formula, Rel, Term, Var};
use crate::Rational;

fn var_name(v: Var) -> String {
    match v {
        Var::State(i) => format!("s{i}"),
        Var::Sample(k) => format!("y{k}"),
    }
}

fn name_to_var(name: &str) -> Option<Var> {
    let (head, rest) = name.split_at(1);
    let n: u32 = rest.parse().ok()?;
    match head {
        "s" => Some(Var::State(n)),
        "y" => Some(Var::Sample(n)),
        _ => None,
    }
}

fn literal(r: &Rational) -> String {
    let mag = r.abs();
    let body = if mag.is_integer() {
        format!("{}.0", mag.numer())
    } else {
        format!("(/ {}.0 {}.0)", mag.numer(), mag.denom())
    };
    if r.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

struct Encoder<'a> {
    ints: &'a BTreeSet<Var>,
}

impl Encoder<'_> {
    fn var(&self, v: Var) -> String {
        if self.ints.contains(&v) {
            format!("(to_real {})", var_name(v))
        } else {
            var_name(v)
        }
    }

    fn term(&self, t: &Term, out: &mut String) {
        match t {
            Term::Const(c) => out.push_str(&literal(c)),
            Term::Var(v) => out.push_str(&self.var(*v)),
            Term::Add(a, b) => self.binary("+", a, b, out),
            Term::Sub(a, b) => self.binary("-", a, b, out),
            Term::Mul(a, b) => self.binary("*", a, b, out),
            Term::Div(a, b) => self.binary("/", a, b, out),
            Term::Neg(a) => {
                out.push_str("(- ");
                self.term(a, out);
                out.push(')');
            }
            Term::Op(k, a) => {
                let _ = write!(out, "({} ", k.name());
                self.term(a, out);
                out.push(')');
            }
        }
    }

    fn binary(&self, op: &str, a: &Term, b: &Term, out: &mut String) {
        let _ = write!(out, "({op} ");
        self.term(a, out);
        out.push(' ');
        self.term(b, out);
        out.push(')');
    }

    fn atom(&self, a: &Atom, out: &mut String) {
        let _ = write!(out, "({} ", match a.rel {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
        });
        match &a.lhs {
            AtomTerm::Linear(l) => {
                let mut parts = Vec::new();
                for (v, c) in &l.coeffs {
                    parts.push(format!("(* {} {})", literal(c), self.var(*v)));
                }
                if !l.constant.is_zero() || parts.is_empty() {
                    parts.push(literal(&l.constant));
                }
                if parts.len() == 1 {
                    out.push_str(&parts[0]);
                } else {
                    let _ = write!(out, "(+ {})", parts.join(" "));
                }
            }
            AtomTerm::Nonlinear(t) => self.term(t, out),
        }
        out.push_str(" 0.0)");
    }

    fn formula(&self, f: &Formula, out: &mut String) {
        match f {
            Formula::True => out.push_str("true"),
            Formula::False => out.push_str("false"),
            Formula::Atom(a) => self.atom(a, out),
            Formula::And(fs) | Formula::Or(fs) if fs.is_empty() => {
                out.push_str(if matches!(f, Formula::And(_)) { "true" } else { "false" })
            }
            Formula::And(fs) | Formula::Or(fs) => {
                out.push_str(if matches!(f, Formula::And(_)) { "(and" } else { "(or" });
                for g in fs {
                    out.push(' ');
                    self.formula(g, out);
                }
                out.push(')');
            }
            Formula::Not(g) => {
                out.push_str("(not ");
                self.formula(g, out);
                out.push(')');
            }
        }
    }
}

/// The query sent to the solver: declarations, one assertion, `check-sat`
/// and `get-model`. Variables in `ints` are declared `Int`.
pub fn script(f: &Formula, ints: &BTreeSet<Var>) -> String {
    let vars = f.vars();
    let has_int = vars.iter().any(|v| ints.contains(v));
    let logic = match (f.is_linear(), has_int) {
        (true, false) => "QF_LRA",
        (false, false) => "QF_NRA",
        (true, true) => "QF_LIRA",
        (false, true) => "QF_NIRA",
    };
    let mut out = String::new();
    out.push_str("(set-option :produce-models true)\n");
    out.push_str("(set-option :smt.random_seed 0)\n");
    let _ = writeln!(out, "(set-logic {logic})");
    for v in &vars {
        let sort = if ints.contains(v) { "Int" } else { "Real" };
        let _ = writeln!(out, "(declare-const {} {sort})", var_name(*v));
    }
    let enc = Encoder { ints };
    out.push_str("(assert ");
    enc.formula(f, &mut out);
    out.push_str(")\n(check-sat)\n(get-model)\n(exit)\n");
    out
}

/// Runs the solver on `input`. `Ok(None)` means the timeout expired.
fn run(command: &[String], timeout: Duration, input: &str) -> Result<Option<String>, SolverError> {
    let spawn_err = |e: std::io::Error| SolverError::Spawn {
        command: command.join(" "),
        reason: e.to_string(),
    };
    let mut child = Command::new(&command[0])
        .args(&command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(spawn_err)?;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        stdout.read_to_string(&mut s).map(|_| s)
    });
    {
        let mut stdin = child.stdin.take().expect("piped stdin");
        stdin
            .write_all(input.as_bytes())
            .map_err(|e| SolverError::Io(e.to_string()))?;
    }
    let status = child
        .wait_timeout(timeout)
        .map_err(|e| SolverError::Io(e.to_string()))?;
    if status.is_none() {
        let _ = child.kill();
        let _ = child.wait();
        let _ = reader.join();
        return Ok(None);
    }
    let text = reader
        .join()
        .map_err(|_| SolverError::Io("reader thread panicked".into()))?
        .map_err(|e| SolverError::Io(e.to_string()))?;
    Ok(Some(text))
}

fn value(s: &Sexp) -> Option<Rational> {
    match s {
        Sexp::Atom(a) => parse_decimal(a),
        Sexp::List(items) => {
            let head = items.first()?.as_atom()?;
            match (head, items.len()) {
                ("-", 2) => Some(-value(&items[1])?),
                ("-", 3) => Some(value(&items[1])? - value(&items[2])?),
                ("/", 3) => {
                    let d = value(&items[2])?;
                    (!d.is_zero()).then(|| value(&items[1]).map(|n| n / d))?
                }
                ("to_real", 2) => value(&items[1]),
                _ => None,
            }
        }
    }
}

fn parse_model(s: &Sexp) -> Model {
    let mut model = Model::new();
    let mut defs = s.as_list().unwrap_or(&[]);
    if defs.first().and_then(Sexp::as_atom) == Some("model") {
        defs = &defs[1..];
    }
    for d in defs {
        let Some(items) = d.as_list() else { continue };
        if items.len() != 5 || items[0].as_atom() != Some("define-fun") {
            continue;
        }
        let (Some(name), Some(v)) = (items[1].as_atom(), value(&items[4])) else {
            continue;
        };
        if let Some(var) = name_to_var(name) {
            model.insert(var, v);
        }
    }
    model
}

/// Interprets a complete solver transcript.
pub(super) fn parse_reply(text: &str, f: &Formula) -> Result<SatResult, SolverError> {
    let items = parse_all(text).map_err(SolverError::Malformed)?;
    let first = items.first().ok_or_else(|| SolverError::Malformed("empty reply".into()))?;
    match first {
        Sexp::Atom(a) if a == "unsat" => Ok(SatResult::Unsat),
        Sexp::Atom(a) if a == "unknown" => Ok(SatResult::Unknown),
        Sexp::Atom(a) if a == "sat" => {
            let mut model = items.get(1).map(parse_model).unwrap_or_default();
            for v in f.vars() {
                model.entry(v).or_insert_with(Rational::zero);
            }
            // A model we cannot read back exactly is not trusted.
            if f.eval(&model) == Ok(true) {
                Ok(SatResult::Sat(model))
            } else {
                Ok(SatResult::Unknown)
            }
        }
        Sexp::List(l) if l.first().and_then(Sexp::as_atom) == Some("error") => {
            let msg = l.get(1).and_then(Sexp::as_atom).unwrap_or("").trim_matches('"');
            Err(SolverError::Backend(msg.to_string()))
        }
        other => Err(SolverError::Malformed(format!("unexpected {other:?}"))),
    }
}

pub(super) fn check_sat(
    f: &Formula,
    ints: &BTreeSet<Var>,
    command: &[String],
    timeout: Duration,
) -> Result<SatResult, SolverError> {
    match f {
        Formula::True if ints.is_empty() => return Ok(SatResult::Sat(Model::new())),
        Formula::False => return Ok(SatResult::Unsat),
        _ => {}
    }
    let input = script(f, ints);
    match run(command, timeout, &input)? {
        None => Ok(SatResult::Unknown),
        Some(text) => parse_reply(&text, f),
    }
}
