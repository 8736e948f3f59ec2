use std::fmt::{self, Write as _};

use num_traits::Signed;

use crate::formula::{fmt_rational, OpKind};
use crate::Rational;

/// A resolved variable occurrence. `slot` indexes the program's variable
/// table: state variables first, then action components, parameters and
/// locals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub name: String,
    pub slot: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(Rational),
    Var(VarRef),
    Neg(Box<Expr>),
    Bin(ArithOp, Box<Expr>, Box<Expr>),
    Call(OpKind, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn holds(self, a: &Rational, b: &Rational) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum BoolExpr {
    Lit(bool),
    Cmp(CmpOp, Expr, Expr),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
}

/// Distribution of a sampling statement. Parameters are constants.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Dist {
    /// Uniform on `[lo, hi]`, `lo < hi`.
    Uniform(Rational, Rational),
    /// One with probability `p`, else zero; realized as a uniform draw on
    /// `[0, 1]` compared against `p`.
    Bernoulli(Rational),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Stmt {
    Skip,
    Assign(VarRef, Expr),
    Sample(VarRef, Dist),
    Seq(Vec<Stmt>),
    If(BoolExpr, Box<Stmt>, Box<Stmt>),
    While(BoolExpr, Box<Stmt>),
}

impl Stmt {
    /// Canonical block: empty is `skip`, a single statement is itself.
    pub fn block(mut stmts: Vec<Stmt>) -> Stmt {
        match stmts.len() {
            0 => Stmt::Skip,
            1 => stmts.pop().unwrap(),
            _ => Stmt::Seq(stmts),
        }
    }

    fn children(&self) -> &[Stmt] {
        match self {
            Stmt::Seq(v) => v,
            other => std::slice::from_ref(other),
        }
    }
}

fn num_literal(r: &Rational) -> String {
    if r.is_negative() || !r.is_integer() {
        format!("({})", fmt_rational(r))
    } else {
        fmt_rational(r)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    match e {
        Expr::Num(r) => f.write_str(&num_literal(r)),
        Expr::Var(v) => f.write_str(&v.name),
        Expr::Call(k, a) => {
            write!(f, "{}(", k.name())?;
            write_expr(f, a, 0)?;
            f.write_str(")")
        }
        Expr::Neg(a) => {
            if min_prec > 2 {
                f.write_str("(")?;
            }
            f.write_str("-")?;
            write_expr(f, a, 3)?;
            if min_prec > 2 {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::Bin(op, a, b) => {
            let p = op.precedence();
            if p < min_prec {
                f.write_str("(")?;
            }
            write_expr(f, a, p)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(f, b, p + 1)?;
            if p < min_prec {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_bool(f, self, 0)
    }
}

/// Precedence: or 0, and 1, not 2, atoms 3.
fn write_bool(f: &mut fmt::Formatter<'_>, b: &BoolExpr, min_prec: u8) -> fmt::Result {
    let (prec, open) = match b {
        BoolExpr::Or(..) => (0, min_prec > 0),
        BoolExpr::And(..) => (1, min_prec > 1),
        BoolExpr::Not(..) => (2, min_prec > 2),
        _ => (3, false),
    };
    let _ = prec;
    if open {
        f.write_str("(")?;
    }
    match b {
        BoolExpr::Lit(true) => f.write_str("true")?,
        BoolExpr::Lit(false) => f.write_str("false")?,
        BoolExpr::Cmp(op, x, y) => write!(f, "{} {} {}", x, op.symbol(), y)?,
        BoolExpr::Or(x, y) => {
            write_bool(f, x, 0)?;
            f.write_str(" or ")?;
            write_bool(f, y, 1)?;
        }
        BoolExpr::And(x, y) => {
            write_bool(f, x, 1)?;
            f.write_str(" and ")?;
            write_bool(f, y, 2)?;
        }
        BoolExpr::Not(x) => {
            f.write_str("not ")?;
            write_bool(f, x, 2)?;
        }
    }
    if open {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Uniform(a, b) => write!(f, "uniform({}, {})", num_literal(a), num_literal(b)),
            Dist::Bernoulli(p) => write!(f, "bernoulli({})", num_literal(p)),
        }
    }
}

pub(crate) fn write_block(out: &mut String, s: &Stmt, indent: usize) {
    for stmt in s.children() {
        write_stmt(out, stmt, indent);
    }
}

fn write_stmt(out: &mut String, s: &Stmt, indent: usize) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Skip => {
            let _ = writeln!(out, "{pad}skip");
        }
        Stmt::Assign(v, e) => {
            let _ = writeln!(out, "{pad}{} = {}", v.name, e);
        }
        Stmt::Sample(v, d) => {
            let _ = writeln!(out, "{pad}{} ~ {}", v.name, d);
        }
        Stmt::Seq(_) => write_block(out, s, indent),
        Stmt::If(c, t, e) => {
            let _ = writeln!(out, "{pad}if {c}:");
            write_block(out, t, indent + 1);
            let mut tail = e.as_ref();
            while let Stmt::If(c2, t2, e2) = tail {
                let _ = writeln!(out, "{pad}elif {c2}:");
                write_block(out, t2, indent + 1);
                tail = e2;
            }
            if *tail != Stmt::Skip {
                let _ = writeln!(out, "{pad}else:");
                write_block(out, tail, indent + 1);
            }
            let _ = writeln!(out, "{pad}end");
        }
        Stmt::While(c, body) => {
            let _ = writeln!(out, "{pad}while {c}:");
            write_block(out, body, indent + 1);
            let _ = writeln!(out, "{pad}end");
        }
    }
}
