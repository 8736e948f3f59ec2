//! Lexer and recursive-descent parser for `.env` programs.
//!
//! Name resolution and definite-assignment checking happen while parsing, so
//! every diagnostic carries the position of the offending token.

use std::collections::{BTreeSet, HashMap};

use num_traits::{One, Zero};

use super::ast::{ArithOp, BoolExpr, CmpOp, Dist, Expr, Stmt, VarRef};
use super::{Action, InitSpec, ParseError, Program, StateVar};
use crate::formula::{Formula, OpKind, Rel, Term, Var};
use crate::Rational;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(Rational),
    Sym(&'static str),
    Newline,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: &[&str] = &[
    "==", "!=", "<=", ">=", "<", ">", "=", "+", "-", "*", "/", "(", ")", "[", "]", ",", ":", "~", ";",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in src.lines().enumerate() {
        let line_no = lineno + 1;
        let code = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        let chars: Vec<char> = code.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    line: line_no,
                    col,
                });
            } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value = parse_decimal(&text).ok_or_else(|| ParseError {
                    line: line_no,
                    col,
                    message: format!("malformed number '{text}'"),
                })?;
                out.push(Token {
                    tok: Tok::Num(value),
                    line: line_no,
                    col,
                });
            } else {
                let rest: String = chars[i..].iter().take(2).collect();
                let sym = SYMBOLS.iter().find(|s| rest.starts_with(**s)).ok_or_else(|| ParseError {
                    line: line_no,
                    col,
                    message: format!("unexpected character '{c}'"),
                })?;
                i += sym.len();
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line: line_no,
                    col,
                });
            }
        }
        out.push(Token {
            tok: Tok::Newline,
            line: line_no,
            col: chars.len() + 1,
        });
    }
    let last = src.lines().count().max(1);
    out.push(Token {
        tok: Tok::Eof,
        line: last,
        col: 1,
    });
    Ok(out)
}

pub(crate) fn parse_decimal(text: &str) -> Option<Rational> {
    let (int, frac) = match text.split_once('.') {
        Some((a, b)) => (a, b),
        None => (text, ""),
    };
    if frac.contains('.') {
        return None;
    }
    let digits = format!("{int}{frac}");
    let numer: num_bigint::BigInt = if digits.is_empty() {
        return None;
    } else {
        digits.parse().ok()?
    };
    let denom = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
    Some(Rational::new(numer, denom))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum SlotKind {
    State,
    Action,
    Param,
    Local,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    slots: Vec<String>,
    kinds: Vec<SlotKind>,
    by_name: HashMap<String, usize>,
    params: HashMap<String, Rational>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser {
            toks,
            pos: 0,
            slots: Vec::new(),
            kinds: Vec::new(),
            by_name: HashMap::new(),
            params: HashMap::new(),
        }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError {
            line,
            col,
            message: message.into(),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected '{s}', found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(format!("expected '{kw}', found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline) || self.is_sym(";") {
            self.bump();
        }
    }

    fn end_of_line(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline | Tok::Eof => {
                self.skip_newlines();
                Ok(())
            }
            other => {
                let d = describe(other);
                self.err(format!("expected end of line, found {d}"))
            }
        }
    }

    fn declare(&mut self, name: &str, kind: SlotKind) -> PResult<usize> {
        if self.by_name.contains_key(name) {
            return self.err(format!("'{name}' is declared twice"));
        }
        let slot = self.slots.len();
        self.slots.push(name.to_string());
        self.kinds.push(kind);
        self.by_name.insert(name.to_string(), slot);
        Ok(slot)
    }

    // ----- constant expressions (params, bounds, tuples) -----

    fn const_expr(&mut self) -> PResult<Rational> {
        let e = self.expr(&ConstScope)?;
        match e {
            Expr::Num(r) => Ok(r),
            _ => self.err("expected a constant expression"),
        }
    }

    // ----- arithmetic -----

    fn expr(&mut self, scope: &dyn Scope) -> PResult<Expr> {
        let mut lhs = self.term(scope)?;
        loop {
            let op = if self.is_sym("+") {
                ArithOp::Add
            } else if self.is_sym("-") {
                ArithOp::Sub
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.term(scope)?;
            lhs = fold_bin(op, lhs, rhs);
        }
    }

    fn term(&mut self, scope: &dyn Scope) -> PResult<Expr> {
        let mut lhs = self.unary(scope)?;
        loop {
            let op = if self.is_sym("*") {
                ArithOp::Mul
            } else if self.is_sym("/") {
                ArithOp::Div
            } else {
                return Ok(lhs);
            };
            self.bump();
            let rhs = self.unary(scope)?;
            lhs = fold_bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self, scope: &dyn Scope) -> PResult<Expr> {
        if self.eat_sym("-") {
            let inner = self.unary(scope)?;
            return Ok(match inner {
                Expr::Num(r) => Expr::Num(-r),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.atom(scope)
    }

    fn atom(&mut self, scope: &dyn Scope) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(r) => {
                self.bump();
                Ok(Expr::Num(r))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr(scope)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(op) = OpKind::from_name(&name) {
                    if matches!(self.peek_at(1), Tok::Sym("(")) {
                        self.bump();
                        self.bump();
                        let arg = self.expr(scope)?;
                        self.expect_sym(")")?;
                        return Ok(Expr::Call(op, Box::new(arg)));
                    }
                }
                if is_reserved(&name) {
                    return self.err(format!("unexpected keyword '{name}'"));
                }
                if let Some(v) = self.params.get(&name).cloned() {
                    if scope.inline_params() {
                        self.bump();
                        return Ok(Expr::Num(v));
                    }
                }
                match scope.lookup(self, &name) {
                    Some(var) => {
                        self.bump();
                        Ok(Expr::Var(var))
                    }
                    None => self.err(format!("unbound variable {name} at line {}", self.here().0)),
                }
            }
            other => self.err(format!("expected expression, found {}", describe(&other))),
        }
    }

    // ----- booleans -----

    fn bool_expr(&mut self, scope: &dyn Scope) -> PResult<BoolExpr> {
        let mut lhs = self.bool_and(scope)?;
        while self.eat_kw("or") {
            let rhs = self.bool_and(scope)?;
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn bool_and(&mut self, scope: &dyn Scope) -> PResult<BoolExpr> {
        let mut lhs = self.bool_not(scope)?;
        while self.eat_kw("and") {
            let rhs = self.bool_not(scope)?;
            lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn bool_not(&mut self, scope: &dyn Scope) -> PResult<BoolExpr> {
        if self.eat_kw("not") {
            let inner = self.bool_not(scope)?;
            return Ok(BoolExpr::Not(Box::new(inner)));
        }
        self.bool_atom(scope)
    }

    fn bool_atom(&mut self, scope: &dyn Scope) -> PResult<BoolExpr> {
        if self.eat_kw("true") {
            return Ok(BoolExpr::Lit(true));
        }
        if self.eat_kw("false") {
            return Ok(BoolExpr::Lit(false));
        }
        if self.is_sym("(") {
            // Either a parenthesized condition or the start of an arithmetic
            // comparison; try the former and fall back.
            let save = self.pos;
            self.bump();
            if let Ok(inner) = self.bool_expr(scope) {
                if self.eat_sym(")") && !self.at_arith_continuation() {
                    return Ok(inner);
                }
            }
            self.pos = save;
        }
        let lhs = self.expr(scope)?;
        let op = match self.peek() {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            other => {
                let d = describe(other);
                return self.err(format!("expected comparison operator, found {d}"));
            }
        };
        self.bump();
        let rhs = self.expr(scope)?;
        Ok(BoolExpr::Cmp(op, lhs, rhs))
    }

    fn at_arith_continuation(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Sym("+" | "-" | "*" | "/" | "<" | "<=" | ">" | ">=" | "==" | "!=")
        )
    }

    // ----- statements -----

    fn block(&mut self, defined: &mut BTreeSet<usize>) -> PResult<Stmt> {
        let mut stmts = Vec::new();
        loop {
            self.skip_newlines();
            if self.is_kw("end") || self.is_kw("else") || self.is_kw("elif") || matches!(self.peek(), Tok::Eof) {
                return Ok(Stmt::block(stmts));
            }
            stmts.push(self.stmt(defined)?);
        }
    }

    fn stmt(&mut self, defined: &mut BTreeSet<usize>) -> PResult<Stmt> {
        if self.eat_kw("skip") {
            return Ok(Stmt::Skip);
        }
        if self.eat_kw("if") {
            return self.if_rest(defined);
        }
        if self.eat_kw("while") {
            let cond = self.bool_expr(&BodyScope(defined))?;
            self.expect_sym(":")?;
            let mut inner = defined.clone();
            let body = self.block(&mut inner)?;
            self.expect_kw("end")?;
            return Ok(Stmt::While(cond, Box::new(body)));
        }
        let name = self.ident()?;
        if self.eat_sym("=") {
            let e = self.expr(&BodyScope(defined))?;
            let var = self.assign_target(&name)?;
            defined.insert(var.slot);
            return Ok(Stmt::Assign(var, e));
        }
        if self.eat_sym("~") {
            let dist = self.dist()?;
            let var = self.assign_target(&name)?;
            defined.insert(var.slot);
            return Ok(Stmt::Sample(var, dist));
        }
        self.err(format!("expected '=' or '~' after '{name}'"))
    }

    fn if_rest(&mut self, defined: &mut BTreeSet<usize>) -> PResult<Stmt> {
        let cond = self.bool_expr(&BodyScope(defined))?;
        self.expect_sym(":")?;
        let mut then_defs = defined.clone();
        let then_branch = self.block(&mut then_defs)?;
        let mut else_defs = defined.clone();
        let else_branch = if self.eat_kw("elif") {
            // The nested chain consumes the shared `end`.
            return {
                let nested = self.if_rest(&mut else_defs)?;
                *defined = then_defs.intersection(&else_defs).copied().collect();
                Ok(Stmt::If(cond, Box::new(then_branch), Box::new(nested)))
            };
        } else if self.eat_kw("else") {
            self.expect_sym(":")?;
            self.block(&mut else_defs)?
        } else {
            Stmt::Skip
        };
        self.expect_kw("end")?;
        *defined = then_defs.intersection(&else_defs).copied().collect();
        Ok(Stmt::If(cond, Box::new(then_branch), Box::new(else_branch)))
    }

    fn assign_target(&mut self, name: &str) -> PResult<VarRef> {
        match self.by_name.get(name) {
            Some(&slot) => match self.kinds[slot] {
                SlotKind::State | SlotKind::Local => Ok(VarRef {
                    name: name.to_string(),
                    slot,
                }),
                SlotKind::Action => self.err(format!("cannot assign to action component '{name}'")),
                SlotKind::Param => self.err(format!("cannot assign to parameter '{name}'")),
            },
            None => {
                let slot = self.declare(name, SlotKind::Local)?;
                Ok(VarRef {
                    name: name.to_string(),
                    slot,
                })
            }
        }
    }

    fn dist(&mut self) -> PResult<Dist> {
        let name = match self.peek().clone() {
            Tok::Ident(n) => n,
            other => return self.err(format!("expected distribution, found {}", describe(&other))),
        };
        self.bump();
        self.expect_sym("(")?;
        let d = match name.as_str() {
            "uniform" => {
                let lo = self.const_expr()?;
                self.expect_sym(",")?;
                let hi = self.const_expr()?;
                if lo >= hi {
                    return self.err("uniform(lo, hi) needs lo < hi");
                }
                Dist::Uniform(lo, hi)
            }
            "bernoulli" => {
                let p = self.const_expr()?;
                if p < Rational::zero() || p > Rational::one() {
                    return self.err("bernoulli(p) needs 0 <= p <= 1");
                }
                Dist::Bernoulli(p)
            }
            other => return self.err(format!("unknown distribution '{other}'")),
        };
        self.expect_sym(")")?;
        Ok(d)
    }

    fn tuple(&mut self) -> PResult<Vec<Rational>> {
        self.expect_sym("(")?;
        let mut vals = vec![self.const_expr()?];
        while self.eat_sym(",") {
            vals.push(self.const_expr()?);
        }
        self.expect_sym(")")?;
        Ok(vals)
    }

    fn var_list(&mut self) -> PResult<Vec<String>> {
        let mut names = vec![self.ident()?];
        while self.eat_sym(",") {
            names.push(self.ident()?);
        }
        Ok(names)
    }

    fn program(&mut self) -> PResult<Program> {
        self.skip_newlines();
        self.expect_kw("env")?;
        let name = self.ident()?;
        self.end_of_line()?;

        let mut state_vars: Vec<StateVar> = Vec::new();
        let mut action_vars: Vec<String> = Vec::new();
        let mut actions: Vec<Action> = Vec::new();
        let mut params: Vec<(String, Rational)> = Vec::new();
        let mut init = InitSpec::Uniform;
        let mut success = None;

        // Declarations are collected first; slots are laid out once the body
        // starts (state, action components, parameters, then locals).
        loop {
            if self.eat_kw("param") {
                let n = self.ident()?;
                self.expect_sym("=")?;
                let v = self.const_expr()?;
                if self.params.contains_key(&n) {
                    return self.err(format!("'{n}' is declared twice"));
                }
                self.params.insert(n.clone(), v.clone());
                params.push((n, v));
            } else if self.eat_kw("state") {
                let n = self.ident()?;
                let discrete = if self.eat_kw("int") {
                    true
                } else {
                    self.expect_kw("real")?;
                    false
                };
                self.expect_kw("in")?;
                self.expect_sym("[")?;
                let lower = self.const_expr()?;
                self.expect_sym(",")?;
                let upper = self.const_expr()?;
                self.expect_sym("]")?;
                if lower >= upper {
                    return self.err(format!("degenerate bounds for state variable '{n}'"));
                }
                state_vars.push(StateVar {
                    name: n,
                    lower,
                    upper,
                    discrete,
                });
            } else if self.eat_kw("action_vars") {
                if !action_vars.is_empty() {
                    return self.err("action_vars declared twice");
                }
                action_vars = self.var_list()?;
            } else if self.eat_kw("action") {
                let n = self.ident()?;
                self.expect_sym("=")?;
                let values = self.tuple()?;
                if values.len() != action_vars.len() {
                    return self.err(format!(
                        "action arity mismatch: '{n}' has {} components, expected {}",
                        values.len(),
                        action_vars.len()
                    ));
                }
                if actions.iter().any(|a| a.name == n) {
                    return self.err(format!("action '{n}' declared twice"));
                }
                actions.push(Action { name: n, values });
            } else if self.eat_kw("init") {
                let vals = self.tuple()?;
                init = InitSpec::Fixed(vals);
            } else if self.eat_kw("success") {
                self.expect_kw("reward")?;
                self.expect_sym(">=")?;
                success = Some(self.const_expr()?);
            } else {
                break;
            }
            self.end_of_line()?;
        }
        if state_vars.is_empty() {
            return self.err("program declares no state variables");
        }
        if actions.is_empty() {
            return self.err("program declares no actions");
        }
        if let InitSpec::Fixed(vals) = &init {
            if vals.len() != state_vars.len() {
                return self.err("init tuple does not match the number of state variables");
            }
            for (v, sv) in vals.iter().zip(&state_vars) {
                if *v < sv.lower || *v > sv.upper {
                    return self.err(format!("init value for '{}' is outside its bounds", sv.name));
                }
            }
        }

        for sv in &state_vars {
            self.declare(&sv.name, SlotKind::State)?;
        }
        for av in &action_vars {
            self.declare(av, SlotKind::Action)?;
        }
        for (pn, _) in &params {
            self.declare(pn, SlotKind::Param)?;
        }

        self.expect_kw("body")?;
        self.end_of_line()?;
        let mut defined: BTreeSet<usize> = (0..self.slots.len()).collect();
        let body = self.block(&mut defined)?;
        self.expect_kw("end")?;
        self.end_of_line()?;

        self.expect_kw("next")?;
        self.expect_sym("(")?;
        let next_names = self.var_list()?;
        self.expect_sym(")")?;
        self.end_of_line()?;
        if next_names.len() != state_vars.len() {
            return self.err("next tuple does not match the number of state variables");
        }
        let next = next_names
            .iter()
            .map(|n| self.output_ref(n, &defined))
            .collect::<PResult<Vec<_>>>()?;
        self.expect_kw("reward")?;
        let rn = self.ident()?;
        let reward = self.output_ref(&rn, &defined)?;
        self.end_of_line()?;
        self.expect_kw("done")?;
        let dn = self.ident()?;
        let done = self.output_ref(&dn, &defined)?;
        self.end_of_line()?;
        if !matches!(self.peek(), Tok::Eof) {
            return self.err(format!("unexpected {} after program", describe(self.peek())));
        }

        Ok(Program {
            name,
            params,
            state_vars,
            action_vars,
            actions,
            init,
            success_threshold: success,
            body,
            next,
            reward,
            done,
            slot_names: self.slots.clone(),
        })
    }

    fn output_ref(&self, name: &str, defined: &BTreeSet<usize>) -> PResult<VarRef> {
        match self.by_name.get(name) {
            Some(&slot) if defined.contains(&slot) => Ok(VarRef {
                name: name.to_string(),
                slot,
            }),
            Some(_) => self.err(format!("output '{name}' is not assigned on every path")),
            None => self.err(format!("unbound variable {name} at line {}", self.here().0)),
        }
    }
}

/// Variable resolution context for expressions.
trait Scope {
    fn lookup(&self, p: &Parser, name: &str) -> Option<VarRef>;
    fn inline_params(&self) -> bool {
        false
    }
}

struct ConstScope;

impl Scope for ConstScope {
    fn lookup(&self, _: &Parser, _: &str) -> Option<VarRef> {
        None
    }
    fn inline_params(&self) -> bool {
        true
    }
}

struct BodyScope<'a>(&'a BTreeSet<usize>);

impl Scope for BodyScope<'_> {
    fn lookup(&self, p: &Parser, name: &str) -> Option<VarRef> {
        let slot = *p.by_name.get(name)?;
        self.0.contains(&slot).then(|| VarRef {
            name: name.to_string(),
            slot,
        })
    }
}

fn fold_bin(op: ArithOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        match op {
            ArithOp::Add => return Expr::Num(x + y),
            ArithOp::Sub => return Expr::Num(x - y),
            ArithOp::Mul => return Expr::Num(x * y),
            ArithOp::Div if !y.is_zero() => return Expr::Num(x / y),
            ArithOp::Div => {}
        }
    }
    Expr::Bin(op, Box::new(a), Box::new(b))
}

const RESERVED: &[&str] = &[
    "if", "elif", "else", "end", "while", "skip", "and", "or", "not", "true", "false", "env", "param",
    "state", "action", "action_vars", "init", "success", "body", "next", "reward", "done", "real",
    "int", "in",
];

fn is_reserved(s: &str) -> bool {
    RESERVED.contains(&s)
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Num(r) => format!("number {r}"),
        Tok::Sym(s) => format!("'{s}'"),
        Tok::Newline => "end of line".into(),
        Tok::Eof => "end of file".into(),
    }
}

pub fn parse(source: &str) -> Result<Program, ParseError> {
    let toks = lex(source)?;
    Parser::new(toks).program()
}

/// Parses `source` after overriding the listed parameters. Bounds, action
/// tuples and constants that mention a parameter follow the override.
pub fn parse_with_params(source: &str, overrides: &[(&str, Rational)]) -> Result<Program, ParseError> {
    let toks = lex(source)?;
    let mut out = Vec::with_capacity(toks.len());
    let mut i = 0;
    // Rewrite `param NAME = <expr>` lines for overridden names.
    while i < toks.len() {
        let is_param_line = matches!(&toks[i].tok, Tok::Ident(k) if k == "param")
            && (i == 0 || matches!(toks[i - 1].tok, Tok::Newline));
        if is_param_line {
            if let Some(Tok::Ident(name)) = toks.get(i + 1).map(|t| &t.tok) {
                if let Some((_, v)) = overrides.iter().find(|(n, _)| n == name) {
                    out.push(toks[i].clone());
                    out.push(toks[i + 1].clone());
                    let mut j = i + 2;
                    let eq = toks.get(j).cloned();
                    if let Some(eq) = eq {
                        out.push(eq);
                        j += 1;
                    }
                    let (line, col) = toks.get(j).map(|t| (t.line, t.col)).unwrap_or((0, 0));
                    out.push(Token {
                        tok: Tok::Num(v.clone()),
                        line,
                        col,
                    });
                    while j < toks.len() && !matches!(toks[j].tok, Tok::Newline | Tok::Eof) {
                        j += 1;
                    }
                    i = j;
                    continue;
                }
            }
        }
        out.push(toks[i].clone());
        i += 1;
    }
    for (name, _) in overrides {
        let declared = toks.windows(2).any(|w| {
            matches!(&w[0].tok, Tok::Ident(k) if k == "param") && matches!(&w[1].tok, Tok::Ident(n) if n == name)
        });
        if !declared {
            return Err(ParseError {
                line: 1,
                col: 1,
                message: format!("no parameter named '{name}' to override"),
            });
        }
    }
    Parser::new(out).program()
}

/// Parses a condition over the given state variable names into a formula.
pub fn parse_formula(text: &str, state_names: &[String]) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser::new(toks);
    for n in state_names {
        p.declare(n, SlotKind::State)?;
    }
    let defined: BTreeSet<usize> = (0..state_names.len()).collect();
    let b = p.bool_expr(&BodyScope(&defined))?;
    p.skip_newlines();
    if !matches!(p.peek(), Tok::Eof) {
        return p.err(format!("unexpected {} after formula", describe(p.peek())));
    }
    Ok(bool_to_formula(&b, &|v| Term::Var(Var::State(v.slot as u32))).normalize())
}

/// Converts an arithmetic expression, replacing each variable via `lookup`.
pub fn expr_to_term(e: &Expr, lookup: &dyn Fn(&VarRef) -> Term) -> Term {
    match e {
        Expr::Num(r) => Term::Const(r.clone()),
        Expr::Var(v) => lookup(v),
        Expr::Neg(a) => Term::neg(expr_to_term(a, lookup)),
        Expr::Bin(op, a, b) => {
            let (x, y) = (expr_to_term(a, lookup), expr_to_term(b, lookup));
            match op {
                ArithOp::Add => Term::add(x, y),
                ArithOp::Sub => Term::sub(x, y),
                ArithOp::Mul => Term::mul(x, y),
                ArithOp::Div => Term::div(x, y),
            }
        }
        Expr::Call(k, a) => Term::op(*k, expr_to_term(a, lookup)),
    }
}

pub fn bool_to_formula(b: &BoolExpr, lookup: &dyn Fn(&VarRef) -> Term) -> Formula {
    match b {
        BoolExpr::Lit(v) => Formula::constant(*v),
        BoolExpr::Cmp(op, x, y) => {
            let (tx, ty) = (expr_to_term(x, lookup), expr_to_term(y, lookup));
            match op {
                CmpOp::Lt => Formula::compare(tx, Rel::Lt, ty),
                CmpOp::Le => Formula::compare(tx, Rel::Le, ty),
                CmpOp::Gt => Formula::compare(ty, Rel::Lt, tx),
                CmpOp::Ge => Formula::compare(ty, Rel::Le, tx),
                CmpOp::Eq => Formula::compare(tx, Rel::Eq, ty),
                CmpOp::Ne => Formula::Not(Box::new(Formula::compare(tx, Rel::Eq, ty))),
            }
        }
        BoolExpr::And(x, y) => Formula::And(vec![bool_to_formula(x, lookup), bool_to_formula(y, lookup)]),
        BoolExpr::Or(x, y) => Formula::Or(vec![bool_to_formula(x, lookup), bool_to_formula(y, lookup)]),
        BoolExpr::Not(x) => Formula::Not(Box::new(bool_to_formula(x, lookup))),
    }
}
