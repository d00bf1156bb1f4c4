//! A small arithmetic expression language for game coefficients.
//!
//! Coefficients `b`, `sigma`, `f` and `phi` are written as strings such as
//! `"exp(-(1-t)/2)*cos(x1)"`. Each coefficient slot declares which variables
//! it may reference; parsing rejects anything outside that set.
//!
//! Grammar (whitespace-insensitive, left associative):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | atom
//! atom    := number | ident | ident '(' sum (',' sum)* ')' | '(' sum ')'
//! ```

use std::fmt;

use thiserror::Error;

/// A variable reference. Indices are zero-based (`x1` is `X(0)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    X(usize),
    Y,
    Z(usize),
    U(usize),
    V(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => write!(f, "t"),
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y => write!(f, "y"),
            Var::Z(i) => write!(f, "z{}", i + 1),
            Var::U(i) => write!(f, "u{}", i + 1),
            Var::V(i) => write!(f, "v{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Min,
    Max,
    Sqrt,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// The set of variables a coefficient slot may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VarSet {
    pub t: bool,
    pub x: usize,
    pub y: bool,
    pub z: usize,
    pub u: usize,
    pub v: usize,
}

impl VarSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Variables of drift and diffusion entries: `t, x, u, v`.
    pub fn dynamics(d: usize, qu: usize, qv: usize) -> Self {
        VarSet { t: true, x: d, y: false, z: 0, u: qu, v: qv }
    }

    /// Variables of the running payoff: `t, x, y, z, u, v`.
    pub fn running(d: usize, qu: usize, qv: usize) -> Self {
        VarSet { t: true, x: d, y: true, z: d, u: qu, v: qv }
    }

    /// Variables of the terminal payoff: `x` only.
    pub fn terminal(d: usize) -> Self {
        VarSet { x: d, ..Self::default() }
    }

    pub fn contains(&self, var: Var) -> bool {
        match var {
            Var::T => self.t,
            Var::X(i) => i < self.x,
            Var::Y => self.y,
            Var::Z(i) => i < self.z,
            Var::U(i) => i < self.u,
            Var::V(i) => i < self.v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{func}` takes {expected} argument(s), got {found} (byte {offset})")]
    Arity { func: &'static str, expected: usize, found: usize, offset: usize },
    #[error("variable `{0}` is not bound")]
    Unbound(Var),
    #[error("domain error in `{expr}`: {message}")]
    Domain { expr: String, message: String },
}

/// Numeric values for the variables of one evaluation.
///
/// Empty slices and `None` mean "not bound".
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub t: Option<f64>,
    pub x: &'a [f64],
    pub y: Option<f64>,
    pub z: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
}

impl Bindings<'_> {
    fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::T => self.t,
            Var::X(i) => self.x.get(i).copied(),
            Var::Y => self.y,
            Var::Z(i) => self.z.get(i).copied(),
            Var::U(i) => self.u.get(i).copied(),
            Var::V(i) => self.v.get(i).copied(),
        }
    }
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Num(value)
    }

    /// Evaluates the expression. Division by zero, square roots of negative
    /// numbers and non-finite intermediate results are errors.
    pub fn evaluate(&self, env: &Bindings<'_>) -> Result<f64, DslError> {
        let value = match self {
            Expr::Num(c) => *c,
            Expr::Var(var) => env.get(*var).ok_or(DslError::Unbound(*var))?,
            Expr::Neg(inner) => -inner.evaluate(env)?,
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.evaluate(env)?;
                let b = rhs.evaluate(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain_error("division by zero"));
                        }
                        a / b
                    }
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].evaluate(env)?;
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Tanh => a.tanh(),
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain_error("square root of a negative number"));
                        }
                        a.sqrt()
                    }
                    Func::Min => a.min(args[1].evaluate(env)?),
                    Func::Max => a.max(args[1].evaluate(env)?),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.domain_error("non-finite result"))
        }
    }

    fn domain_error(&self, message: &str) -> DslError {
        DslError::Domain { expr: self.to_string(), message: message.to_string() }
    }

    /// Calls `visit` on every variable leaf.
    pub fn for_each_var(&self, visit: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => visit(*v),
            Expr::Neg(inner) => inner.for_each_var(visit),
            Expr::Bin(_, a, b) => {
                a.for_each_var(visit);
                b.for_each_var(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.for_each_var(visit)),
        }
    }

    pub fn references(&self, pred: impl Fn(Var) -> bool) -> bool {
        let mut found = false;
        self.for_each_var(&mut |v| found |= pred(v));
        found
    }

    pub fn uses_controls(&self) -> bool {
        self.references(|v| matches!(v, Var::U(_) | Var::V(_)))
    }

    pub fn uses_time(&self) -> bool {
        self.references(|v| v == Var::T)
    }

    pub fn uses_state(&self) -> bool {
        self.references(|v| matches!(v, Var::X(_)))
    }

    pub fn uses_y(&self) -> bool {
        self.references(|v| v == Var::Y)
    }

    pub fn uses_z(&self) -> bool {
        self.references(|v| matches!(v, Var::Z(_)))
    }

    pub fn is_constant(&self) -> bool {
        !self.references(|_| true)
    }
}

/// Fully parenthesized rendering; `parse(e.to_string())` yields `e` again.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(inner) => write!(f, "(-{inner})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Parses `source`, rejecting variables outside `allowed`.
pub fn parse(source: &str, allowed: &VarSet) -> Result<Expr, DslError> {
    let mut parser = Parser { src: source.as_bytes(), pos: 0, allowed };
    parser.skip_ws();
    if parser.pos == parser.src.len() {
        return Err(DslError::Syntax { offset: 0, message: "empty expression".into() });
    }
    let expr = parser.sum()?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.syntax("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    allowed: &'a VarSet,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, message: &str) -> DslError {
        DslError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn expect(&mut self, byte: u8) -> Result<(), DslError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&format!("expected `{}`", byte as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, DslError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.syntax("unexpected character")),
            None => Err(self.syntax("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, DslError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Expr::Num)
            .ok_or(DslError::Syntax { offset: start, message: format!("invalid number `{text}`") })
    }

    fn identifier(&mut self) -> Result<Expr, DslError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or_else(|| DslError::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            })?;
            self.pos += 1;
            let mut args = vec![self.sum()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                args.push(self.sum()?);
            }
            self.expect(b')')?;
            if args.len() != func.arity() {
                return Err(DslError::Arity {
                    func: func.name(),
                    expected: func.arity(),
                    found: args.len(),
                    offset: start,
                });
            }
            return Ok(Expr::Call(func, args));
        }
        let unknown = || DslError::UnknownIdentifier { name: name.to_string(), offset: start };
        let var = parse_var(name).ok_or_else(unknown)?;
        if !self.allowed.contains(var) {
            return Err(unknown());
        }
        Ok(Expr::Var(var))
    }
}

fn parse_var(name: &str) -> Option<Var> {
    match name {
        "t" => return Some(Var::T),
        "y" => return Some(Var::Y),
        _ => {}
    }
    let (head, tail) = name.split_at(1);
    if tail.is_empty() || tail.starts_with('0') || !tail.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let index = tail.parse::<usize>().ok()? - 1;
    match head {
        "x" => Some(Var::X(index)),
        "z" => Some(Var::Z(index)),
        "u" => Some(Var::U(index)),
        "v" => Some(Var::V(index)),
        _ => None,
    }
}
