//! Scalar field expressions over the coordinates `x`, `y`, `z`.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, `^`
//! (right associative), atoms. Atoms are numbers, `x`, `y`, `z`, `pi`,
//! parenthesised expressions and calls to `sin cos exp tanh abs min max
//! sqrt log`. Expressions can be differentiated symbolically, which is
//! what the manufactured-solution forcings rely on.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression error at byte {pos}: {msg} (in `{src}`)")]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
    pub src: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Abs,
    Sqrt,
    Log,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "tanh" => (Func::Tanh, 1),
            "abs" => (Func::Abs, 1),
            "sqrt" => (Func::Sqrt, 1),
            "log" => (Func::Log, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

/// Expression tree. `Var(i)` is the i-th coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

pub const VAR_NAMES: [&str; 3] = ["x", "y", "z"];

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { src, bytes: src.as_bytes(), pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Evaluates at a point; missing coordinates read as 0.
    pub fn eval(&self, at: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => at.get(*i).copied().unwrap_or(0.0),
            Expr::Neg(a) => -a.eval(at),
            Expr::Add(a, b) => a.eval(at) + b.eval(at),
            Expr::Sub(a, b) => a.eval(at) - b.eval(at),
            Expr::Mul(a, b) => a.eval(at) * b.eval(at),
            Expr::Div(a, b) => a.eval(at) / b.eval(at),
            Expr::Pow(a, b) => {
                let base = a.eval(at);
                match b.as_ref() {
                    Expr::Num(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(*e as i32),
                    _ => base.powf(b.eval(at)),
                }
            }
            Expr::Call(f, args) => {
                let u = args[0].eval(at);
                match f {
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                    Func::Exp => u.exp(),
                    Func::Tanh => u.tanh(),
                    Func::Abs => u.abs(),
                    Func::Sqrt => u.sqrt(),
                    Func::Log => u.ln(),
                    Func::Min => u.min(args[1].eval(at)),
                    Func::Max => u.max(args[1].eval(at)),
                }
            }
        }
    }

    /// Symbolic partial derivative with respect to coordinate `var`.
    ///
    /// `abs`, `min` and `max` differentiate piecewise; the kink itself gets
    /// the one-sided derivative selected by `>=`.
    pub fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                pow((**b).clone(), Expr::Num(2.0)),
            ),
            Expr::Pow(a, b) => {
                let da = a.diff(var);
                let db = b.diff(var);
                if db.is_zero() {
                    // d(a^c) = c a^(c-1) da
                    let c = (**b).clone();
                    let cm1 = sub(c.clone(), Expr::Num(1.0));
                    mul(mul(c, pow((**a).clone(), cm1)), da)
                } else {
                    // d(a^b) = a^b (db ln a + b da / a)
                    let lna = Expr::Call(Func::Log, vec![(**a).clone()]);
                    mul(
                        self.clone(),
                        add(mul(db, lna), div(mul((**b).clone(), da), (**a).clone())),
                    )
                }
            }
            Expr::Call(f, args) => {
                let u = &args[0];
                let du = u.diff(var);
                match f {
                    Func::Sin => mul(call(Func::Cos, u.clone()), du),
                    Func::Cos => neg(mul(call(Func::Sin, u.clone()), du)),
                    Func::Exp => mul(self.clone(), du),
                    Func::Tanh => {
                        let t2 = pow(self.clone(), Expr::Num(2.0));
                        mul(sub(Expr::Num(1.0), t2), du)
                    }
                    Func::Abs => mul(sign(u.clone()), du),
                    Func::Sqrt => div(du, mul(Expr::Num(2.0), self.clone())),
                    Func::Log => div(du, u.clone()),
                    Func::Min | Func::Max => {
                        let v = &args[1];
                        let dv = v.diff(var);
                        // Step weight s = 1 when the first argument is selected.
                        let diff_uv = sub(u.clone(), v.clone());
                        let pick_u = if *f == Func::Max {
                            step(diff_uv)
                        } else {
                            step(neg(diff_uv))
                        };
                        add(
                            mul(pick_u.clone(), du),
                            mul(sub(Expr::Num(1.0), pick_u), dv),
                        )
                    }
                }
            }
        }
    }

    /// Coordinates the expression actually reads.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_var().max(b.max_var())
            }
            Expr::Call(_, args) => args.iter().filter_map(|e| e.max_var()).max(),
        }
    }
}

/// sign(u) as an expression: u / |u| guarded at zero via max(|u|, tiny).
fn sign(u: Expr) -> Expr {
    div(
        u.clone(),
        Expr::Call(Func::Max, vec![call(Func::Abs, u), Expr::Num(f64::MIN_POSITIVE)]),
    )
}

/// Heaviside step H(u) with H(0) = 1, built from `sign`.
fn step(u: Expr) -> Expr {
    let s = sign(u);
    // max((1 + s)/2, 1 - |s|) maps s = -1, 0, 1 to 0, 1, 1.
    Expr::Call(
        Func::Max,
        vec![
            mul(Expr::Num(0.5), add(Expr::Num(1.0), s.clone())),
            sub(Expr::Num(1.0), call(Func::Abs, s)),
        ],
    )
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, vec![a])
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        _ if a.is_zero() => b,
        _ if b.is_zero() => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        _ if b.is_zero() => a,
        _ if a.is_zero() => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        _ if a.is_zero() || b.is_zero() => Expr::Num(0.0),
        (Expr::Num(v), _) if *v == 1.0 => b,
        (_, Expr::Num(v)) if *v == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) if *y != 0.0 => Expr::Num(x / y),
        _ if a.is_zero() => Expr::Num(0.0),
        (_, Expr::Num(v)) if *v == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Num(v)) if *v == 0.0 => Expr::Num(1.0),
        (_, Expr::Num(v)) if *v == 1.0 => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x.powf(*y)),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        add(self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        mul(self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        div(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        neg(self)
    }
}

impl Expr {
    pub fn powf(self, e: f64) -> Expr {
        pow(self, Expr::Num(e))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 {
                    write!(f, "({v:?})")
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(i) => f.write_str(VAR_NAMES.get(*i).copied().unwrap_or("?")),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError { pos: self.pos, msg: msg.to_string(), src: self.src.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            // Right associative; the exponent may carry its own sign.
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let c = self.peek().ok_or_else(|| self.err("unexpected end of input"))?;
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err("expected `)`"));
            }
            self.pos += 1;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while self.pos < self.bytes.len()
                && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = &self.src[start..self.pos];
            if let Some(i) = VAR_NAMES.iter().position(|v| *v == name) {
                return Ok(Expr::Var(i));
            }
            if name == "pi" {
                return Ok(Expr::Num(std::f64::consts::PI));
            }
            if let Some((func, arity)) = Func::from_name(name) {
                if self.peek() != Some(b'(') {
                    return Err(self.err("expected `(` after function name"));
                }
                self.pos += 1;
                let mut args = vec![self.expr()?];
                while self.peek() == Some(b',') {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)` closing call"));
                }
                self.pos += 1;
                if args.len() != arity {
                    self.pos = start;
                    return Err(self.err(&format!("`{name}` takes {arity} argument(s)")));
                }
                return Ok(Expr::Call(func, args));
            }
            self.pos = start;
            return Err(self.err(&format!("unknown identifier `{name}`")));
        }
        Err(self.err(&format!("unexpected character `{}`", c as char)))
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < b.len() && b[self.pos].is_ascii_digit() {
                while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| {
                self.pos = start;
                self.err("malformed number")
            })
    }
}
