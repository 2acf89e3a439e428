//! Closed-form expressions over the coordinates `x`, `y`, `z`.
//!
//! Used for initial data and the gravitational potential. The grammar
//! covers polynomials, trigonometric functions and exponentials, and
//! supports exact symbolic differentiation so the potential's gradient is
//! evaluated without a finite-difference error.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'x' | 'y' | 'z' | 'pi' | 'e' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | tan | exp | log | sqrt | sinh | cosh | tanh
//! ```

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("expression error at column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    fn eval(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

use Expr::*;

fn num(v: f64) -> Expr {
    Num(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) => Num(x + y),
        (Num(x), _) if *x == 0.0 => b,
        (_, Num(y)) if *y == 0.0 => a,
        _ => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) => Num(x - y),
        (_, Num(y)) if *y == 0.0 => a,
        (Num(x), _) if *x == 0.0 => neg(b),
        _ => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) => Num(x * y),
        (Num(x), _) | (_, Num(x)) if *x == 0.0 => Num(0.0),
        (Num(x), _) if *x == 1.0 => b,
        (_, Num(y)) if *y == 1.0 => a,
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) if *y != 0.0 => Num(x / y),
        (Num(x), _) if *x == 0.0 => Num(0.0),
        (_, Num(y)) if *y == 1.0 => a,
        _ => Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Num(x) => Num(-x),
        Neg(inner) => *inner,
        other => Neg(Box::new(other)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) => Num(x.powf(*y)),
        (_, Num(y)) if *y == 1.0 => a,
        (_, Num(y)) if *y == 0.0 => Num(1.0),
        _ => Pow(Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    match a {
        Num(v) => Num(f.eval(v)),
        other => Call(f, Box::new(other)),
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match self {
            Num(v) => *v,
            Var(i) => x[*i],
            Neg(a) => -a.eval(x),
            Add(a, b) => a.eval(x) + b.eval(x),
            Sub(a, b) => a.eval(x) - b.eval(x),
            Mul(a, b) => a.eval(x) * b.eval(x),
            Div(a, b) => a.eval(x) / b.eval(x),
            Pow(a, b) => {
                let base = a.eval(x);
                match **b {
                    Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => base.powi(n as i32),
                    _ => base.powf(b.eval(x)),
                }
            }
            Call(f, a) => f.eval(a.eval(x)),
        }
    }

    /// True if the expression mentions coordinate `axis`.
    pub fn depends_on(&self, axis: usize) -> bool {
        match self {
            Num(_) => false,
            Var(i) => *i == axis,
            Neg(a) | Call(_, a) => a.depends_on(axis),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.depends_on(axis) || b.depends_on(axis)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        (0..3).all(|a| !self.depends_on(a))
    }

    /// Exact partial derivative with respect to coordinate `axis`.
    pub fn derivative(&self, axis: usize) -> Expr {
        if !self.depends_on(axis) {
            return num(0.0);
        }
        match self {
            Num(_) => num(0.0),
            Var(i) => num(if *i == axis { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(axis)),
            Add(a, b) => add(a.derivative(axis), b.derivative(axis)),
            Sub(a, b) => sub(a.derivative(axis), b.derivative(axis)),
            Mul(a, b) => add(
                mul(a.derivative(axis), (**b).clone()),
                mul((**a).clone(), b.derivative(axis)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(axis), (**b).clone()),
                    mul((**a).clone(), b.derivative(axis)),
                ),
                pow((**b).clone(), num(2.0)),
            ),
            Pow(a, b) => {
                if !b.depends_on(axis) {
                    // d(u^k) = k u^(k-1) u'
                    mul(
                        mul(
                            (**b).clone(),
                            pow((**a).clone(), sub((**b).clone(), num(1.0))),
                        ),
                        a.derivative(axis),
                    )
                } else {
                    // d(u^v) = u^v (v' ln u + v u'/u)
                    mul(
                        self.clone(),
                        add(
                            mul(b.derivative(axis), call(Func::Log, (**a).clone())),
                            div(mul((**b).clone(), a.derivative(axis)), (**a).clone()),
                        ),
                    )
                }
            }
            Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tan => div(num(1.0), pow(call(Func::Cos, inner), num(2.0))),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Log => div(num(1.0), inner),
                    Func::Sqrt => div(num(0.5), call(Func::Sqrt, inner)),
                    Func::Sinh => call(Func::Cosh, inner),
                    Func::Cosh => call(Func::Sinh, inner),
                    Func::Tanh => sub(num(1.0), pow(call(Func::Tanh, inner), num(2.0))),
                };
                mul(outer, a.derivative(axis))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(v) => write!(f, "{v:?}"),
            Var(i) => write!(f, "{}", ["x", "y", "z"][*i]),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a} ^ {b})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError {
            column: self.pos + 1,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    lhs = Add(Box::new(lhs), Box::new(self.term()?));
                }
                b'-' => {
                    self.pos += 1;
                    lhs = Sub(Box::new(lhs), Box::new(self.term()?));
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
                    lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                b'/' => {
                    self.pos += 1;
                    lhs = Div(Box::new(lhs), Box::new(self.unary()?));
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
                Ok(Neg(Box::new(self.unary()?)))
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
            let exp = self.unary()?;
            return Ok(Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                match name {
                    "x" => Ok(Var(0)),
                    "y" => Ok(Var(1)),
                    "z" => Ok(Var(2)),
                    "pi" => Ok(Num(std::f64::consts::PI)),
                    "e" => Ok(Num(std::f64::consts::E)),
                    _ => {
                        let func = Func::from_name(name).ok_or_else(|| {
                            self.pos = start;
                            self.error(&format!("unknown identifier '{name}'"))
                        })?;
                        if self.peek() != Some(b'(') {
                            return Err(self.error("expected '(' after function name"));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(b')') {
                            return Err(self.error("expected ')'"));
                        }
                        self.pos += 1;
                        Ok(Call(func, Box::new(arg)))
                    }
                }
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>().map(Num).map_err(|_| {
            self.pos = start;
            self.error(&format!("bad number '{text}'"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: [f64; 3]) -> f64 {
        Expr::parse(s).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_functions() {
        assert_eq!(ev("1 + 2 * 3", [0.0; 3]), 7.0);
        assert_eq!(ev("-2^2", [0.0; 3]), -4.0);
        assert_eq!(ev("2^3^2", [0.0; 3]), 512.0);
        assert!((ev("2/3 + 0.3*cos(pi*x)*cos(pi*y)", [0.0; 3]) - (2.0 / 3.0 + 0.3)).abs() < 1e-15);
        assert!((ev("exp(1)", [0.0; 3]) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ev("1e-3 * x", [2.0, 0.0, 0.0]), 2e-3);
    }

    #[test]
    fn parse_errors_carry_column() {
        let e = Expr::parse("1 + foo(x)").unwrap_err();
        assert_eq!(e.column, 5);
        assert!(Expr::parse("sin x").is_err());
        assert!(Expr::parse("(1 + x").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "0.1*x",
            "x^3 - 2*x*y + y^2",
            "sin(pi*x)*cos(2*y) + exp(-x*y)",
            "sqrt(1 + x^2) / (2 + cos(y))",
            "log(2 + x) * tanh(y) + x^y",
            "tan(0.3*x) + sinh(x) - cosh(y)",
        ];
        let p = [0.37, 0.81, 0.2];
        for src in cases {
            let e = Expr::parse(src).unwrap();
            for axis in 0..3 {
                let d = e.derivative(axis).eval(p);
                let h = 1e-6;
                let mut pp = p;
                let mut pm = p;
                pp[axis] += h;
                pm[axis] -= h;
                let fd = (e.eval(pp) - e.eval(pm)) / (2.0 * h);
                assert!((d - fd).abs() < 1e-7 * (1.0 + fd.abs()), "{src} d/dx{axis}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("sin(pi*x)^2 - 3/(1+y)").unwrap();
        let back = Expr::parse(&e.to_string()).unwrap();
        let p = [0.2, 0.4, 0.0];
        assert_eq!(e.eval(p), back.eval(p));
    }
}
