//! Scalar expressions in one variable `t`.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | base ('^' factor)?
//! base   := number | 't' | '(' expr ')' | func '(' expr ')'
//! func   := exp | log | abs | sqrt
//! ```
//!
//! After parsing, `exp(a) - 1` is evaluated as `expm1(a)` and
//! `exp(a) - 1 - a` through a series near zero, so exponential-growth
//! nonlinearities keep full relative accuracy at small amplitude.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownIdentifier,
    Arity,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnknownIdentifier => "unknown identifier",
            ParseErrorKind::Arity => "arity error",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Log,
    Abs,
    Sqrt,
    Expm1,
    Expm1MinusId,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// `e^y - 1 - y` without cancellation.
pub fn expm1_minus_id(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let mut term = y * y / 2.0;
        let mut sum = term;
        for k in 3..16 {
            term *= y / k as f64;
            sum += term;
        }
        sum
    } else {
        y.exp_m1() - y
    }
}

impl Node {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::Var => t,
            Node::Neg(a) => -a.eval(t),
            Node::Add(a, b) => a.eval(t) + b.eval(t),
            Node::Sub(a, b) => a.eval(t) - b.eval(t),
            Node::Mul(a, b) => a.eval(t) * b.eval(t),
            Node::Div(a, b) => a.eval(t) / b.eval(t),
            Node::Pow(a, b) => {
                let base = a.eval(t);
                match **b {
                    Node::Num(e) if e.fract() == 0.0 && e.abs() <= 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(t)),
                }
            }
            Node::Call(f, a) => {
                let x = a.eval(t);
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Abs => x.abs(),
                    Func::Sqrt => x.sqrt(),
                    Func::Expm1 => x.exp_m1(),
                    Func::Expm1MinusId => expm1_minus_id(x),
                }
            }
        }
    }

    fn rewrite(self) -> Node {
        use Node::*;
        match self {
            Sub(a, b) => {
                let a = a.rewrite();
                let b = b.rewrite();
                match (a, b) {
                    (Call(Func::Exp, x), Num(one)) if one == 1.0 => Call(Func::Expm1, x),
                    (Call(Func::Expm1, x), y) if *x == y => Call(Func::Expm1MinusId, x),
                    (a, b) => Sub(Box::new(a), Box::new(b)),
                }
            }
            Neg(a) => Neg(Box::new(a.rewrite())),
            Add(a, b) => Add(Box::new(a.rewrite()), Box::new(b.rewrite())),
            Mul(a, b) => Mul(Box::new(a.rewrite()), Box::new(b.rewrite())),
            Div(a, b) => Div(Box::new(a.rewrite()), Box::new(b.rewrite())),
            Pow(a, b) => Pow(Box::new(a.rewrite()), Box::new(b.rewrite())),
            Call(f, a) => Call(f, Box::new(a.rewrite())),
            leaf => leaf,
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn err(&self, kind: ParseErrorKind, offset: usize, message: impl Into<String>) -> ParseError {
        ParseError { offset, kind, message: message.into() }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == b'+' { Node::Add(Box::new(lhs), Box::new(rhs)) } else { Node::Sub(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = if c == b'*' { Node::Mul(Box::new(lhs), Box::new(rhs)) } else { Node::Div(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Node, ParseError> {
        let start = match self.peek() {
            None => return Err(self.err(ParseErrorKind::Syntax, self.pos, "unexpected end of input, expected number, 't', '(' or function")),
            Some(_) => self.pos,
        };
        let c = self.src[start];
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            return match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    Ok(inner)
                }
                _ => Err(self.err(ParseErrorKind::Syntax, self.pos, "expected ')'")),
            };
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
                self.pos += 1;
            }
            let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            let func = match ident {
                "t" => return Ok(Node::Var),
                "exp" => Func::Exp,
                "log" => Func::Log,
                "abs" => Func::Abs,
                "sqrt" => Func::Sqrt,
                _ => {
                    return Err(self.err(
                        ParseErrorKind::UnknownIdentifier,
                        start,
                        format!("'{ident}', expected t, exp, log, abs or sqrt"),
                    ))
                }
            };
            if self.peek() != Some(b'(') {
                return Err(self.err(ParseErrorKind::Syntax, self.pos, format!("expected '(' after {ident}")));
            }
            self.pos += 1;
            if self.peek() == Some(b')') {
                return Err(self.err(ParseErrorKind::Arity, self.pos, format!("{ident} takes exactly one argument")));
            }
            let arg = self.expr()?;
            return match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    Ok(Node::Call(func, Box::new(arg)))
                }
                Some(b',') => Err(self.err(ParseErrorKind::Arity, self.pos, format!("{ident} takes exactly one argument"))),
                _ => Err(self.err(ParseErrorKind::Syntax, self.pos, "expected ')'")),
            };
        }
        Err(self.err(ParseErrorKind::Syntax, start, format!("unexpected '{}', expected number, 't', '(' or function", c as char)))
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            let b = *p;
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
            *p > b
        };
        let mut p = self.pos;
        let int = digits(&mut p);
        let mut frac = false;
        if p < s.len() && s[p] == b'.' {
            p += 1;
            frac = digits(&mut p);
        }
        if !int && !frac {
            return Err(self.err(ParseErrorKind::Syntax, start, "malformed number"));
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if digits(&mut q) {
                p = q;
            }
        }
        self.pos = p;
        let text = std::str::from_utf8(&s[start..p]).unwrap_or("");
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.err(ParseErrorKind::Syntax, start, "malformed number"))
    }
}

/// A parsed expression together with its source text.
#[derive(Clone)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.root.eval(t)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, ParseError> {
        parse_expression(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_expression(&s).map_err(serde::de::Error::custom)
    }
}

pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    if p.peek().is_none() {
        return Err(ParseError { offset: 0, kind: ParseErrorKind::Syntax, message: "empty expression".into() });
    }
    let root = p.expr()?;
    if let Some(c) = p.peek() {
        return Err(p.err(ParseErrorKind::Syntax, p.pos, format!("unexpected '{}', expected operator or end of input", c as char)));
    }
    Ok(Expr { source: src.to_string(), root: root.rewrite() })
}
