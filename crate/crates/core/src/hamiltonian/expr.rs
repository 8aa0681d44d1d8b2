//! Recursive-descent parser for scalar fields over `x1`, `x2`, compiled to a
//! register tape that both the `f64` and dual-number passes evaluate.
//!
//! Grammar:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'x1' | 'x2' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func  := 'sin' | 'cos' | 'exp'
//! ```

use smallvec::SmallVec;

use super::autodiff::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Const(f64),
    X1,
    X2,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Sin(u32),
    Cos(u32),
    Exp(u32),
    PowI(u32, i32),
    Pow(u32, u32),
}

/// Compiled expression. Each op writes one register; operands refer to
/// earlier registers, so evaluation is a single forward sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    source: String,
}

impl Tape {
    pub fn parse(src: &str) -> Result<Tape> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, ops: Vec::new() };
        p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse { pos: p.tokens[p.pos].1, msg: "trailing input".into() });
        }
        Ok(Tape { ops: p.ops, source: src.to_string() })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the tape does not read `x1` or `x2`.
    pub fn is_constant(&self) -> bool {
        !self.ops.iter().any(|op| matches!(op, Op::X1 | Op::X2))
    }

    pub fn eval<T: Real>(&self, x1: T, x2: T) -> T {
        let mut regs: SmallVec<[T; 64]> = SmallVec::with_capacity(self.ops.len());
        for op in &self.ops {
            let r = |i: &u32| regs[*i as usize];
            let v = match op {
                Op::Const(c) => T::cst(*c),
                Op::X1 => x1,
                Op::X2 => x2,
                Op::Add(a, b) => r(a) + r(b),
                Op::Sub(a, b) => r(a) - r(b),
                Op::Mul(a, b) => r(a) * r(b),
                Op::Div(a, b) => r(a) / r(b),
                Op::Neg(a) => -r(a),
                Op::Sin(a) => r(a).sin(),
                Op::Cos(a) => r(a).cos(),
                Op::Exp(a) => r(a).exp(),
                Op::PowI(a, n) => r(a).powi(*n),
                Op::Pow(a, b) => r(a).powf(r(b)),
            };
            regs.push(v);
        }
        *regs.last().expect("parser guarantees a non-empty tape")
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Parse { pos: start, msg: format!("bad number `{text}`") })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            return Err(Error::Parse { pos: i, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    ops: Vec<Op>,
}

impl Parser {
    fn push(&mut self, op: Op) -> u32 {
        // Fold operations on constants so parameter-only subtrees cost nothing.
        let folded = match op {
            Op::Add(a, b) => self.binary_const(a, b, |x, y| x + y),
            Op::Sub(a, b) => self.binary_const(a, b, |x, y| x - y),
            Op::Mul(a, b) => self.binary_const(a, b, |x, y| x * y),
            Op::Div(a, b) => self.binary_const(a, b, |x, y| x / y),
            Op::Pow(a, b) => self.binary_const(a, b, f64::powf),
            Op::Neg(a) => self.constant(a).map(|x| -x),
            Op::Sin(a) => self.constant(a).map(f64::sin),
            Op::Cos(a) => self.constant(a).map(f64::cos),
            Op::Exp(a) => self.constant(a).map(f64::exp),
            Op::PowI(a, n) => self.constant(a).map(|x| x.powi(n)),
            _ => None,
        };
        self.ops.push(folded.map_or(op, Op::Const));
        (self.ops.len() - 1) as u32
    }

    fn constant(&self, r: u32) -> Option<f64> {
        match self.ops[r as usize] {
            Op::Const(c) => Some(c),
            _ => None,
        }
    }

    fn binary_const(&self, a: u32, b: u32, f: impl Fn(f64, f64) -> f64) -> Option<f64> {
        Some(f(self.constant(a)?, self.constant(b)?))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn here(&self) -> usize {
        self.tokens.get(self.pos).map_or_else(|| self.tokens.last().map_or(0, |t| t.1 + 1), |t| t.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(Error::Parse { pos: self.here(), msg: format!("expected `{c}`") })
        }
    }

    fn expr(&mut self) -> Result<u32> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                let rhs = self.term()?;
                lhs = self.push(Op::Add(lhs, rhs));
            } else if self.eat('-') {
                let rhs = self.term()?;
                lhs = self.push(Op::Sub(lhs, rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<u32> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                let rhs = self.unary()?;
                lhs = self.push(Op::Mul(lhs, rhs));
            } else if self.eat('/') {
                let rhs = self.unary()?;
                lhs = self.push(Op::Div(lhs, rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<u32> {
        if self.eat('-') {
            let a = self.unary()?;
            return Ok(self.push(Op::Neg(a)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<u32> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let exp = self.unary()?;
        match self.constant(exp) {
            Some(c) if c.fract() == 0.0 && c.abs() <= 64.0 => {
                // The exponent register stays on the tape as dead code; harmless.
                Ok(self.push(Op::PowI(base, c as i32)))
            }
            _ => Ok(self.push(Op::Pow(base, exp))),
        }
    }

    fn atom(&mut self) -> Result<u32> {
        let pos = self.here();
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or(Error::Parse { pos, msg: "unexpected end of input".into() })?
            .0;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(self.push(Op::Const(v))),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x1" => Ok(self.push(Op::X1)),
                "x2" => Ok(self.push(Op::X2)),
                "pi" => Ok(self.push(Op::Const(std::f64::consts::PI))),
                "sin" | "cos" | "exp" => {
                    self.expect('(')?;
                    let a = self.expr()?;
                    self.expect(')')?;
                    Ok(self.push(match name.as_str() {
                        "sin" => Op::Sin(a),
                        "cos" => Op::Cos(a),
                        _ => Op::Exp(a),
                    }))
                }
                other => Err(Error::Parse { pos, msg: format!("unknown identifier `{other}`") }),
            },
            Tok::Sym(c) => Err(Error::Parse { pos, msg: format!("unexpected `{c}`") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::autodiff::Jet2;

    #[test]
    fn precedence_and_associativity() {
        let t = Tape::parse("1 - 2 - 3").unwrap();
        assert_eq!(t.eval(0.0, 0.0), -4.0);
        let t = Tape::parse("-x1^2").unwrap();
        assert_eq!(t.eval(3.0, 0.0), -9.0);
        let t = Tape::parse("2^3^2").unwrap();
        assert_eq!(t.eval(0.0, 0.0), 512.0);
        let t = Tape::parse("x1 / x2 * 2").unwrap();
        assert_eq!(t.eval(3.0, 4.0), 1.5);
    }

    #[test]
    fn dumbbell_from_string() {
        let t = Tape::parse("(x1^2 - 1)^2/4 + x2^2/2").unwrap();
        let j = t.eval(Jet2::var(0.5, 0), Jet2::var(0.3, 1));
        assert!((j.v - ((0.25f64 - 1.0).powi(2) / 4.0 + 0.045)).abs() < 1e-15);
        assert!((j.g[0] - (0.125 - 0.5)).abs() < 1e-14);
        assert!((j.h[0] - (3.0 * 0.25 - 1.0)).abs() < 1e-14);
        assert!((j.h[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_folding() {
        let t = Tape::parse("2*pi*cos(0) + 1e-1").unwrap();
        assert!(t.is_constant());
        assert!((t.eval(9.0, 9.0) - (2.0 * std::f64::consts::PI + 0.1)).abs() < 1e-15);
        assert!(!Tape::parse("1 + 0.3*sin(x2)").unwrap().is_constant());
    }

    #[test]
    fn errors_carry_positions() {
        match Tape::parse("x1 + * 2") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Tape::parse("x3").is_err());
        assert!(Tape::parse("sin(x1").is_err());
        assert!(Tape::parse("1 2").is_err());
        assert!(Tape::parse("").is_err());
    }
}
