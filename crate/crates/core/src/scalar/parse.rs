//! Recursive-descent parser for scalar expressions.
//!
//! Grammar (whitespace-insensitive):
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' integer)?
//! atom   := integer | parameter-name | '(' expr ')'
//! ```
//! Accepts exactly the shapes produced by [`Scalar::to_expr`] plus ordinary
//! unparenthesized arithmetic for hand-written inputs.

use super::{Scalar, ScalarError};
use num_bigint::BigInt;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(input: &str) -> Result<Vec<Tok>, ScalarError> {
    let mut out = Vec::new();
    let mut chars = input.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                chars.next();
            }
            '+' => {
                chars.next();
                out.push(Tok::Plus);
            }
            '-' => {
                chars.next();
                out.push(Tok::Minus);
            }
            '*' => {
                chars.next();
                out.push(Tok::Star);
            }
            '/' => {
                chars.next();
                out.push(Tok::Slash);
            }
            '^' => {
                chars.next();
                out.push(Tok::Caret);
            }
            '(' => {
                chars.next();
                out.push(Tok::LParen);
            }
            ')' => {
                chars.next();
                out.push(Tok::RParen);
            }
            '0'..='9' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Int(s.parse::<BigInt>().map_err(|e| {
                    ScalarError::Parse(format!("bad integer literal: {}", e))
                })?));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Ident(s));
            }
            other => {
                return Err(ScalarError::Parse(format!(
                    "unexpected character `{}`",
                    other
                )))
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    names: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Scalar, ScalarError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.next();
                    acc = acc.add(&self.term()?);
                }
                Some(Tok::Minus) => {
                    self.next();
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Scalar, ScalarError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.next();
                    acc = acc.mul(&self.unary()?);
                }
                Some(Tok::Slash) => {
                    self.next();
                    acc = acc.div(&self.unary()?)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Scalar, ScalarError> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.next();
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Scalar, ScalarError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.next();
            let neg = if matches!(self.peek(), Some(Tok::Minus)) {
                self.next();
                true
            } else {
                false
            };
            match self.next() {
                Some(Tok::Int(e)) => {
                    let e: i64 = e
                        .try_into()
                        .map_err(|_| ScalarError::Parse("exponent too large".into()))?;
                    return base.pow(if neg { -e } else { e });
                }
                _ => return Err(ScalarError::Parse("expected integer exponent".into())),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Scalar, ScalarError> {
        let n = self.names.len();
        match self.next() {
            Some(Tok::Int(v)) => Ok(Scalar::from_bigint(n, v)),
            Some(Tok::Ident(name)) => {
                let idx = self
                    .names
                    .iter()
                    .position(|x| *x == name)
                    .ok_or(ScalarError::UnknownParameter(name))?;
                Ok(Scalar::param(n, idx))
            }
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(ScalarError::Parse("expected `)`".into())),
                }
            }
            other => Err(ScalarError::Parse(format!(
                "unexpected token {:?}",
                other
            ))),
        }
    }
}

/// Parse an expression over integers and the given parameter names.
pub fn parse_scalar(input: &str, names: &[String]) -> Result<Scalar, ScalarError> {
    let toks = lex(input)?;
    let mut p = Parser {
        toks,
        pos: 0,
        names,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(ScalarError::Parse("trailing input".into()));
    }
    Ok(e)
}
