//! Recursive-descent parser for the coefficient grammar:
//!
//! ```text
//! expr   := term (("+" | "-") term)* ;
//! term   := factor (("*" | "/") factor)* ;
//! factor := base ("^" INTEGER)? ;
//! base   := NUMBER | "t" | "(" expr ")" | FUNC "(" expr ")" | "-" base ;
//! FUNC   := "exp" | "sin" | "cos" ;
//! ```

use std::fmt;

use thiserror::Error;

use super::{Func, Node, TimeExpr};

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Empty,
    Syntax {
        expected: Vec<&'static str>,
        found: String,
    },
    UnknownFunction(String),
    ZeroDenominator,
    BadExponent(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Empty => write!(f, "empty expression"),
            ParseErrorKind::Syntax { expected, found } => {
                write!(f, "syntax error at byte {}: expected ", self.offset)?;
                if expected.len() == 1 {
                    write!(f, "{}", expected[0])?;
                } else {
                    write!(f, "one of {}", expected.join(", "))?;
                }
                write!(f, ", found {found}")
            }
            ParseErrorKind::UnknownFunction(name) => {
                write!(f, "unknown function `{name}` at byte {}", self.offset)
            }
            ParseErrorKind::ZeroDenominator => {
                write!(f, "literal zero denominator at byte {}", self.offset)
            }
            ParseErrorKind::BadExponent(s) => {
                write!(
                    f,
                    "exponent at byte {} must be a nonnegative integer, found {s}",
                    self.offset
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Num(f64, &'a str),
    Ident(&'a str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok<'_> {
    fn describe(&self) -> String {
        match self {
            Tok::Num(_, s) => format!("number `{s}`"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok<'_>)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax {
                        expected: vec!["number"],
                        found: format!("`{text}`"),
                    },
                })?;
                out.push((start, Tok::Num(value, text)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(&src[start..i])));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax {
                        expected: vec!["number", "`t`", "function", "operator"],
                        found: format!("`{ch}`"),
                    },
                });
            }
        };
        i += 1;
        out.push((start, tok));
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
}

const BASE_START: &[&str] = &["number", "`t`", "`(`", "`exp`", "`sin`", "`cos`", "`-`"];

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok<'a> {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> (usize, Tok<'a>) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.offset(),
            kind: ParseErrorKind::Syntax {
                expected: expected.to_vec(),
                found: self.peek().describe(),
            },
        }
    }

    fn expr(&mut self) -> Result<TimeExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = TimeExpr::from_node(Node::Add(lhs, rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = TimeExpr::from_node(Node::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<TimeExpr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = TimeExpr::from_node(Node::Mul(lhs, rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let at = self.offset();
                    let rhs = self.factor()?;
                    if rhs.as_num() == Some(0.0) {
                        return Err(ParseError {
                            offset: at,
                            kind: ParseErrorKind::ZeroDenominator,
                        });
                    }
                    lhs = TimeExpr::from_node(Node::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<TimeExpr, ParseError> {
        let base = self.base()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let at = self.offset();
        match self.bump().1 {
            Tok::Num(_, text) if text.bytes().all(|b| b.is_ascii_digit()) => {
                let n: u32 = text.parse().map_err(|_| ParseError {
                    offset: at,
                    kind: ParseErrorKind::BadExponent(text.to_string()),
                })?;
                Ok(TimeExpr::from_node(Node::Pow(base, n)))
            }
            Tok::Num(_, text) => Err(ParseError {
                offset: at,
                kind: ParseErrorKind::BadExponent(text.to_string()),
            }),
            other => Err(ParseError {
                offset: at,
                kind: ParseErrorKind::Syntax {
                    expected: vec!["integer exponent"],
                    found: other.describe(),
                },
            }),
        }
    }

    fn base(&mut self) -> Result<TimeExpr, ParseError> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.bump();
                Ok(TimeExpr::num(v))
            }
            Tok::Minus => {
                self.bump();
                let inner = self.base()?;
                // `-NUMBER` reads as a negative literal.
                Ok(inner.neg())
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident("t") => {
                self.bump();
                Ok(TimeExpr::t())
            }
            Tok::Ident(name) => {
                let func = Func::from_name(name).ok_or_else(|| ParseError {
                    offset: at,
                    kind: ParseErrorKind::UnknownFunction(name.to_string()),
                })?;
                self.bump();
                if *self.peek() != Tok::LParen {
                    return Err(self.error(&["`(`"]));
                }
                self.bump();
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(TimeExpr::from_node(Node::Func(func, arg)))
            }
            _ => Err(self.error(BASE_START)),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&["`)`", "operator"]))
        }
    }
}

/// Parses a coefficient expression.
pub fn parse_expr(source: &str) -> Result<TimeExpr, ParseError> {
    if source.trim().is_empty() {
        return Err(ParseError {
            offset: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}
