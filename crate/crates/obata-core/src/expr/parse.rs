//! Recursive-descent parser for the expression grammar.
//!
//! Precedence, tightest first: `^` (right-associative), unary minus,
//! `* /`, `+ -` (left-associative). Atoms are numeric literals, variables
//! `x0..x{dim-1}` (with `t` aliasing `x0`), function calls and
//! parenthesized subexpressions. Anything else is a parse error with a byte
//! position.

use super::{BinaryOp, Expression, Node, NodeKind, UnaryOp};

#[derive(Clone, Debug, thiserror::Error)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

fn err<T>(pos: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { pos, message: message.into() })
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexed {
    tok: Tok,
    start: usize,
    end: usize,
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Lexed>,
    at: usize,
    dim: usize,
}

pub fn parse(text: &str, dim: usize) -> Result<Expression, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { src: text, toks, at: 0, dim };
    let root = p.sum()?;
    let t = p.peek();
    if t.tok != Tok::End {
        let pos = t.start;
        return err(pos, format!("unexpected `{}`", &text[t.start..t.end]));
    }
    Ok(Expression { dim, root })
}

fn lex(text: &str) -> Result<Vec<Lexed>, ParseError> {
    let b = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => {
                i += 1;
                Tok::Plus
            }
            b'-' => {
                i += 1;
                Tok::Minus
            }
            b'*' => {
                i += 1;
                Tok::Star
            }
            b'/' => {
                i += 1;
                Tok::Slash
            }
            b'^' => {
                i += 1;
                Tok::Caret
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'0'..=b'9' => {
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
                if i < b.len() && b[i] == b'.' {
                    i += 1;
                    if i >= b.len() || !b[i].is_ascii_digit() {
                        return err(i, "expected digits after decimal point");
                    }
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                    let mut j = i + 1;
                    if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                        j += 1;
                    }
                    if j < b.len() && b[j].is_ascii_digit() {
                        i = j;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit
                    .parse()
                    .map_err(|_| ParseError { pos: start, message: format!("bad number `{lit}`") })?;
                if !v.is_finite() {
                    return err(start, format!("numeric literal `{lit}` overflows"));
                }
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                Tok::Ident(text[start..i].to_string())
            }
            _ => {
                return err(i, format!("unexpected character `{}`", &text[i..i + 1]));
            }
        };
        toks.push(Lexed { tok, start, end: i });
    }
    toks.push(Lexed { tok: Tok::End, start: b.len(), end: b.len() });
    Ok(toks)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Lexed {
        &self.toks[self.at]
    }

    fn bump(&mut self) -> &Lexed {
        let t = &self.toks[self.at];
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = span_join(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = span_join(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        if self.peek().tok == Tok::Minus {
            let start = self.peek().start;
            self.bump();
            let inner = self.factor()?;
            let end = inner.span.map(|(_, e)| e).unwrap_or(start + 1);
            return Ok(Node {
                kind: NodeKind::Unary(UnaryOp::Neg, Box::new(inner)),
                span: Some((start, end)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            // Right-associative, and the exponent may carry a unary minus.
            let expo = self.factor()?;
            return Ok(span_join(BinaryOp::Pow, base, expo));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let (start, end) = (self.peek().start, self.peek().end);
        match self.bump().tok.clone() {
            Tok::Num(v) => Ok(Node { kind: NodeKind::Const(v), span: Some((start, end)) }),
            Tok::Ident(name) => self.ident(&name, start, end),
            Tok::LParen => {
                let inner = self.sum()?;
                let t = self.bump();
                if t.tok != Tok::RParen {
                    return err(t.start, "expected `)`");
                }
                Ok(inner)
            }
            Tok::End => err(start, "unexpected end of input"),
            _ => err(start, format!("unexpected `{}`", &self.src[start..end])),
        }
    }

    fn ident(&mut self, name: &str, start: usize, end: usize) -> Result<Node, ParseError> {
        if self.peek().tok == Tok::LParen {
            let op = UnaryOp::from_name(name)
                .ok_or_else(|| ParseError { pos: start, message: format!("unknown function `{name}`") })?;
            self.bump();
            let arg = self.sum()?;
            let t = self.bump();
            if t.tok != Tok::RParen {
                return err(t.start, "expected `)` after function argument");
            }
            let close = t.end;
            return Ok(Node {
                kind: NodeKind::Unary(op, Box::new(arg)),
                span: Some((start, close)),
            });
        }
        let index = if name == "t" {
            0
        } else if let Some(num) = name.strip_prefix('x') {
            match num.parse::<usize>() {
                Ok(i) if !num.is_empty() && num.bytes().all(|c| c.is_ascii_digit()) => i,
                _ => return err(start, format!("unknown identifier `{name}`")),
            }
        } else {
            return err(start, format!("unknown identifier `{name}`"));
        };
        if index >= self.dim {
            return err(
                start,
                format!("variable `{name}` out of range for dimension {}", self.dim),
            );
        }
        Ok(Node { kind: NodeKind::Var(index), span: Some((start, end)) })
    }
}

fn span_join(op: BinaryOp, a: Node, b: Node) -> Node {
    let span = match (a.span, b.span) {
        (Some((s, _)), Some((_, e))) => Some((s, e)),
        _ => None,
    };
    Node { kind: NodeKind::Binary(op, Box::new(a), Box::new(b)), span }
}
