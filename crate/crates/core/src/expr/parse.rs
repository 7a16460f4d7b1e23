//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr     := ['-'] term (('+'|'-') term)*
//! term     := factor (('*'|'/') factor)*
//! factor   := base ('^' exponent)?
//! exponent := ['-'] number | '(' ['-'] number ['/' number] ')'
//! base     := number | ident | func '(' expr ')' | '(' expr ')'
//! func     := sqrt | exp | log | sin | cos | neg
//! ident    := x1..xn, plus aliases x, y, z when n <= 3
//! ```
//!
//! Whitespace-insensitive, ASCII only. Exponents must be constant
//! rationals. Decimal literals that are exactly representable become
//! rationals; everything else becomes a double.

use super::{Expression, Node, Scalar, UnaryOp, make_bin, make_pow, make_unary, num_node, BinOp};
use num::rational::Rational64;
use std::sync::Arc;

/// Parse failure with the byte offset where it happened.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("variable x{index} at position {pos} exceeds dimension {dim}")]
    VariableOutOfRange { pos: usize, index: usize, dim: usize },
    #[error("exponent at position {pos} must be a constant rational")]
    ExponentNotRational { pos: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(Scalar),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ParseError> {
        let mut out = Vec::new();
        while let Some(&c) = self.peek() {
            let start = self.pos;
            match c {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.pos += 1;
                }
                b'+' => self.push_single(&mut out, Tok::Plus),
                b'-' => self.push_single(&mut out, Tok::Minus),
                b'*' => self.push_single(&mut out, Tok::Star),
                b'/' => self.push_single(&mut out, Tok::Slash),
                b'^' => self.push_single(&mut out, Tok::Caret),
                b'(' => self.push_single(&mut out, Tok::LParen),
                b')' => self.push_single(&mut out, Tok::RParen),
                b'0'..=b'9' | b'.' => {
                    let tok = self.lex_number()?;
                    out.push((start, tok));
                }
                b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                    let tok = self.lex_ident();
                    out.push((start, tok));
                }
                other => {
                    return Err(ParseError::Syntax {
                        pos: start,
                        message: format!("unexpected character `{}`", other as char),
                    });
                }
            }
        }
        Ok(out)
    }

    fn peek(&self) -> Option<&u8> {
        self.src.get(self.pos)
    }

    fn push_single(&mut self, out: &mut Vec<(usize, Tok)>, tok: Tok) {
        out.push((self.pos, tok));
        self.pos += 1;
    }

    fn lex_ident(&mut self) -> Tok {
        let start = self.pos;
        while let Some(&c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        Tok::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn lex_number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let mut is_float = false;
        if matches!(self.peek(), Some(b'.')) {
            is_float = true;
            self.pos += 1;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        let mut has_exp = false;
        if matches!(self.peek(), Some(b'e' | b'E')) {
            // Only treat it as an exponent marker when digits follow.
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(b'0'..=b'9')) {
                has_exp = true;
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if text == "." {
            return Err(ParseError::Syntax { pos: start, message: "lone `.` is not a number".into() });
        }
        if !is_float && !has_exp {
            if let Ok(k) = text.parse::<i64>() {
                return Ok(Tok::Num(Scalar::integer(k)));
            }
        }
        if !has_exp {
            if let Some(r) = decimal_to_rational(text) {
                return Ok(Tok::Num(Scalar::Rational(r)));
            }
        }
        let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
            pos: start,
            message: format!("invalid number `{text}`"),
        })?;
        if !v.is_finite() {
            return Err(ParseError::Syntax { pos: start, message: format!("number `{text}` overflows") });
        }
        Ok(Tok::Num(Scalar::Float(v)))
    }
}

/// Exact conversion of a finite decimal literal like `0.125` into p/10^k.
fn decimal_to_rational(text: &str) -> Option<Rational64> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((a, b)) => (a, b),
        None => (text, ""),
    };
    let digits: String = format!("{int_part}{frac_part}");
    if digits.is_empty() {
        return None;
    }
    let numer: i64 = digits.parse().ok()?;
    let denom = 10i64.checked_pow(u32::try_from(frac_part.len()).ok()?)?;
    Some(Rational64::new(numer, denom))
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    dim: usize,
    end: usize,
}

pub(super) fn parse(text: &str, dim: usize) -> Result<Expression, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser { toks, at: 0, dim, end: text.len() };
    let node = p.expr()?;
    if let Some((pos, _)) = p.toks.get(p.at) {
        return Err(ParseError::Syntax { pos: *pos, message: "unexpected trailing input".into() });
    }
    Ok(Expression { dim, node })
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |(p, _)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(_, t)| t.clone());
        self.at += t.is_some() as usize;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(ParseError::Syntax { pos: self.pos(), message: format!("expected {what}") })
        }
    }

    fn expr(&mut self) -> Result<Arc<Node>, ParseError> {
        let negate = if self.eat(&Tok::Minus) {
            true
        } else {
            self.eat(&Tok::Plus);
            false
        };
        let mut acc = self.term()?;
        if negate {
            acc = make_unary(UnaryOp::Neg, acc);
        }
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.term()?;
                acc = make_bin(BinOp::Add, acc, rhs);
            } else if self.eat(&Tok::Minus) {
                let rhs = self.term()?;
                acc = make_bin(BinOp::Sub, acc, rhs);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Arc<Node>, ParseError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(&Tok::Star) {
                let rhs = self.factor()?;
                acc = make_bin(BinOp::Mul, acc, rhs);
            } else if self.eat(&Tok::Slash) {
                let rhs = self.factor()?;
                acc = make_bin(BinOp::Div, acc, rhs);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Arc<Node>, ParseError> {
        let base = self.base()?;
        if self.eat(&Tok::Caret) {
            let exp = self.exponent()?;
            return Ok(make_pow(base, exp));
        }
        Ok(base)
    }

    /// A bare exponent is one signed number (`x^-2`, `x^2.5`); the
    /// numerator/denominator form needs parentheses (`x^(3/2)`) so that a
    /// following `/` keeps its ordinary division meaning.
    fn exponent(&mut self) -> Result<Rational64, ParseError> {
        if self.eat(&Tok::LParen) {
            let r = self.signed_rational(true)?;
            self.expect(Tok::RParen, "`)` after exponent")?;
            Ok(r)
        } else {
            self.signed_rational(false)
        }
    }

    fn signed_rational(&mut self, allow_slash: bool) -> Result<Rational64, ParseError> {
        let negative = self.eat(&Tok::Minus);
        let pos = self.pos();
        let mut r = self.rational_literal()?;
        if allow_slash && self.eat(&Tok::Slash) {
            let den = self.rational_literal()?;
            if !den.is_integer() || !r.is_integer() || *den.numer() == 0 {
                return Err(ParseError::ExponentNotRational { pos });
            }
            r = Rational64::new(*r.numer(), *den.numer());
        }
        Ok(if negative { -r } else { r })
    }

    fn rational_literal(&mut self) -> Result<Rational64, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(Scalar::Rational(r))) => Ok(r),
            _ => Err(ParseError::ExponentNotRational { pos }),
        }
    }

    fn base(&mut self) -> Result<Arc<Node>, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(s)) => Ok(num_node(s)),
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "closing `)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => self.ident(pos, name),
            Some(other) => Err(ParseError::Syntax {
                pos,
                message: format!("expected a number, identifier or `(`, found `{other:?}`"),
            }),
            None => Err(ParseError::Syntax { pos, message: "unexpected end of input".into() }),
        }
    }

    fn ident(&mut self, pos: usize, name: String) -> Result<Arc<Node>, ParseError> {
        let func = match name.as_str() {
            "neg" => Some(UnaryOp::Neg),
            "sqrt" => Some(UnaryOp::Sqrt),
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            _ => None,
        };
        if let Some(op) = func {
            self.expect(Tok::LParen, &format!("`(` after function `{name}`"))?;
            let arg = self.expr()?;
            self.expect(Tok::RParen, &format!("closing `)` of `{name}`"))?;
            return Ok(make_unary(op, arg));
        }
        let index = self.variable_index(pos, &name)?;
        if index >= self.dim {
            return Err(ParseError::VariableOutOfRange { pos, index: index + 1, dim: self.dim });
        }
        Ok(Arc::new(Node::Var(index)))
    }

    /// Resolves `x1..xn` and, for dimensions up to 3, the aliases x, y, z.
    fn variable_index(&self, pos: usize, name: &str) -> Result<usize, ParseError> {
        if self.dim <= 3 {
            match name {
                "x" => return Ok(0),
                "y" => return Ok(1),
                "z" => return Ok(2),
                _ => {}
            }
        }
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(k) = rest.parse::<usize>() {
                    if k >= 1 {
                        return Ok(k - 1);
                    }
                }
            }
        }
        Err(ParseError::UnknownIdentifier { pos, name: name.to_string() })
    }
}
