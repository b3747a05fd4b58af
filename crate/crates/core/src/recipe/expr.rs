//! Condition expression grammar.
//!
//! ```text
//! expr    := or
//! or      := and ("or" and)*
//! and     := not ("and" not)*
//! not     := "not" not | compare
//! compare := atom (("==" | "!=" | "<" | "<=" | ">" | ">=") atom)?
//! atom    := "(" expr ")" | "exists" "(" ref ")" | ref | literal
//! ref     := ("params" | "var" | "db" | "belief") "." ident ("." ident)*
//! literal := number | "true" | "false" | "null" | 'text' | "text"
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Expression;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoolOp {
    And,
    Or,
    Not,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid expression `{source_text}` at offset {offset}: {message}")]
pub struct ExprParseError {
    pub source_text: String,
    pub offset: usize,
    pub message: String,
}

/// Parse a dotted reference (`params.x`, `var.x`, `db.a.b`, `belief.K`).
pub(crate) fn reference_from_str(s: &str) -> Option<Expression> {
    let (ns, rest) = s.split_once('.')?;
    if rest.is_empty() || !rest.split('.').all(is_ident) {
        return None;
    }
    let single = !rest.contains('.');
    match ns {
        "params" if single => Some(Expression::ParamRef(rest.to_string())),
        "var" if single => Some(Expression::VarRef(rest.to_string())),
        "db" => Some(Expression::DbRef(rest.to_string())),
        "belief" if single => Some(Expression::BeliefRef(rest.to_string())),
        _ => None,
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Num(Value),
    Text(String),
    Op(CompareOp),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprParseError> {
    let err = |offset: usize, message: &str| ExprParseError {
        source_text: src.to_string(),
        offset,
        message: message.to_string(),
    };
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            '=' | '!' | '<' | '>' => {
                let next = bytes.get(i + 1).copied().map(char::from);
                let (op, len) = match (c, next) {
                    ('=', Some('=')) => (CompareOp::Eq, 2),
                    ('!', Some('=')) => (CompareOp::Ne, 2),
                    ('<', Some('=')) => (CompareOp::Le, 2),
                    ('>', Some('=')) => (CompareOp::Ge, 2),
                    ('<', _) => (CompareOp::Lt, 1),
                    ('>', _) => (CompareOp::Gt, 1),
                    _ => return Err(err(i, "expected comparison operator")),
                };
                out.push((i, Tok::Op(op)));
                i += len;
            }
            '\'' | '"' => {
                let start = i;
                i += 1;
                let mut text = String::new();
                loop {
                    match src[i..].chars().next() {
                        None => return Err(err(start, "unterminated string")),
                        Some('\\') => {
                            let escaped = src[i + 1..].chars().next().ok_or_else(|| err(i, "dangling escape"))?;
                            text.push(escaped);
                            i += 1 + escaped.len_utf8();
                        }
                        Some(q) if q == c => {
                            i += 1;
                            break;
                        }
                        Some(other) => {
                            text.push(other);
                            i += other.len_utf8();
                        }
                    }
                }
                out.push((start, Tok::Text(text)));
            }
            c if c.is_ascii_digit() || (c == '-' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit())) => {
                let start = i;
                i += 1;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || matches!(bytes[i], b'.' | b'e' | b'E')) {
                    i += 1;
                }
                let lit = &src[start..i];
                let v = if let Ok(n) = lit.parse::<i64>() {
                    Value::Int(n)
                } else if let Ok(f) = lit.parse::<f64>() {
                    Value::Float(f)
                } else {
                    return Err(err(start, "malformed number"));
                };
                out.push((start, Tok::Num(v)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || matches!(bytes[i], b'_' | b'.')) {
                    i += 1;
                }
                out.push((start, Tok::Word(src[start..i].to_string())));
            }
            _ => return Err(err(i, "unexpected character")),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> ExprParseError {
        let offset = self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.src.len());
        ExprParseError {
            source_text: self.src.to_string(),
            offset,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn peek_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ExprParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn chain(&mut self, word: &str, op: BoolOp, next: fn(&mut Self) -> Result<Expression, ExprParseError>) -> Result<Expression, ExprParseError> {
        let first = next(self)?;
        if !self.peek_word(word) {
            return Ok(first);
        }
        let mut operands = vec![first];
        while self.peek_word(word) {
            self.pos += 1;
            operands.push(next(self)?);
        }
        Ok(Expression::Bool { op, operands })
    }

    fn or(&mut self) -> Result<Expression, ExprParseError> {
        self.chain("or", BoolOp::Or, Self::and)
    }

    fn and(&mut self) -> Result<Expression, ExprParseError> {
        self.chain("and", BoolOp::And, Self::not)
    }

    fn not(&mut self) -> Result<Expression, ExprParseError> {
        if self.peek_word("not") {
            self.pos += 1;
            let inner = self.not()?;
            return Ok(Expression::Bool {
                op: BoolOp::Not,
                operands: vec![inner],
            });
        }
        self.compare()
    }

    fn compare(&mut self) -> Result<Expression, ExprParseError> {
        let lhs = self.atom()?;
        if let Some(Tok::Op(op)) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.atom()?;
            return Ok(Expression::Compare {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            });
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expression, ExprParseError> {
        match self.bump() {
            Some(Tok::LParen) => {
                let e = self.or()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Num(v)) => Ok(Expression::Literal(v)),
            Some(Tok::Text(s)) => Ok(Expression::Literal(Value::Str(s))),
            Some(Tok::Word(w)) => match w.as_str() {
                "true" => Ok(Expression::Literal(Value::Bool(true))),
                "false" => Ok(Expression::Literal(Value::Bool(false))),
                "null" => Ok(Expression::Literal(Value::Null)),
                "exists" => {
                    self.expect(Tok::LParen, "`(` after exists")?;
                    let inner = match self.bump() {
                        Some(Tok::Word(r)) => reference_from_str(&r),
                        _ => None,
                    };
                    let Some(inner) = inner else {
                        self.pos -= 1;
                        return Err(self.err("exists() takes a reference"));
                    };
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expression::Exists(Box::new(inner)))
                }
                other => {
                    let r = reference_from_str(other);
                    r.ok_or_else(|| {
                        self.pos -= 1;
                        self.err(format!("unknown name `{other}`"))
                    })
                }
            },
            Some(_) => {
                self.pos -= 1;
                Err(self.err("unexpected token"))
            }
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Parse a condition string into an [`Expression`].
pub fn parse_expression(src: &str) -> Result<Expression, ExprParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser { src, toks, pos: 0 };
    let e = p.or()?;
    if p.pos < p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

fn write_literal(v: &Value, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match v {
        Value::Str(s) => {
            f.write_str("'")?;
            for c in s.chars() {
                if c == '\'' || c == '\\' {
                    f.write_str("\\")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str("'")
        }
        Value::Float(x) => write!(f, "{x:?}"),
        other => write!(f, "{other}"),
    }
}

fn write_operand(e: &Expression, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if matches!(e, Expression::Bool { .. } | Expression::Compare { .. }) {
        f.write_str("(")?;
        write_expression(e, f)?;
        f.write_str(")")
    } else {
        write_expression(e, f)
    }
}

pub(crate) fn write_expression(e: &Expression, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expression::Literal(v) => write_literal(v, f),
        Expression::ParamRef(n) => write!(f, "params.{n}"),
        Expression::VarRef(n) => write!(f, "var.{n}"),
        Expression::DbRef(k) => write!(f, "db.{k}"),
        Expression::BeliefRef(k) => write!(f, "belief.{k}"),
        Expression::Compare { op, lhs, rhs } => {
            write_operand(lhs, f)?;
            write!(f, " {} ", op.symbol())?;
            write_operand(rhs, f)
        }
        Expression::Bool { op: BoolOp::Not, operands } => {
            f.write_str("not ")?;
            match operands.first() {
                Some(inner) => write_operand(inner, f),
                None => Ok(()),
            }
        }
        Expression::Bool { op, operands } => {
            let word = if *op == BoolOp::And { " and " } else { " or " };
            for (i, o) in operands.iter().enumerate() {
                if i > 0 {
                    f.write_str(word)?;
                }
                if matches!(o, Expression::Bool { op: BoolOp::And | BoolOp::Or, .. }) {
                    f.write_str("(")?;
                    write_expression(o, f)?;
                    f.write_str(")")?;
                } else {
                    write_expression(o, f)?;
                }
            }
            Ok(())
        }
        Expression::Exists(inner) => {
            f.write_str("exists(")?;
            write_expression(inner, f)?;
            f.write_str(")")
        }
    }
}
