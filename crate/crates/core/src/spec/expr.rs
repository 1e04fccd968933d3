//! Arithmetic mini-language used by `calculate` transforms.
//!
//! Grammar: field references (`datum.name`, `datum['name']`, `datum["name"]`),
//! numeric literals, `+ - * /`, unary minus and parentheses. Anything else is
//! rejected so that the set of fields an expression reads is always known.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Field(String),
    Number(f64),
    Neg(Box<Expr>),
    Binary(Box<Expr>, BinOp, Box<Expr>),
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid expression at offset {offset}: {message}")]
pub struct ExprError {
    pub offset: usize,
    pub message: String,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        let mut p = Parser { src: text, pos: 0 };
        let expr = p.sum()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(expr)
    }

    /// Fields read by the expression, in first-reference order, deduplicated.
    pub fn fields(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        self.visit_fields(&mut |f| {
            if seen.insert(f.to_string()) {
                out.push(f.to_string());
            }
        });
        out
    }

    fn visit_fields(&self, f: &mut impl FnMut(&str)) {
        match self {
            Expr::Field(name) => f(name),
            Expr::Number(_) => {}
            Expr::Neg(inner) => inner.visit_fields(f),
            Expr::Binary(l, _, r) => {
                l.visit_fields(f);
                r.visit_fields(f);
            }
        }
    }

    pub fn rename_fields(&mut self, rename: &impl Fn(&str) -> Option<String>) {
        match self {
            Expr::Field(name) => {
                if let Some(new) = rename(name) {
                    *name = new;
                }
            }
            Expr::Number(_) => {}
            Expr::Neg(inner) => inner.rename_fields(rename),
            Expr::Binary(l, _, r) => {
                l.rename_fields(rename);
                r.rename_fields(rename);
            }
        }
    }

    /// Evaluates with `lookup` resolving field values; `None` propagates.
    pub fn eval(&self, lookup: &impl Fn(&str) -> Option<f64>) -> Option<f64> {
        match self {
            Expr::Field(name) => lookup(name),
            Expr::Number(v) => Some(*v),
            Expr::Neg(inner) => inner.eval(lookup).map(|v| -v),
            Expr::Binary(l, op, r) => {
                let (a, b) = (l.eval(lookup)?, r.eval(lookup)?);
                let v = match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                };
                v.is_finite().then_some(v)
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8, right: bool) -> fmt::Result {
        match self {
            Expr::Field(name) => {
                if is_identifier(name) {
                    write!(f, "datum.{name}")
                } else {
                    write!(f, "datum['{}']", name.replace('\'', "\\'"))
                }
            }
            Expr::Number(v) => write!(f, "{v}"),
            Expr::Neg(inner) => {
                write!(f, "-")?;
                inner.fmt_prec(f, 3, false)
            }
            Expr::Binary(l, op, r) => {
                let prec = op.precedence();
                let paren = prec < parent || (right && prec == parent);
                if paren {
                    write!(f, "(")?;
                }
                l.fmt_prec(f, prec, false)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, prec, true)?;
                if paren {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0, false)
    }
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            let rhs = self.product()?;
            lhs = Expr::Binary(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            let rhs = self.unary()?;
            lhs = Expr::Binary(Box::new(lhs), op, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.sum()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(_) if self.rest().starts_with("datum") => self.field(),
            Some(_) => Err(self.error("expected a number, a datum field or '('")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let rest = self.rest();
        let mut end = 0;
        let bytes = rest.as_bytes();
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut exp = end + 1;
            if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                exp += 1;
            }
            let digits_start = exp;
            while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                exp += 1;
            }
            if exp > digits_start {
                end = exp;
            }
        }
        let value: f64 = rest[..end]
            .parse()
            .map_err(|_| self.error("malformed number"))?;
        self.pos += end;
        Ok(Expr::Number(value))
    }

    fn field(&mut self) -> Result<Expr, ExprError> {
        self.pos += "datum".len();
        if self.rest().starts_with('.') {
            self.pos += 1;
            let rest = self.rest();
            let end = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '$'))
                .unwrap_or(rest.len());
            if end == 0 {
                return Err(self.error("expected field name after 'datum.'"));
            }
            let name = rest[..end].to_string();
            self.pos += end;
            return Ok(Expr::Field(name));
        }
        if self.rest().starts_with('[') {
            self.pos += 1;
            let quote = match self.rest().chars().next() {
                Some(q @ ('\'' | '"')) => q,
                _ => return Err(self.error("expected quoted field name")),
            };
            self.pos += 1;
            let mut name = String::new();
            let mut chars = self.rest().char_indices();
            loop {
                match chars.next() {
                    Some((_, '\\')) => match chars.next() {
                        Some((_, c)) => name.push(c),
                        None => return Err(self.error("unterminated field name")),
                    },
                    Some((i, c)) if c == quote => {
                        self.pos += i + 1;
                        break;
                    }
                    Some((_, c)) => name.push(c),
                    None => return Err(self.error("unterminated field name")),
                }
            }
            if !self.rest().starts_with(']') {
                return Err(self.error("expected ']'"));
            }
            self.pos += 1;
            return Ok(Expr::Field(name));
        }
        Err(self.error("expected '.' or '[' after datum"))
    }
}
