//! Boolean/arithmetic constraint expressions over parameter names.
//!
//! Grammar (EBNF, whitespace-insensitive):
//!
//! ```text
//! expr    := or ;
//! or      := and { "||" and } ;
//! and     := cmp { "&&" cmp } ;
//! cmp     := sum [ ("==" | "!=" | "<" | "<=" | ">" | ">=") sum ] ;
//! sum     := term { ("+" | "-") term } ;
//! term    := unary { ("*" | "/" | "%") unary } ;
//! unary   := "!" unary | "-" unary | atom ;
//! atom    := integer | identifier | "(" expr ")" ;
//! ```
//!
//! Arithmetic is 64-bit integer with truncating division toward zero.
//! `&&` and `||` short-circuit, so guarded divisions like
//! `b != 0 && a % b == 0` are expressible. Expressions are type-checked
//! at parse time: a constraint must evaluate to a boolean, and mixing
//! booleans into arithmetic is a parse error.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Ident(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    UnboundIdentifier(String),
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Int,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Int(i64),
    Ident(String),
    Op(BinOp),
    Not,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek_byte(&self, off: usize) -> u8 {
        *self.src.get(self.pos + off).unwrap_or(&0)
    }

    /// Returns (token, byte offset of its start), or None at end of input.
    fn next(&mut self) -> Result<Option<(Token, usize)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let b = self.src[self.pos];
        let tok = match b {
            b'0'..=b'9' => {
                let mut end = self.pos;
                while end < self.src.len() && self.src[end].is_ascii_digit() {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: i64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    message: format!("integer literal `{text}` out of range"),
                })?;
                self.pos = end;
                Token::Int(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                self.pos = end;
                Token::Ident(text.to_string())
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'+' => {
                self.pos += 1;
                Token::Op(BinOp::Add)
            }
            b'-' => {
                self.pos += 1;
                Token::Op(BinOp::Sub)
            }
            b'*' => {
                self.pos += 1;
                Token::Op(BinOp::Mul)
            }
            b'/' => {
                self.pos += 1;
                Token::Op(BinOp::Div)
            }
            b'%' => {
                self.pos += 1;
                Token::Op(BinOp::Rem)
            }
            b'=' if self.peek_byte(1) == b'=' => {
                self.pos += 2;
                Token::Op(BinOp::Eq)
            }
            b'!' if self.peek_byte(1) == b'=' => {
                self.pos += 2;
                Token::Op(BinOp::Ne)
            }
            b'!' => {
                self.pos += 1;
                Token::Not
            }
            b'<' if self.peek_byte(1) == b'=' => {
                self.pos += 2;
                Token::Op(BinOp::Le)
            }
            b'<' => {
                self.pos += 1;
                Token::Op(BinOp::Lt)
            }
            b'>' if self.peek_byte(1) == b'=' => {
                self.pos += 2;
                Token::Op(BinOp::Ge)
            }
            b'>' => {
                self.pos += 1;
                Token::Op(BinOp::Gt)
            }
            b'&' if self.peek_byte(1) == b'&' => {
                self.pos += 2;
                Token::Op(BinOp::And)
            }
            b'|' if self.peek_byte(1) == b'|' => {
                self.pos += 2;
                Token::Op(BinOp::Or)
            }
            other => {
                return Err(ParseError {
                    offset: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    cursor: usize,
    end_offset: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.cursor).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.cursor)
            .map(|(_, o)| *o)
            .unwrap_or(self.end_offset)
    }

    fn bump(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.cursor).map(|(t, _)| t.clone());
        if tok.is_some() {
            self.cursor += 1;
        }
        tok
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn parse_or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_and()?;
        while self.peek() == Some(&Token::Op(BinOp::Or)) {
            self.bump();
            let rhs = self.parse_and()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_cmp()?;
        while self.peek() == Some(&Token::Op(BinOp::And)) {
            self.bump();
            let rhs = self.parse_cmp()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.parse_sum()?;
        if let Some(Token::Op(op)) = self.peek() {
            if op.precedence() == 3 {
                let op = *op;
                self.bump();
                let rhs = self.parse_sum()?;
                // Comparisons do not chain: `a < b < c` is rejected here
                // because the result would be a boolean operand to `<`.
                return Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    fn parse_sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_term()?;
        while let Some(Token::Op(op @ (BinOp::Add | BinOp::Sub))) = self.peek() {
            let op = *op;
            self.bump();
            let rhs = self.parse_term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        while let Some(Token::Op(op @ (BinOp::Mul | BinOp::Div | BinOp::Rem))) = self.peek() {
            let op = *op;
            self.bump();
            let rhs = self.parse_unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Token::Not) => {
                self.bump();
                let inner = self.parse_unary()?;
                Ok(Expr::Unary(UnaryOp::Not, Box::new(inner)))
            }
            Some(Token::Op(BinOp::Sub)) => {
                self.bump();
                let inner = self.parse_unary()?;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)))
            }
            _ => self.parse_atom(),
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(Token::Int(v)) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Some(Token::Ident(name)) => {
                self.bump();
                Ok(Expr::Ident(name))
            }
            Some(Token::LParen) => {
                self.bump();
                let inner = self.parse_or()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(ParseError {
                        offset: self.end_offset.min(self.offset()),
                        message: "expected `)`".to_string(),
                    }),
                }
            }
            Some(tok) => Err(self.error(format!("expected expression, found {tok:?}"))),
            None => Err(self.error("expected expression, found end of input")),
        }
    }
}

fn type_of(expr: &Expr, src_len: usize) -> Result<Ty, ParseError> {
    let mismatch = |message: String| ParseError {
        offset: src_len,
        message,
    };
    match expr {
        Expr::Int(_) | Expr::Ident(_) => Ok(Ty::Int),
        Expr::Unary(UnaryOp::Neg, inner) => {
            if type_of(inner, src_len)? != Ty::Int {
                return Err(mismatch("unary `-` requires an integer operand".into()));
            }
            Ok(Ty::Int)
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            if type_of(inner, src_len)? != Ty::Bool {
                return Err(mismatch("`!` requires a boolean operand".into()));
            }
            Ok(Ty::Bool)
        }
        Expr::Binary(op, lhs, rhs) => {
            let lt = type_of(lhs, src_len)?;
            let rt = type_of(rhs, src_len)?;
            match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                    if lt != Ty::Int || rt != Ty::Int {
                        return Err(mismatch(format!(
                            "`{}` requires integer operands",
                            op.symbol()
                        )));
                    }
                    Ok(Ty::Int)
                }
                BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    if lt != Ty::Int || rt != Ty::Int {
                        return Err(mismatch(format!(
                            "`{}` compares integers, not booleans",
                            op.symbol()
                        )));
                    }
                    Ok(Ty::Bool)
                }
                BinOp::And | BinOp::Or => {
                    if lt != Ty::Bool || rt != Ty::Bool {
                        return Err(mismatch(format!(
                            "`{}` requires boolean operands",
                            op.symbol()
                        )));
                    }
                    Ok(Ty::Bool)
                }
            }
        }
    }
}

/// Parses a constraint expression. The result is guaranteed to be
/// boolean-typed.
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(source);
    let mut tokens = Vec::new();
    while let Some(tok) = lexer.next()? {
        tokens.push(tok);
    }
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end_offset: source.len(),
    };
    let expr = parser.parse_or()?;
    if parser.cursor != parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    if type_of(&expr, source.len())? != Ty::Bool {
        return Err(ParseError {
            offset: source.len(),
            message: "constraint must be a boolean expression".to_string(),
        });
    }
    Ok(expr)
}

/// Parses an arbitrary expression without requiring a boolean result.
/// Used for tests and tooling; constraints go through [`parse`].
pub fn parse_any(source: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(source);
    let mut tokens = Vec::new();
    while let Some(tok) = lexer.next()? {
        tokens.push(tok);
    }
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end_offset: source.len(),
    };
    let expr = parser.parse_or()?;
    if parser.cursor != parser.tokens.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    type_of(&expr, source.len())?;
    Ok(expr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

fn eval_value<F>(expr: &Expr, lookup: &F) -> Result<Value, EvalError>
where
    F: Fn(&str) -> Option<i64>,
{
    match expr {
        Expr::Int(v) => Ok(Value::Int(*v)),
        Expr::Ident(name) => lookup(name)
            .map(Value::Int)
            .ok_or_else(|| EvalError::UnboundIdentifier(name.clone())),
        Expr::Unary(UnaryOp::Neg, inner) => match eval_value(inner, lookup)? {
            Value::Int(v) => Ok(Value::Int(v.wrapping_neg())),
            Value::Bool(_) => unreachable!("rejected by type check"),
        },
        Expr::Unary(UnaryOp::Not, inner) => match eval_value(inner, lookup)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            Value::Int(_) => unreachable!("rejected by type check"),
        },
        Expr::Binary(op, lhs, rhs) => {
            // Short-circuit boolean connectives.
            if matches!(op, BinOp::And | BinOp::Or) {
                let l = match eval_value(lhs, lookup)? {
                    Value::Bool(b) => b,
                    Value::Int(_) => unreachable!("rejected by type check"),
                };
                match (op, l) {
                    (BinOp::And, false) => return Ok(Value::Bool(false)),
                    (BinOp::Or, true) => return Ok(Value::Bool(true)),
                    _ => {}
                }
                return eval_value(rhs, lookup);
            }
            let l = match eval_value(lhs, lookup)? {
                Value::Int(v) => v,
                Value::Bool(_) => unreachable!("rejected by type check"),
            };
            let r = match eval_value(rhs, lookup)? {
                Value::Int(v) => v,
                Value::Bool(_) => unreachable!("rejected by type check"),
            };
            let out = match op {
                BinOp::Add => Value::Int(l.wrapping_add(r)),
                BinOp::Sub => Value::Int(l.wrapping_sub(r)),
                BinOp::Mul => Value::Int(l.wrapping_mul(r)),
                BinOp::Div => {
                    if r == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Value::Int(l.wrapping_div(r))
                }
                BinOp::Rem => {
                    if r == 0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Value::Int(l.wrapping_rem(r))
                }
                BinOp::Eq => Value::Bool(l == r),
                BinOp::Ne => Value::Bool(l != r),
                BinOp::Lt => Value::Bool(l < r),
                BinOp::Le => Value::Bool(l <= r),
                BinOp::Gt => Value::Bool(l > r),
                BinOp::Ge => Value::Bool(l >= r),
                BinOp::And | BinOp::Or => unreachable!("handled above"),
            };
            Ok(out)
        }
    }
}

/// Evaluates a boolean-typed expression against a name binding.
pub fn evaluate<F>(expr: &Expr, lookup: &F) -> Result<bool, EvalError>
where
    F: Fn(&str) -> Option<i64>,
{
    match eval_value(expr, lookup)? {
        Value::Bool(b) => Ok(b),
        Value::Int(_) => unreachable!("parse only yields boolean-typed constraints"),
    }
}

impl Expr {
    /// Collects every identifier referenced by the expression.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(expr: &'a Expr, out: &mut Vec<&'a str>) {
            match expr {
                Expr::Int(_) => {}
                Expr::Ident(name) => out.push(name.as_str()),
                Expr::Unary(_, inner) => walk(inner, out),
                Expr::Binary(_, lhs, rhs) => {
                    walk(lhs, out);
                    walk(rhs, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Ident(name) => write!(f, "{name}"),
            Expr::Unary(op, inner) => {
                let sym = match op {
                    UnaryOp::Not => "!",
                    UnaryOp::Neg => "-",
                };
                write!(f, "{sym}")?;
                inner.fmt_prec(f, 6)
            }
            Expr::Binary(op, lhs, rhs) => {
                let prec = op.precedence();
                let need = prec < parent;
                if need {
                    write!(f, "(")?;
                }
                lhs.fmt_prec(f, prec)?;
                write!(f, " {} ", op.symbol())?;
                // Right operand gets prec+1: all our binary operators
                // associate left, so equal precedence on the right needs
                // parentheses to round-trip structurally.
                rhs.fmt_prec(f, prec + 1)?;
                if need {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
