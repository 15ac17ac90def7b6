//! Expression parsing, typing and evaluation.
//!
//! Precedence from tightest: `*`, then `+ -`, then `= <`; all binary
//! operators are left-associative.

use std::fmt;
use std::ops::Range;

use crate::markup::{Label, Type};
use crate::syntax::TokenKind;

use super::env::{Environment, Value};
use super::{Cx, Tok};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
}

impl BinOp {
    fn from_token(text: &str) -> Option<Self> {
        Some(match text {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "=" => BinOp::Eq,
            "<" => BinOp::Lt,
            _ => return None,
        })
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Lt => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul => 3,
        }
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Lt => "<",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(i64),
    Bool(bool),
    Var(String),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Paren(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    /// Range relative to the command span.
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub range: Range<usize>,
}

/// Recursive-descent parser over the significant tokens of a command.
pub(super) struct ExprParser<'t> {
    toks: &'t [Tok],
    pos: usize,
    /// End of the text, for errors at end of input.
    end: usize,
}

impl<'t> ExprParser<'t> {
    pub(super) fn new(toks: &'t [Tok], end: usize) -> Self {
        ExprParser { toks, pos: 0, end }
    }

    pub(super) fn position(&self) -> usize {
        self.pos
    }

    pub(super) fn parse(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn peek(&self) -> Option<&'t Tok> {
        self.toks.get(self.pos)
    }

    fn eof_error(&self, what: &str) -> ParseError {
        ParseError {
            message: format!("expected {what}, found end of command"),
            range: self.end.saturating_sub(1)..self.end.max(1),
        }
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.atom()?;
        while let Some(tok) = self.peek() {
            let Some(op) = (tok.kind == TokenKind::Delimiter)
                .then(|| BinOp::from_token(&tok.text))
                .flatten()
            else {
                break;
            };
            if op.precedence() < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(op.precedence() + 1)?;
            let range = lhs.range.start..rhs.range.end;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                range,
            };
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let tok = self.peek().ok_or_else(|| self.eof_error("an expression"))?;
        let kind = match tok.kind {
            TokenKind::Number => match tok.text.parse::<i64>() {
                Ok(n) => ExprKind::Int(n),
                Err(_) => {
                    return Err(ParseError {
                        message: format!("integer literal {} is out of range", tok.text),
                        range: tok.range.clone(),
                    })
                }
            },
            TokenKind::Ident if tok.text == "true" => ExprKind::Bool(true),
            TokenKind::Ident if tok.text == "false" => ExprKind::Bool(false),
            TokenKind::Ident => ExprKind::Var(tok.text.clone()),
            TokenKind::Delimiter if tok.text == "(" => {
                let start = tok.range.start;
                self.pos += 1;
                let inner = self.binary(1)?;
                match self.peek() {
                    Some(close) if close.kind == TokenKind::Delimiter && close.text == ")" => {
                        self.pos += 1;
                        return Ok(Expr {
                            kind: ExprKind::Paren(Box::new(inner)),
                            range: start..close.range.end,
                        });
                    }
                    Some(other) => {
                        return Err(ParseError {
                            message: format!("expected `)`, found `{}`", other.text),
                            range: other.range.clone(),
                        })
                    }
                    None => return Err(self.eof_error("`)`")),
                }
            }
            _ => {
                return Err(ParseError {
                    message: format!("expected an expression, found `{}`", tok.text),
                    range: tok.range.clone(),
                })
            }
        };
        self.pos += 1;
        Ok(Expr {
            kind,
            range: tok.range.clone(),
        })
    }
}

/// Result of typing one expression: its type (if well-typed) and its value
/// (if evaluation succeeded).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Typed {
    Ok(Value),
    /// Well-typed but evaluation failed (overflow).
    NoValue(Type),
    IllTyped,
}

impl Typed {
    pub fn ty(self) -> Option<Type> {
        match self {
            Typed::Ok(v) => Some(v.ty()),
            Typed::NoValue(t) => Some(t),
            Typed::IllTyped => None,
        }
    }

    pub fn value(self) -> Option<Value> {
        match self {
            Typed::Ok(v) => Some(v),
            _ => None,
        }
    }
}

/// Types and evaluates `expr`, recording markup and errors in `cx`.
pub(super) fn check_expr(expr: &Expr, env: &Environment, cx: &mut Cx) -> Typed {
    let typed = match &expr.kind {
        ExprKind::Int(n) => Typed::Ok(Value::Int(*n)),
        ExprKind::Bool(b) => Typed::Ok(Value::Bool(*b)),
        ExprKind::Var(name) => match env.lookup(name) {
            Some(def) => {
                cx.mark(
                    expr.range.clone(),
                    Label::UseSite {
                        ident: name.clone(),
                        def: def.position.clone(),
                    },
                );
                Typed::Ok(def.value)
            }
            None => {
                cx.error(format!("unbound identifier {name}"), expr.range.clone());
                Typed::IllTyped
            }
        },
        ExprKind::Paren(inner) => check_expr(inner, env, cx),
        ExprKind::Binary(op, lhs, rhs) => {
            let l = check_expr(lhs, env, cx);
            let r = check_expr(rhs, env, cx);
            match (l.ty(), r.ty()) {
                (Some(lt), Some(rt)) => binary(*op, l, r, lt, rt, expr.range.clone(), cx),
                _ => Typed::IllTyped,
            }
        }
    };
    if let Some(ty) = typed.ty() {
        cx.mark(expr.range.clone(), Label::InferredType { ty });
    }
    typed
}

fn binary(op: BinOp, l: Typed, r: Typed, lt: Type, rt: Type, range: Range<usize>, cx: &mut Cx) -> Typed {
    let result_ty = match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul if lt == Type::Int && rt == Type::Int => Type::Int,
        BinOp::Lt if lt == Type::Int && rt == Type::Int => Type::Bool,
        BinOp::Eq if lt == rt => Type::Bool,
        BinOp::Eq => {
            cx.error(
                format!("type mismatch: {op} expects operands of equal type, found {lt} and {rt}"),
                range,
            );
            return Typed::IllTyped;
        }
        _ => {
            cx.error(
                format!("type mismatch: {op} expects int operands, found {lt} and {rt}"),
                range,
            );
            return Typed::IllTyped;
        }
    };
    let (Some(lv), Some(rv)) = (l.value(), r.value()) else {
        return Typed::NoValue(result_ty);
    };
    let value = match (op, lv, rv) {
        (BinOp::Add, Value::Int(a), Value::Int(b)) => a.checked_add(b).map(Value::Int),
        (BinOp::Sub, Value::Int(a), Value::Int(b)) => a.checked_sub(b).map(Value::Int),
        (BinOp::Mul, Value::Int(a), Value::Int(b)) => a.checked_mul(b).map(Value::Int),
        (BinOp::Lt, Value::Int(a), Value::Int(b)) => Some(Value::Bool(a < b)),
        (BinOp::Eq, a, b) => Some(Value::Bool(a == b)),
        _ => unreachable!("operand types checked above"),
    };
    match value {
        Some(v) => Typed::Ok(v),
        None => {
            cx.error("integer overflow", range);
            Typed::NoValue(result_ty)
        }
    }
}
