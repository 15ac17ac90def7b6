//! Checking of individual Mini-Theory commands.
//!
//! Each command span is checked on its own against an input environment
//! and yields a status, messages, markup and an output environment.
//! Checking is total: every problem becomes an error message. Only
//! cancellation interrupts it.

mod env;
mod expr;

use std::fmt;
use std::ops::Range;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::document::NodeName;
use crate::markup::{DefPosition, Label, MarkupTree, Type};
use crate::message::{Message, Severity};
use crate::syntax::{CommandSpan, TokenKind, BLANK, MALFORMED};

pub use env::{Definition, Environment, Value};
pub use expr::{BinOp, Expr, ExprKind, Typed};

/// Granularity at which a running `sleep` polls for cancellation.
pub const CANCEL_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Finished,
    Failed,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Finished => "finished",
            CheckStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub status: CheckStatus,
    /// Ranges relative to the command span.
    pub messages: Vec<Message>,
    pub markup: MarkupTree,
    pub env_out: Arc<Environment>,
}

impl CheckResult {
    /// A failed result carrying only `messages`; the environment passes through.
    pub fn failure(messages: Vec<Message>, env_in: Arc<Environment>) -> Self {
        CheckResult {
            status: CheckStatus::Failed,
            messages,
            markup: MarkupTree::default(),
            env_out: env_in,
        }
    }
}

/// Cooperative cancellation signal shared between scheduler and checker.
#[derive(Debug, Clone, Default)]
pub struct CancelFlag(Arc<AtomicBool>);

impl CancelFlag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cancelled;

/// A significant token with a range relative to the command span.
#[derive(Debug, Clone)]
pub(crate) struct Tok {
    kind: TokenKind,
    text: String,
    range: Range<usize>,
}

/// Accumulates markup and messages while checking one command.
pub(crate) struct Cx {
    markup: Vec<(Range<usize>, Label)>,
    messages: Vec<Message>,
}

impl Cx {
    fn mark(&mut self, range: Range<usize>, label: Label) {
        self.markup.push((range, label));
    }

    fn error(&mut self, text: impl Into<String>, range: Range<usize>) {
        self.markup.push((range.clone(), Label::Error));
        self.messages.push(Message::new(Severity::Error, text, Some(range)));
    }

    fn warning(&mut self, text: impl Into<String>, range: Range<usize>) {
        self.markup.push((range.clone(), Label::Warning));
        self.messages.push(Message::new(Severity::Warning, text, Some(range)));
    }

    fn writeln(&mut self, text: impl Into<String>, range: Range<usize>) {
        self.messages.push(Message::new(Severity::Writeln, text, Some(range)));
    }

    fn has_errors(&self) -> bool {
        self.messages.iter().any(Message::is_error)
    }
}

/// Checks one command span of `node` against `env_in`.
pub fn check_command(
    node: &NodeName,
    span: &CommandSpan,
    env_in: &Arc<Environment>,
    cancel: &CancelFlag,
) -> Result<CheckResult, Cancelled> {
    let base = span.range.start;
    let span_len = span.text.chars().count();
    let mut cx = Cx {
        markup: Vec::new(),
        messages: Vec::new(),
    };
    let mut toks = Vec::new();
    for t in &span.tokens {
        let range = t.range.start - base..t.range.end - base;
        match t.kind {
            TokenKind::Whitespace | TokenKind::Comment => {}
            TokenKind::StringError => cx.error("unterminated comment", range),
            kind => toks.push(Tok {
                kind,
                text: t.text.clone(),
                range,
            }),
        }
    }

    let mut env_out: Option<Environment> = None;
    if span.keyword == BLANK {
        // whitespace and comments only
    } else if span.keyword == MALFORMED {
        let range = toks
            .first()
            .map_or(0..span_len, |f| f.range.start..toks.last().unwrap().range.end);
        cx.error("malformed input: expected a command keyword", range);
    } else if cx.has_errors() {
        // An unterminated comment swallows the rest of the command.
        cx.mark(toks[0].range.clone(), Label::Keyword);
    } else {
        cx.mark(toks[0].range.clone(), Label::Keyword);
        let args = &toks[1..];
        let end = toks.last().unwrap().range.end;
        let mut cmd = Command {
            node,
            base,
            keyword: toks[0].range.clone(),
            args,
            pos: 0,
            end,
            env_in,
            cx: &mut cx,
        };
        match span.keyword.as_str() {
            "theory" => cmd.theory(),
            "imports" => cmd.imports(),
            "begin" | "end" => cmd.finish(),
            "def" => env_out = cmd.def(),
            "eval" => cmd.eval(),
            "lemma" => cmd.lemma(),
            "sleep" => {
                if let Some(ms) = cmd.sleep() {
                    sleep_cancellable(Duration::from_millis(ms), cancel)?;
                }
            }
            other => unreachable!("partition produced unknown keyword {other}"),
        }
    }

    if cancel.is_cancelled() {
        return Err(Cancelled);
    }
    let failed = cx.has_errors();
    let markup = MarkupTree::from_flat(cx.markup).expect("checker markup follows the parse tree");
    debug_assert!(markup.validate(span_len).is_ok());
    Ok(CheckResult {
        status: if failed {
            CheckStatus::Failed
        } else {
            CheckStatus::Finished
        },
        messages: cx.messages,
        markup,
        env_out: match env_out {
            Some(env) if !failed => Arc::new(env),
            _ => env_in.clone(),
        },
    })
}

fn sleep_cancellable(total: Duration, cancel: &CancelFlag) -> Result<(), Cancelled> {
    let deadline = Instant::now() + total;
    loop {
        if cancel.is_cancelled() {
            return Err(Cancelled);
        }
        let now = Instant::now();
        if now >= deadline {
            return Ok(());
        }
        std::thread::sleep(CANCEL_POLL.min(deadline - now));
    }
}

struct Command<'a> {
    node: &'a NodeName,
    base: usize,
    keyword: Range<usize>,
    args: &'a [Tok],
    pos: usize,
    end: usize,
    env_in: &'a Environment,
    cx: &'a mut Cx,
}

impl Command<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.args.get(self.pos)
    }

    fn unexpected(&mut self, expected: &str) {
        match self.args.get(self.pos) {
            Some(t) => {
                let range = t.range.clone();
                self.cx.error(format!("expected {expected}, found `{}`", t.text), range);
            }
            None => {
                let end = self.end;
                self.cx.error(
                    format!("expected {expected}, found end of command"),
                    end.saturating_sub(1)..end,
                );
            }
        }
    }

    fn ident(&mut self, what: &str) -> Option<Tok> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident && !is_literal(&t.text) => {
                let t = t.clone();
                self.pos += 1;
                Some(t)
            }
            _ => {
                self.unexpected(what);
                None
            }
        }
    }

    fn delimiter(&mut self, d: &str) -> bool {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Delimiter && t.text == d => {
                self.pos += 1;
                true
            }
            _ => {
                self.unexpected(&format!("`{d}`"));
                false
            }
        }
    }

    /// Reports trailing tokens after a complete command.
    fn finish(&mut self) {
        if self.pos < self.args.len() {
            self.unexpected("end of command");
        }
    }

    fn expr(&mut self) -> Option<Expr> {
        let mut parser = expr::ExprParser::new(&self.args[self.pos..], self.end);
        match parser.parse() {
            Ok(e) => {
                self.pos += parser.position();
                Some(e)
            }
            Err(err) => {
                self.cx.error(err.message, err.range);
                None
            }
        }
    }

    fn theory(&mut self) {
        if let Some(name) = self.ident("a theory name") {
            self.cx.mark(name.range, Label::DefSite { ident: name.text });
            self.finish();
        }
    }

    fn imports(&mut self) {
        if self.args.is_empty() {
            let range = self.keyword.clone();
            self.cx.warning("empty imports", range);
            return;
        }
        while self.pos < self.args.len() {
            let Some(name) = self.ident("a theory name") else {
                return;
            };
            match self.node.sibling(&name.text) {
                Ok(target) => self.cx.mark(
                    name.range,
                    Label::UseSite {
                        ident: name.text,
                        def: DefPosition {
                            node: target,
                            offset: 0,
                        },
                    },
                ),
                Err(_) => self.cx.error(format!("invalid theory name {}", name.text), name.range),
            }
        }
    }

    fn def(&mut self) -> Option<Environment> {
        let name = self.ident("an identifier")?;
        self.cx.mark(
            name.range.clone(),
            Label::DefSite {
                ident: name.text.clone(),
            },
        );
        let mut declared = None;
        if self.peek().is_some_and(|t| t.text == ":") {
            self.pos += 1;
            let ty = self.ident("a type")?;
            declared = match ty.text.as_str() {
                "int" => Some(Type::Int),
                "bool" => Some(Type::Bool),
                other => {
                    self.cx.error(format!("unknown type {other}"), ty.range);
                    return None;
                }
            };
            self.cx.mark(ty.range, Label::Keyword);
        }
        if !self.delimiter("=") {
            return None;
        }
        let expr = self.expr()?;
        self.finish();
        if self.env_in.lookup(&name.text).is_some() {
            self.cx.warning(
                format!("redefinition of {} shadows the previous definition", name.text),
                name.range.clone(),
            );
        }
        let typed = expr::check_expr(&expr, self.env_in, self.cx);
        let value = typed.value()?;
        if let Some(want) = declared {
            if want != value.ty() {
                self.cx.error(
                    format!("type mismatch: declared {want}, found {}", value.ty()),
                    expr.range.clone(),
                );
                return None;
            }
        }
        self.cx.mark(
            expr.range.clone(),
            Label::Value {
                text: value.to_string(),
            },
        );
        if self.cx.has_errors() {
            return None;
        }
        let mut env = self.env_in.clone();
        env.define(Definition {
            ident: name.text,
            ty: value.ty(),
            value,
            position: DefPosition {
                node: self.node.clone(),
                offset: self.base + name.range.start,
            },
        });
        Some(env)
    }

    fn eval(&mut self) {
        let Some(expr) = self.expr() else { return };
        self.finish();
        if let Some(value) = expr::check_expr(&expr, self.env_in, self.cx).value() {
            self.cx.mark(
                expr.range.clone(),
                Label::Value {
                    text: value.to_string(),
                },
            );
            self.cx.writeln(value.to_string(), expr.range);
        }
    }

    fn lemma(&mut self) {
        let Some(name) = self.ident("a lemma name") else { return };
        self.cx.mark(name.range, Label::DefSite { ident: name.text });
        if !self.delimiter(":") {
            return;
        }
        let Some(stmt) = self.expr() else { return };
        self.finish();
        let ExprKind::Binary(BinOp::Eq, lhs, rhs) = &stmt.kind else {
            expr::check_expr(&stmt, self.env_in, self.cx);
            self.cx.error("lemma statement must be an equation", stmt.range);
            return;
        };
        let l = expr::check_expr(lhs, self.env_in, self.cx);
        let r = expr::check_expr(rhs, self.env_in, self.cx);
        match (l.ty(), r.ty()) {
            (Some(lt), Some(rt)) if lt != rt => {
                self.cx.error(format!("type mismatch: {lt} = {rt}"), stmt.range);
            }
            (Some(_), Some(_)) => {
                self.cx.mark(stmt.range.clone(), Label::InferredType { ty: Type::Bool });
                if let (Some(lv), Some(rv)) = (l.value(), r.value()) {
                    if lv != rv {
                        self.cx.error(format!("{lv} \u{2260} {rv}"), stmt.range);
                    }
                }
            }
            _ => {}
        }
    }

    fn sleep(&mut self) -> Option<u64> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Number => {
                let t = t.clone();
                self.pos += 1;
                self.finish();
                match t.text.parse::<u64>() {
                    Ok(ms) if !self.cx.has_errors() => Some(ms),
                    Ok(_) => None,
                    Err(_) => {
                        self.cx
                            .error(format!("sleep duration {} is out of range", t.text), t.range);
                        None
                    }
                }
            }
            _ => {
                self.unexpected("a number of milliseconds");
                None
            }
        }
    }
}

fn is_literal(word: &str) -> bool {
    matches!(word, "true" | "false")
}

/// Imported nodes: the theory names of the first `imports` command,
/// resolved next to the importing node. Invalid names are skipped (the
/// checker reports them).
pub fn node_dependencies(node: &NodeName, spans: &[CommandSpan]) -> Vec<NodeName> {
    let Some(span) = spans.iter().find(|s| s.keyword == "imports") else {
        return Vec::new();
    };
    let mut deps: Vec<NodeName> = Vec::new();
    let names = span
        .tokens
        .iter()
        .skip_while(|t| t.kind != TokenKind::Keyword)
        .skip(1)
        .filter(|t| !t.kind.is_trivia())
        .take_while(|t| t.kind == TokenKind::Ident && !is_literal(&t.text));
    for tok in names {
        if let Ok(dep) = node.sibling(&tok.text) {
            if !deps.contains(&dep) {
                deps.push(dep);
            }
        }
    }
    deps
}
