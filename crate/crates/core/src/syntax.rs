//! Outer syntax: a total tokenizer and the command-span partitioner.
//!
//! A node's text is cut at every command keyword token. Each span runs
//! from its keyword up to (not including) the next keyword, so trivia
//! between two commands belongs to the earlier one. Trivia before the
//! first keyword is attached to the first span; any other text before
//! the first keyword forms a `<malformed>` span.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::message::{Message, Severity};
use crate::symbols::scan_escape;

/// Keywords that start a command.
pub const COMMAND_KEYWORDS: &[&str] = &["theory", "imports", "begin", "def", "eval", "lemma", "sleep", "end"];

/// Keyword of a span holding text before the first command.
pub const MALFORMED: &str = "<malformed>";

/// Keyword of the single span of a node containing only whitespace and
/// comments.
pub const BLANK: &str = "<blank>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Keyword,
    Ident,
    Number,
    SymbolEscape,
    Delimiter,
    /// An unterminated comment running to the end of the text.
    StringError,
    Whitespace,
    Comment,
    Junk,
}

impl TokenKind {
    pub fn is_trivia(self) -> bool {
        matches!(self, TokenKind::Whitespace | TokenKind::Comment)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub kind: TokenKind,
    /// Character offsets.
    pub range: Range<usize>,
    pub text: String,
}

/// Non-negative, session-scoped span identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpanId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandSpan {
    pub id: SpanId,
    pub keyword: String,
    /// Character range within the node text.
    pub range: Range<usize>,
    pub text: String,
    /// Tokens with ranges relative to the node text.
    pub tokens: Vec<Token>,
}

impl CommandSpan {
    pub fn is_malformed(&self) -> bool {
        self.keyword == MALFORMED
    }
}

pub fn is_command_keyword(word: &str) -> bool {
    COMMAND_KEYWORDS.contains(&word)
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

fn is_delimiter(c: char) -> bool {
    matches!(c, '=' | '+' | '-' | '*' | '<' | '(' | ')' | ':' | ',')
}

fn is_junk(chars: &[char], i: usize) -> bool {
    let c = chars[i];
    !(c.is_whitespace()
        || is_ident_start(c)
        || c.is_ascii_digit()
        || is_delimiter(c)
        || scan_escape(chars, i).is_some())
}

/// Splits `text` into tokens. Total: every character lands in exactly one
/// token, in order.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let start = i;
        let c = chars[i];
        let kind = if c == '(' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i >= chars.len() {
                    i = chars.len();
                    break TokenKind::StringError;
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&')') {
                    i += 2;
                    break TokenKind::Comment;
                }
                i += 1;
            }
        } else if c.is_whitespace() {
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            TokenKind::Whitespace
        } else if is_ident_start(c) {
            i += 1;
            loop {
                if i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                    continue;
                }
                // Controls such as \<^sub> continue an identifier when an
                // identifier character follows them.
                match scan_escape(&chars, i) {
                    Some(esc) if esc.is_control() && chars.get(esc.range.end).is_some_and(|&c| is_ident_char(c)) => {
                        i = esc.range.end;
                    }
                    _ => break,
                }
            }
            let word: String = chars[start..i].iter().collect();
            if is_command_keyword(&word) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            TokenKind::Number
        } else if let Some(esc) = scan_escape(&chars, i) {
            i = esc.range.end;
            TokenKind::SymbolEscape
        } else if is_delimiter(c) {
            i += 1;
            TokenKind::Delimiter
        } else {
            while i < chars.len() && is_junk(&chars, i) {
                i += 1;
            }
            TokenKind::Junk
        };
        tokens.push(Token {
            kind,
            range: start..i,
            text: chars[start..i].iter().collect(),
        });
    }
    tokens
}

/// Command spans of `text` before identities are assigned; every span has
/// id 0. Callers assign ids (see `document`).
pub fn partition(text: &str) -> (Vec<CommandSpan>, Vec<Message>) {
    let tokens = tokenize(text);
    let mut messages = Vec::new();
    let mut groups: Vec<(String, Vec<Token>)> = Vec::new();
    let mut pending: Vec<Token> = Vec::new();

    for token in tokens {
        if token.kind == TokenKind::Keyword {
            let leading = std::mem::take(&mut pending);
            if groups.is_empty() && leading.iter().any(|t| !t.kind.is_trivia()) {
                let range = leading[0].range.start..leading.last().unwrap().range.end;
                messages.push(Message::new(
                    Severity::Error,
                    "malformed input: text before the first command",
                    Some(range),
                ));
                groups.push((MALFORMED.to_owned(), leading));
                groups.push((token.text.clone(), vec![token]));
            } else if groups.is_empty() {
                let mut toks = leading;
                let keyword = token.text.clone();
                toks.push(token);
                groups.push((keyword, toks));
            } else {
                groups.last_mut().unwrap().1.extend(leading);
                groups.push((token.text.clone(), vec![token]));
            }
        } else {
            pending.push(token);
        }
    }
    if !pending.is_empty() {
        match groups.last_mut() {
            Some(last) => last.1.extend(pending),
            None if pending.iter().all(|t| t.kind.is_trivia()) => {
                groups.push((BLANK.to_owned(), pending));
            }
            None => {
                let range = pending[0].range.start..pending.last().unwrap().range.end;
                messages.push(Message::new(
                    Severity::Error,
                    "malformed input: text before the first command",
                    Some(range),
                ));
                groups.push((MALFORMED.to_owned(), pending));
            }
        }
    }

    let spans = groups
        .into_iter()
        .map(|(keyword, tokens)| {
            let range = tokens[0].range.start..tokens.last().unwrap().range.end;
            CommandSpan {
                id: SpanId(0),
                keyword,
                text: tokens.iter().map(|t| t.text.as_str()).collect(),
                range,
                tokens,
            }
        })
        .collect();
    (spans, messages)
}
