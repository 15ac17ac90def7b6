//! Prover messages.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Writeln,
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Writeln => "writeln",
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

/// A message with an optional character range. Checker messages use
/// ranges relative to their command span; parse issues use node offsets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub severity: Severity,
    pub text: String,
    #[serde(default)]
    pub range: Option<Range<usize>>,
}

impl Message {
    pub fn new(severity: Severity, text: impl Into<String>, range: Option<Range<usize>>) -> Self {
        Message {
            severity,
            text: text.into(),
            range,
        }
    }

    pub fn error(text: impl Into<String>, range: Option<Range<usize>>) -> Self {
        Self::new(Severity::Error, text, range)
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.range {
            Some(r) => write!(f, "{} {}..{} {:?}", self.severity, r.start, r.end, self.text),
            None => write!(f, "{} {:?}", self.severity, self.text),
        }
    }
}
