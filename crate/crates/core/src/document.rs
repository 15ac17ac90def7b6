//! The versioned multi-node document model.
//!
//! Versions are immutable snapshots. Applying an edit batch produces a new
//! version in which only touched nodes are re-partitioned; spans whose
//! keyword and text survive an edit keep their identity.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::Message;
use crate::syntax::{self, CommandSpan, SpanId};

/// Extension of theory files.
pub const THEORY_EXTENSION: &str = ".mthy";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocumentError {
    #[error("invalid node name {0:?}")]
    InvalidNodeName(String),
    #[error("edit #{index} on {node}: {reason}")]
    InvalidEdit { index: usize, node: String, reason: String },
    #[error("unknown document version {0}")]
    UnknownVersion(VersionId),
}

/// Canonical relative path of a theory file, e.g. `dir/Foo.mthy`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeName(Arc<str>);

impl NodeName {
    pub fn new(path: &str) -> Result<Self, DocumentError> {
        let invalid = || DocumentError::InvalidNodeName(path.to_owned());
        let stem = path.strip_suffix(THEORY_EXTENSION).ok_or_else(invalid)?;
        if stem.is_empty() || path.contains('\\') || path.chars().any(char::is_control) {
            return Err(invalid());
        }
        for segment in path.split('/') {
            if segment.is_empty() || segment == "." || segment == ".." {
                return Err(invalid());
            }
        }
        if stem.ends_with('/') {
            return Err(invalid());
        }
        Ok(NodeName(path.into()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Directory prefix including the trailing `/`, or `""` at top level.
    pub fn dir(&self) -> &str {
        match self.0.rfind('/') {
            Some(i) => &self.0[..=i],
            None => "",
        }
    }

    /// Theory name: the file name without extension.
    pub fn theory(&self) -> &str {
        let file = &self.0[self.dir().len()..];
        &file[..file.len() - THEORY_EXTENSION.len()]
    }

    /// The node `IDENT.mthy` next to this one.
    pub fn sibling(&self, theory: &str) -> Result<NodeName, DocumentError> {
        NodeName::new(&format!("{}{theory}{THEORY_EXTENSION}", self.dir()))
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for NodeName {
    type Error = DocumentError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        NodeName::new(&value)
    }
}

impl From<NodeName> for String {
    fn from(value: NodeName) -> Self {
        value.0.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Insert,
    Remove,
}

/// A text change at a character offset of the raw (escaped) node text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub node: NodeName,
    pub kind: EditKind,
    pub offset: usize,
    pub text: String,
}

impl Edit {
    pub fn insert(node: NodeName, offset: usize, text: impl Into<String>) -> Self {
        Edit {
            node,
            kind: EditKind::Insert,
            offset,
            text: text.into(),
        }
    }

    pub fn remove(node: NodeName, offset: usize, text: impl Into<String>) -> Self {
        Edit {
            node,
            kind: EditKind::Remove,
            offset,
            text: text.into(),
        }
    }

    /// Applies this edit to `text` in place.
    pub fn apply_to(&self, text: &mut String) -> Result<(), String> {
        let len = text.chars().count();
        match self.kind {
            EditKind::Insert => {
                if self.offset > len {
                    return Err(format!("insert offset {} beyond length {len}", self.offset));
                }
                let at = byte_offset(text, self.offset);
                text.insert_str(at, &self.text);
            }
            EditKind::Remove => {
                let n = self.text.chars().count();
                if self.offset + n > len {
                    return Err(format!(
                        "remove range {}..{} beyond length {len}",
                        self.offset,
                        self.offset + n
                    ));
                }
                let start = byte_offset(text, self.offset);
                let end = byte_offset(text, self.offset + n);
                if text[start..end] != *self.text {
                    return Err(format!(
                        "remove payload {:?} does not match text {:?}",
                        self.text,
                        &text[start..end]
                    ));
                }
                text.replace_range(start..end, "");
            }
        }
        Ok(())
    }
}

/// Byte offset of character index `chars` (which must be in bounds).
pub fn byte_offset(text: &str, chars: usize) -> usize {
    text.char_indices().nth(chars).map_or(text.len(), |(b, _)| b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionId(pub u64);

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    /// Raw text, symbol escapes not decoded.
    pub text: String,
    pub spans: Vec<CommandSpan>,
    pub parse_issues: Vec<Message>,
}

impl NodeState {
    pub fn empty() -> Self {
        NodeState {
            text: String::new(),
            spans: Vec::new(),
            parse_issues: Vec::new(),
        }
    }

    pub fn span(&self, id: SpanId) -> Option<&CommandSpan> {
        self.spans.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentVersion {
    pub version_id: VersionId,
    pub nodes: BTreeMap<NodeName, Arc<NodeState>>,
}

impl DocumentVersion {
    pub fn initial() -> Self {
        DocumentVersion {
            version_id: VersionId(0),
            nodes: BTreeMap::new(),
        }
    }

    pub fn node(&self, name: &NodeName) -> Option<&NodeState> {
        self.nodes.get(name).map(Arc::as_ref)
    }

    pub fn text(&self, name: &NodeName) -> Option<&str> {
        self.node(name).map(|n| n.text.as_str())
    }
}

/// Allocator of session-scoped span ids.
#[derive(Debug, Default)]
pub struct SpanIds {
    next: u64,
}

impl SpanIds {
    pub fn fresh(&mut self) -> SpanId {
        let id = SpanId(self.next);
        self.next += 1;
        id
    }
}

/// Applies a batch of edits sequentially to `prev`. The batch is atomic:
/// on error nothing is produced.
pub fn apply_edits(
    prev: &DocumentVersion,
    edits: &[Edit],
    ids: &mut SpanIds,
) -> Result<DocumentVersion, DocumentError> {
    let mut touched: BTreeMap<NodeName, String> = BTreeMap::new();
    for (index, edit) in edits.iter().enumerate() {
        let text = match touched.get_mut(&edit.node) {
            Some(text) => text,
            None => {
                let current = match prev.text(&edit.node) {
                    Some(t) => t.to_owned(),
                    None if edit.kind == EditKind::Insert && edit.offset == 0 => String::new(),
                    None => {
                        return Err(DocumentError::InvalidEdit {
                            index,
                            node: edit.node.to_string(),
                            reason: "unknown node".into(),
                        })
                    }
                };
                touched.entry(edit.node.clone()).or_insert(current)
            }
        };
        edit.apply_to(text).map_err(|reason| DocumentError::InvalidEdit {
            index,
            node: edit.node.to_string(),
            reason,
        })?;
    }

    let mut nodes = prev.nodes.clone();
    for (name, text) in touched {
        let old = prev.nodes.get(&name);
        if old.is_some_and(|o| o.text == text) {
            continue;
        }
        let (mut spans, parse_issues) = syntax::partition(&text);
        assign_span_ids(old.map_or(&[][..], |o| &o.spans), &mut spans, ids);
        nodes.insert(
            name,
            Arc::new(NodeState {
                text,
                spans,
                parse_issues,
            }),
        );
    }
    Ok(DocumentVersion {
        version_id: VersionId(prev.version_id.0 + 1),
        nodes,
    })
}

fn same_span(a: &CommandSpan, b: &CommandSpan) -> bool {
    a.keyword == b.keyword && a.text == b.text
}

/// Carries ids over from `old` to equal spans of `new` (common prefix,
/// common suffix, then a monotone greedy match in between).
fn assign_span_ids(old: &[CommandSpan], new: &mut [CommandSpan], ids: &mut SpanIds) {
    let prefix = old.iter().zip(new.iter()).take_while(|(a, b)| same_span(a, b)).count();
    let max_suffix = old.len().min(new.len()) - prefix;
    let suffix = old
        .iter()
        .rev()
        .zip(new.iter().rev())
        .take(max_suffix)
        .take_while(|(a, b)| same_span(a, b))
        .count();

    for i in 0..prefix {
        new[i].id = old[i].id;
    }
    for k in 1..=suffix {
        new[new.len() - k].id = old[old.len() - k].id;
    }
    let old_mid = &old[prefix..old.len() - suffix];
    let new_len = new.len();
    let mut cursor = 0;
    for span in &mut new[prefix..new_len - suffix] {
        match old_mid[cursor..].iter().position(|o| same_span(o, span)) {
            Some(p) => {
                span.id = old_mid[cursor + p].id;
                cursor += p + 1;
            }
            None => span.id = ids.fresh(),
        }
    }
}

/// Number of most recent versions always retained.
pub const RETAINED_VERSIONS: usize = 2;

/// Single-writer store of document versions.
#[derive(Debug)]
pub struct Document {
    versions: BTreeMap<VersionId, Arc<DocumentVersion>>,
    pins: HashMap<VersionId, usize>,
    span_ids: SpanIds,
}

impl Default for Document {
    fn default() -> Self {
        Self::new()
    }
}

impl Document {
    pub fn new() -> Self {
        let initial = Arc::new(DocumentVersion::initial());
        Document {
            versions: BTreeMap::from([(initial.version_id, initial)]),
            pins: HashMap::new(),
            span_ids: SpanIds::default(),
        }
    }

    pub fn latest(&self) -> Arc<DocumentVersion> {
        self.versions
            .values()
            .next_back()
            .cloned()
            .expect("at least one version")
    }

    pub fn apply_edits(&mut self, edits: &[Edit]) -> Result<Arc<DocumentVersion>, DocumentError> {
        let next = Arc::new(apply_edits(&self.latest(), edits, &mut self.span_ids)?);
        self.versions.insert(next.version_id, next.clone());
        self.prune();
        Ok(next)
    }

    pub fn snapshot(&self, id: VersionId) -> Result<Arc<DocumentVersion>, DocumentError> {
        self.versions.get(&id).cloned().ok_or(DocumentError::UnknownVersion(id))
    }

    /// Keeps `id` alive across pruning until a matching [`Document::unpin`].
    pub fn pin(&mut self, id: VersionId) -> Result<(), DocumentError> {
        if !self.versions.contains_key(&id) {
            return Err(DocumentError::UnknownVersion(id));
        }
        *self.pins.entry(id).or_default() += 1;
        Ok(())
    }

    pub fn unpin(&mut self, id: VersionId) {
        if let Some(n) = self.pins.get_mut(&id) {
            *n -= 1;
            if *n == 0 {
                self.pins.remove(&id);
            }
        }
        self.prune();
    }

    fn prune(&mut self) {
        let keep_from = self
            .versions
            .keys()
            .rev()
            .nth(RETAINED_VERSIONS - 1)
            .copied()
            .unwrap_or(VersionId(0));
        let pins = &self.pins;
        self.versions.retain(|id, _| *id >= keep_from || pins.contains_key(id));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(s: &str) -> NodeName {
        NodeName::new(s).unwrap()
    }

    fn doc_with(text: &str) -> (Document, NodeName) {
        let mut doc = Document::new();
        let a = name("A.mthy");
        doc.apply_edits(&[Edit::insert(a.clone(), 0, text)]).unwrap();
        (doc, a)
    }

    #[test]
    fn node_names() {
        assert!(NodeName::new("A.mthy").is_ok());
        assert!(NodeName::new("d/A.mthy").is_ok());
        for bad in [
            "",
            ".mthy",
            "A.thy",
            "../A.mthy",
            "d//A.mthy",
            "/A.mthy",
            "./A.mthy",
            "d\\A.mthy",
        ] {
            assert!(NodeName::new(bad).is_err(), "{bad}");
        }
        let n = name("d/e/T.mthy");
        assert_eq!(n.dir(), "d/e/");
        assert_eq!(n.theory(), "T");
        assert_eq!(n.sibling("A").unwrap(), name("d/e/A.mthy"));
        assert_eq!(name("T.mthy").sibling("B").unwrap(), name("B.mthy"));
    }

    #[test]
    fn insert_splices() {
        let (mut doc, a) = doc_with("ac");
        let v = doc.apply_edits(&[Edit::insert(a.clone(), 1, "b")]).unwrap();
        assert_eq!(v.text(&a), Some("abc"));
    }

    #[test]
    fn empty_batch_bumps_version() {
        let (mut doc, a) = doc_with("def x = 1");
        let before = doc.latest();
        let after = doc.apply_edits(&[]).unwrap();
        assert_eq!(after.version_id.0, before.version_id.0 + 1);
        assert_eq!(after.text(&a), before.text(&a));
    }

    #[test]
    fn removing_a_command_keeps_later_identity() {
        let (mut doc, a) = doc_with("def x = 1\ndef y = 2");
        let before = doc.latest();
        let y_id = before.node(&a).unwrap().spans[1].id;
        let after = doc.apply_edits(&[Edit::remove(a.clone(), 0, "def x = 1\n")]).unwrap();
        let spans = &after.node(&a).unwrap().spans;
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].text, "def y = 2");
        assert_eq!(spans[0].id, y_id);
    }

    #[test]
    fn unicode_offsets_are_characters() {
        let (mut doc, a) = doc_with("\u{2200}\u{2203}");
        let v = doc.apply_edits(&[Edit::insert(a.clone(), 1, "x")]).unwrap();
        assert_eq!(v.text(&a), Some("\u{2200}x\u{2203}"));
        let v = doc.apply_edits(&[Edit::remove(a.clone(), 2, "\u{2203}")]).unwrap();
        assert_eq!(v.text(&a), Some("\u{2200}x"));
    }

    #[test]
    fn invalid_batches_are_atomic() {
        let (mut doc, a) = doc_with("abc");
        let latest = doc.latest().version_id;
        let err = doc
            .apply_edits(&[Edit::insert(a.clone(), 0, "z"), Edit::insert(a.clone(), 99, "q")])
            .unwrap_err();
        assert!(matches!(err, DocumentError::InvalidEdit { index: 1, .. }));
        assert!(doc.apply_edits(&[Edit::remove(a.clone(), 0, "x")]).is_err());
        assert!(doc.apply_edits(&[Edit::remove(a.clone(), 2, "cd")]).is_err());
        assert!(doc.apply_edits(&[Edit::insert(name("B.mthy"), 1, "x")]).is_err());
        assert_eq!(doc.latest().version_id, latest);
        assert_eq!(doc.latest().text(&a), Some("abc"));
    }

    #[test]
    fn edits_apply_sequentially() {
        let mut doc = Document::new();
        let b = name("B.mthy");
        let v = doc
            .apply_edits(&[
                Edit::insert(b.clone(), 0, "def x = 1"),
                Edit::remove(b.clone(), 8, "1"),
                Edit::insert(b.clone(), 8, "42"),
            ])
            .unwrap();
        assert_eq!(v.text(&b), Some("def x = 42"));
        let v = doc.apply_edits(&[Edit::remove(b.clone(), 0, "def x = 42")]).unwrap();
        assert_eq!(v.text(&b), Some(""));
        assert!(v.node(&b).unwrap().spans.is_empty());
    }

    #[test]
    fn snapshots_and_pruning() {
        let mut doc = Document::new();
        let a = name("A.mthy");
        for i in 0..3 {
            doc.apply_edits(&[Edit::insert(a.clone(), i, "x")]).unwrap();
        }
        assert_eq!(doc.latest().version_id, VersionId(3));
        assert_eq!(doc.snapshot(VersionId(3)).unwrap().version_id, VersionId(3));
        assert!(doc.snapshot(VersionId(2)).is_ok());
        assert_eq!(
            doc.snapshot(VersionId(1)).unwrap_err(),
            DocumentError::UnknownVersion(VersionId(1))
        );

        doc.pin(VersionId(2)).unwrap();
        doc.apply_edits(&[]).unwrap();
        doc.apply_edits(&[]).unwrap();
        assert!(doc.snapshot(VersionId(2)).is_ok());
        assert!(doc.snapshot(VersionId(3)).is_err());
        doc.unpin(VersionId(2));
        assert!(doc.snapshot(VersionId(2)).is_err());
    }

    #[test]
    fn edit_after_span_keeps_its_id() {
        let (mut doc, a) = doc_with("def x = 1\neval x\n");
        let first = doc.latest().node(&a).unwrap().spans[0].id;
        let v = doc.apply_edits(&[Edit::insert(a.clone(), 16, " + 1")]).unwrap();
        assert_eq!(v.node(&a).unwrap().spans[0].id, first);
        assert_eq!(v.text(&a), Some("def x = 1\neval x + 1\n"));
    }
}
