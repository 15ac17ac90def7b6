//! Nested semantic markup over a command's text.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::document::NodeName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Type {
    Int,
    Bool,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
        })
    }
}

/// Absolute position of a definition: node and character offset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DefPosition {
    pub node: NodeName,
    pub offset: usize,
}

impl fmt::Display for DefPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.offset)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    Keyword,
    DefSite { ident: String },
    UseSite { ident: String, def: DefPosition },
    InferredType { ty: Type },
    Value { text: String },
    Error,
    Warning,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Keyword => f.write_str("keyword"),
            Label::DefSite { ident } => write!(f, "def_site({ident})"),
            Label::UseSite { ident, def } => write!(f, "use_site({ident} -> {def})"),
            Label::InferredType { ty } => write!(f, "inferred_type({ty})"),
            Label::Value { text } => write!(f, "value({text})"),
            Label::Error => f.write_str("error"),
            Label::Warning => f.write_str("warning"),
        }
    }
}

/// One decorated range. Children lie strictly inside `range`, are sorted
/// and do not overlap each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkupNode {
    pub range: Range<usize>,
    pub labels: Vec<Label>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<MarkupNode>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarkupTree {
    pub roots: Vec<MarkupNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarkupError {
    #[error("empty markup range {0:?}")]
    Empty(Range<usize>),
    #[error("markup ranges {0:?} and {1:?} cross")]
    Crossing(Range<usize>, Range<usize>),
    #[error("markup range {0:?} exceeds text length {1}")]
    OutOfBounds(Range<usize>, usize),
    #[error("markup range {child:?} not strictly inside {parent:?}")]
    NotNested { parent: Range<usize>, child: Range<usize> },
    #[error("sibling ranges {0:?} and {1:?} overlap or are unsorted")]
    Siblings(Range<usize>, Range<usize>),
}

impl MarkupTree {
    /// Builds the tree from flat `(range, label)` pairs. Labels on equal
    /// ranges share one node, in insertion order.
    pub fn from_flat(items: Vec<(Range<usize>, Label)>) -> Result<Self, MarkupError> {
        let mut items: Vec<(usize, Range<usize>, Label)> =
            items.into_iter().enumerate().map(|(i, (r, l))| (i, r, l)).collect();
        if let Some((_, r, _)) = items.iter().find(|(_, r, _)| r.is_empty()) {
            return Err(MarkupError::Empty(r.clone()));
        }
        items.sort_by(|a, b| {
            a.1.start
                .cmp(&b.1.start)
                .then(b.1.end.cmp(&a.1.end))
                .then(a.0.cmp(&b.0))
        });

        // Stack of open nodes; each is attached to its parent when closed.
        let mut roots: Vec<MarkupNode> = Vec::new();
        let mut stack: Vec<MarkupNode> = Vec::new();
        fn close(stack: &mut Vec<MarkupNode>, roots: &mut Vec<MarkupNode>) {
            let node = stack.pop().unwrap();
            match stack.last_mut() {
                Some(parent) => parent.children.push(node),
                None => roots.push(node),
            }
        }
        for (_, range, label) in items {
            while let Some(top) = stack.last() {
                if top.range == range {
                    break;
                }
                if range.start >= top.range.end {
                    close(&mut stack, &mut roots);
                } else if range.end <= top.range.end {
                    break;
                } else {
                    return Err(MarkupError::Crossing(top.range.clone(), range));
                }
            }
            match stack.last_mut() {
                Some(top) if top.range == range => top.labels.push(label),
                _ => stack.push(MarkupNode {
                    range,
                    labels: vec![label],
                    children: Vec::new(),
                }),
            }
        }
        while !stack.is_empty() {
            close(&mut stack, &mut roots);
        }
        Ok(MarkupTree { roots })
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Checks the nesting invariant and that all ranges lie within `len`.
    pub fn validate(&self, len: usize) -> Result<(), MarkupError> {
        fn check_level(nodes: &[MarkupNode], parent: Option<&Range<usize>>, len: usize) -> Result<(), MarkupError> {
            for (i, node) in nodes.iter().enumerate() {
                let r = &node.range;
                if r.is_empty() {
                    return Err(MarkupError::Empty(r.clone()));
                }
                if r.end > len {
                    return Err(MarkupError::OutOfBounds(r.clone(), len));
                }
                if let Some(p) = parent {
                    if r.start < p.start || r.end > p.end || r == p {
                        return Err(MarkupError::NotNested {
                            parent: p.clone(),
                            child: r.clone(),
                        });
                    }
                }
                if i > 0 && nodes[i - 1].range.end > r.start {
                    return Err(MarkupError::Siblings(nodes[i - 1].range.clone(), r.clone()));
                }
                check_level(&node.children, Some(r), len)?;
            }
            Ok(())
        }
        check_level(&self.roots, None, len)
    }

    /// Pre-order traversal yielding `(depth, node)`.
    pub fn walk(&self) -> Vec<(usize, &MarkupNode)> {
        fn go<'a>(nodes: &'a [MarkupNode], depth: usize, out: &mut Vec<(usize, &'a MarkupNode)>) {
            for n in nodes {
                out.push((depth, n));
                go(&n.children, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        go(&self.roots, 0, &mut out);
        out
    }

    /// Calls `f` on every label, in pre-order.
    pub fn map_labels(&mut self, mut f: impl FnMut(&Range<usize>, &mut Label)) {
        fn go(nodes: &mut [MarkupNode], f: &mut impl FnMut(&Range<usize>, &mut Label)) {
            for n in nodes {
                for l in &mut n.labels {
                    f(&n.range, l);
                }
                go(&mut n.children, f);
            }
        }
        go(&mut self.roots, &mut f);
    }

    pub fn labels(&self) -> impl Iterator<Item = (&Range<usize>, &Label)> {
        self.walk()
            .into_iter()
            .flat_map(|(_, n)| n.labels.iter().map(move |l| (&n.range, l)))
    }
}
