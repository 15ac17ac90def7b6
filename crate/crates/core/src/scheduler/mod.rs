//! Execution scheduling.
//!
//! [`assign`] maps every command span of a document version to an
//! execution. Executions are keyed by the span text and a digest of
//! everything the span's input environment is derived from (the node,
//! its imports and all preceding span texts), so an unchanged prefix of a
//! node keeps its executions while everything after an edit gets fresh
//! ones. [`Scheduler`] runs pending executions on a worker pool and
//! cancels those a newer assignment no longer needs.

mod executor;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::checker::{node_dependencies, CheckResult};
use crate::document::{DocumentVersion, NodeName, VersionId};
use crate::message::Message;
use crate::syntax::{CommandSpan, SpanId, TokenKind};

pub use executor::{ExecSnapshot, Scheduler, Update};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExecId(pub u64);

impl fmt::Display for ExecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Unprocessed,
    Running,
    Finished,
    Failed,
    Cancelled,
}

impl ExecStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, ExecStatus::Finished | ExecStatus::Failed | ExecStatus::Cancelled)
    }

    /// Finished or failed: the output environment is available.
    pub fn is_done(self) -> bool {
        matches!(self, ExecStatus::Finished | ExecStatus::Failed)
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecStatus::Unprocessed => "unprocessed",
            ExecStatus::Running => "running",
            ExecStatus::Finished => "finished",
            ExecStatus::Failed => "failed",
            ExecStatus::Cancelled => "cancelled",
        })
    }
}

/// SHA-256 digest identifying how an input environment was derived.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvDigest(pub [u8; 32]);

impl fmt::Debug for EnvDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl EnvDigest {
    fn chain(&self, text: &str) -> EnvDigest {
        let mut h = Sha256::new();
        h.update(b"span\0");
        h.update(self.0);
        h.update(text.as_bytes());
        EnvDigest(h.finalize().into())
    }
}

/// Cache key of an execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExecKey {
    pub env_in: EnvDigest,
    pub text: Arc<str>,
}

/// Where an execution's input environment comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvSource {
    /// Output of the previous command in the same node.
    Previous(ExecId),
    /// Merge of the outputs of these executions, in order (the final
    /// commands of imported nodes). Empty for a node without imports.
    Imports(Vec<ExecId>),
}

impl EnvSource {
    pub fn dependencies(&self) -> &[ExecId] {
        match self {
            EnvSource::Previous(id) => std::slice::from_ref(id),
            EnvSource::Imports(ids) => ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImportError {
    Missing(NodeName),
    /// This node lies on an import cycle through these nodes.
    Cycle(Vec<NodeName>),
    /// An imported node lies on an import cycle.
    CyclicImport(NodeName),
}

impl ImportError {
    /// The imported node this error is about, if it is a single one.
    pub fn import(&self) -> Option<&NodeName> {
        match self {
            ImportError::Missing(n) | ImportError::CyclicImport(n) => Some(n),
            ImportError::Cycle(_) => None,
        }
    }
}

impl fmt::Display for ImportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImportError::Missing(n) => write!(f, "missing import {n}"),
            ImportError::Cycle(nodes) => {
                write!(f, "import cycle: ")?;
                for (i, n) in nodes.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{n}")?;
                }
                Ok(())
            }
            ImportError::CyclicImport(n) => write!(f, "import of {n} failed: it lies on an import cycle"),
        }
    }
}

/// Failure the scheduler attaches to an execution regardless of checking.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    None,
    /// Check normally, then report these import errors (and fail).
    Imports(Vec<ImportError>),
    /// Do not check; fail immediately with these errors.
    Fail(Vec<Message>),
}

#[derive(Debug, Clone)]
pub struct ExecPlan {
    pub exec_id: ExecId,
    pub node: NodeName,
    pub span: Arc<CommandSpan>,
    pub key: ExecKey,
    pub env: EnvSource,
    pub preset: Preset,
    /// Whether the execution was taken over from the cache.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeAssignment {
    /// One execution per span, in span order.
    pub execs: Vec<ExecId>,
    pub import_errors: Vec<ImportError>,
}

#[derive(Debug, Clone)]
pub struct Assignment {
    pub version: Arc<DocumentVersion>,
    pub nodes: BTreeMap<NodeName, NodeAssignment>,
    /// Every execution in priority order: nodes topologically (imports
    /// first), spans in document order.
    pub plans: Vec<ExecPlan>,
}

impl Assignment {
    pub fn version_id(&self) -> VersionId {
        self.version.version_id
    }

    pub fn exec_ids(&self) -> impl Iterator<Item = ExecId> + '_ {
        self.plans.iter().map(|p| p.exec_id)
    }

    pub fn plan(&self, id: ExecId) -> Option<&ExecPlan> {
        self.plans.iter().find(|p| p.exec_id == id)
    }

    /// Nodes that are imported but absent from the document.
    pub fn missing_imports(&self) -> Vec<(NodeName, NodeName)> {
        let mut out = Vec::new();
        for (node, na) in &self.nodes {
            for err in &na.import_errors {
                if let ImportError::Missing(m) = err {
                    out.push((node.clone(), m.clone()));
                }
            }
        }
        out
    }
}

/// Lookup of reusable executions plus an id allocator.
pub trait ExecCache {
    /// An execution with this key that is not cancelled.
    fn lookup(&self, key: &ExecKey) -> Option<ExecId>;
    fn allocate(&mut self) -> ExecId;
}

/// A plain in-memory cache, for tests and offline use.
#[derive(Debug, Default)]
pub struct MemoryCache {
    pub keys: HashMap<ExecKey, ExecId>,
    next: u64,
}

impl MemoryCache {
    pub fn remember(&mut self, assignment: &Assignment) {
        for p in &assignment.plans {
            self.keys.insert(p.key.clone(), p.exec_id);
        }
    }
}

impl ExecCache for MemoryCache {
    fn lookup(&self, key: &ExecKey) -> Option<ExecId> {
        self.keys.get(key).copied()
    }

    fn allocate(&mut self) -> ExecId {
        let id = ExecId(self.next);
        self.next += 1;
        id
    }
}

fn node_start_digest(node: &NodeName, imports: &[(NodeName, ImportState)], on_cycle: bool) -> EnvDigest {
    let mut h = Sha256::new();
    h.update(b"node\0");
    h.update(node.as_str().as_bytes());
    h.update(b"\0");
    for (name, state) in imports {
        h.update(name.as_str().as_bytes());
        h.update(b"\0");
        match state {
            ImportState::Present(d) => h.update(d.0),
            ImportState::Missing => h.update(b"missing"),
            ImportState::Cyclic => h.update(b"cyclic"),
        }
    }
    if on_cycle {
        h.update(b"\0on-cycle");
    }
    EnvDigest(h.finalize().into())
}

enum ImportState {
    Present(EnvDigest),
    Missing,
    Cyclic,
}

/// Range of the keyword token relative to the span, for scheduler messages.
pub(crate) fn keyword_range(span: &CommandSpan) -> Option<std::ops::Range<usize>> {
    span.tokens
        .iter()
        .find(|t| !t.kind.is_trivia() && t.kind != TokenKind::StringError)
        .map(|t| t.range.start - span.range.start..t.range.end - span.range.start)
}

/// Computes the assignment of `version`, reusing executions from `cache`.
pub fn assign(version: &Arc<DocumentVersion>, cache: &mut impl ExecCache) -> Assignment {
    let names: Vec<&NodeName> = version.nodes.keys().collect();
    let deps: BTreeMap<&NodeName, Vec<NodeName>> = version
        .nodes
        .iter()
        .map(|(name, state)| (name, node_dependencies(name, &state.spans)))
        .collect();

    let mut graph: DiGraph<&NodeName, ()> = DiGraph::new();
    let index: HashMap<&NodeName, NodeIndex> = names.iter().map(|n| (*n, graph.add_node(*n))).collect();
    for (node, ds) in &deps {
        for d in ds {
            if let Some(&target) = index.get(d) {
                graph.add_edge(index[node], target, ());
            }
        }
    }

    // Imports come before their importers in this order.
    let sccs = tarjan_scc(&graph);
    let mut cycles: HashMap<&NodeName, Vec<NodeName>> = HashMap::new();
    for scc in &sccs {
        let is_cycle = scc.len() > 1 || graph.contains_edge(scc[0], scc[0]);
        if is_cycle {
            let mut members: Vec<NodeName> = scc.iter().map(|&i| graph[i].clone()).collect();
            members.sort();
            for &i in scc {
                cycles.insert(graph[i], members.clone());
            }
        }
    }

    let mut nodes = BTreeMap::new();
    let mut plans = Vec::new();
    let mut finals: HashMap<&NodeName, (EnvDigest, Vec<ExecId>)> = HashMap::new();

    for scc in &sccs {
        let mut members: Vec<NodeIndex> = scc.clone();
        members.sort_by_key(|&i| graph[i]);
        for i in members {
            let name = graph[i];
            let state = &version.nodes[name];
            let cycle = cycles.get(name);

            let mut import_errors = Vec::new();
            let mut import_states = Vec::new();
            let mut sources = Vec::new();
            if let Some(members) = cycle {
                import_errors.push(ImportError::Cycle(members.clone()));
            }
            for dep in &deps[name] {
                let st = if !index.contains_key(dep) {
                    import_errors.push(ImportError::Missing(dep.clone()));
                    ImportState::Missing
                } else if cycles.contains_key(dep) {
                    if cycle.is_none() {
                        import_errors.push(ImportError::CyclicImport(dep.clone()));
                    }
                    ImportState::Cyclic
                } else {
                    let (digest, srcs) = &finals[dep];
                    sources.extend(srcs.iter().copied());
                    ImportState::Present(*digest)
                };
                import_states.push((dep.clone(), st));
            }

            let mut digest = node_start_digest(name, &import_states, cycle.is_some());
            let mut env = EnvSource::Imports(sources.clone());
            let mut execs = Vec::with_capacity(state.spans.len());
            let mut import_messages_pending = true;
            for span in &state.spans {
                let key = ExecKey {
                    env_in: digest,
                    text: span.text.as_str().into(),
                };
                let preset = match cycle {
                    Some(_) => Preset::Fail(
                        import_errors
                            .iter()
                            .map(|e| Message::error(e.to_string(), keyword_range(span)))
                            .collect(),
                    ),
                    None if span.keyword == "imports" && import_messages_pending && !import_errors.is_empty() => {
                        import_messages_pending = false;
                        Preset::Imports(import_errors.clone())
                    }
                    None => {
                        if span.keyword == "imports" {
                            import_messages_pending = false;
                        }
                        Preset::None
                    }
                };
                let (exec_id, reused) = match cache.lookup(&key) {
                    Some(id) => (id, true),
                    None => (cache.allocate(), false),
                };
                plans.push(ExecPlan {
                    exec_id,
                    node: name.clone(),
                    span: Arc::new(span.clone()),
                    key,
                    env: env.clone(),
                    preset,
                    reused,
                });
                execs.push(exec_id);
                digest = digest.chain(&span.text);
                env = EnvSource::Previous(exec_id);
            }
            let final_sources = match (cycle, execs.last()) {
                (Some(_), _) => Vec::new(),
                (None, Some(&last)) => vec![last],
                (None, None) => sources,
            };
            finals.insert(name, (digest, final_sources));
            nodes.insert(name.clone(), NodeAssignment { execs, import_errors });
        }
    }

    Assignment {
        version: version.clone(),
        nodes,
        plans,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub unprocessed: usize,
    pub running: usize,
    pub finished: usize,
    pub failed: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.unprocessed + self.running + self.finished + self.failed
    }

    fn add(&mut self, status: ExecStatus) {
        match status {
            ExecStatus::Unprocessed | ExecStatus::Cancelled => self.unprocessed += 1,
            ExecStatus::Running => self.running += 1,
            ExecStatus::Finished => self.finished += 1,
            ExecStatus::Failed => self.failed += 1,
        }
    }

    fn merge(&mut self, other: &StatusCounts) {
        self.unprocessed += other.unprocessed;
        self.running += other.running;
        self.finished += other.finished;
        self.failed += other.failed;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatusSummary {
    pub nodes: BTreeMap<NodeName, StatusCounts>,
    pub total: StatusCounts,
}

/// Counts the statuses of the executions of `assignment`.
pub fn summarize(assignment: &Assignment, status_of: impl Fn(ExecId) -> ExecStatus) -> StatusSummary {
    let mut summary = StatusSummary::default();
    for (node, na) in &assignment.nodes {
        let mut counts = StatusCounts::default();
        for &id in &na.execs {
            counts.add(status_of(id));
        }
        summary.total.merge(&counts);
        summary.nodes.insert(node.clone(), counts);
    }
    summary
}

/// Result of one span after quiescence, for traces and reports.
#[derive(Debug, Clone)]
pub struct SpanOutcome {
    pub span: Arc<CommandSpan>,
    pub exec_id: ExecId,
    pub status: ExecStatus,
    pub result: Option<Arc<CheckResult>>,
}

/// Ids of the spans of `node`, for tests.
pub fn span_ids(assignment: &Assignment, node: &NodeName) -> Vec<SpanId> {
    assignment
        .plans
        .iter()
        .filter(|p| &p.node == node)
        .map(|p| p.span.id)
        .collect()
}

pub(crate) fn live_set(assignment: &Assignment) -> HashSet<ExecId> {
    assignment.exec_ids().collect()
}

#[cfg(test)]
mod tests;
