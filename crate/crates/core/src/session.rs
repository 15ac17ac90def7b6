//! A document together with its scheduler and on-disk import loading.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::time::Duration;

use crate::checker::node_dependencies;
use crate::document::{Document, DocumentError, DocumentVersion, Edit, NodeName, THEORY_EXTENSION};
use crate::scheduler::{Assignment, ExecStatus, Scheduler, SpanOutcome, Update};

/// Outcome of loading one imported node from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportResolution {
    pub node: NodeName,
    pub result: Result<(), String>,
}

#[derive(Debug, Clone)]
pub struct Submitted {
    pub assignment: Assignment,
    pub imports: Vec<ImportResolution>,
}

pub struct Session {
    doc: Document,
    scheduler: Scheduler,
    root: Option<PathBuf>,
    /// Imports already looked up on disk, successfully or not.
    attempted: HashSet<NodeName>,
    current: Option<Assignment>,
}

impl Session {
    /// A session without a file system root: imports are never loaded.
    pub fn new(budget: usize) -> Self {
        Session {
            doc: Document::new(),
            scheduler: Scheduler::new(budget),
            root: None,
            attempted: HashSet::new(),
            current: None,
        }
    }

    /// A session that loads missing imports from below `root`.
    pub fn with_root(budget: usize, root: impl Into<PathBuf>) -> Self {
        Session {
            root: Some(root.into()),
            ..Session::new(budget)
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    pub fn subscribe(&self) -> Receiver<Update> {
        self.scheduler.subscribe()
    }

    pub fn latest(&self) -> Arc<DocumentVersion> {
        self.doc.latest()
    }

    pub fn current(&self) -> Option<&Assignment> {
        self.current.as_ref()
    }

    /// Applies `edits` and then loads any missing imports, without
    /// scheduling. Returns the resolutions of newly attempted imports.
    pub fn apply(&mut self, edits: &[Edit]) -> Result<Vec<ImportResolution>, DocumentError> {
        self.doc.apply_edits(edits)?;
        Ok(self.load_imports())
    }

    /// Applies `edits`, loads missing imports and schedules the result.
    pub fn submit(&mut self, edits: &[Edit]) -> Result<Submitted, DocumentError> {
        let imports = self.apply(edits)?;
        Ok(Submitted {
            assignment: self.run(),
            imports,
        })
    }

    /// Schedules the latest version.
    pub fn run(&mut self) -> Assignment {
        let assignment = self.scheduler.run(&self.doc.latest());
        self.current = Some(assignment.clone());
        assignment
    }

    /// Reads every `*.mthy` file directly inside `dir` as initial nodes,
    /// then loads their imports.
    pub fn load_dir(&mut self, dir: &Path) -> io::Result<Vec<ImportResolution>> {
        let mut names = BTreeSet::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let file_name = entry.file_name();
            let Some(name) = file_name.to_str() else { continue };
            if name.ends_with(THEORY_EXTENSION) && entry.file_type()?.is_file() {
                if let Ok(node) = NodeName::new(name) {
                    names.insert(node);
                }
            }
        }
        let mut edits = Vec::new();
        for node in names {
            let text = fs::read_to_string(dir.join(node.as_str()))?;
            self.attempted.insert(node.clone());
            edits.push(Edit::insert(node, 0, text));
        }
        self.apply(&edits)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Loads a single file relative to the root as a node, then its imports.
    pub fn load_file(&mut self, node: &NodeName) -> io::Result<Vec<ImportResolution>> {
        let root = self.root.clone().unwrap_or_default();
        let text = fs::read_to_string(root.join(node.as_str()))?;
        self.attempted.insert(node.clone());
        self.apply(&[Edit::insert(node.clone(), 0, text)])
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    fn load_imports(&mut self) -> Vec<ImportResolution> {
        let mut resolutions = Vec::new();
        let Some(root) = self.root.clone() else {
            return resolutions;
        };
        loop {
            let version = self.doc.latest();
            let mut wanted = BTreeSet::new();
            for (name, state) in &version.nodes {
                for dep in node_dependencies(name, &state.spans) {
                    if !version.nodes.contains_key(&dep) && !self.attempted.contains(&dep) {
                        wanted.insert(dep);
                    }
                }
            }
            if wanted.is_empty() {
                return resolutions;
            }
            let mut edits = Vec::new();
            for node in wanted {
                self.attempted.insert(node.clone());
                let result = match fs::read_to_string(root.join(node.as_str())) {
                    Ok(text) => {
                        edits.push(Edit::insert(node.clone(), 0, text));
                        Ok(())
                    }
                    Err(e) => Err(e.to_string()),
                };
                resolutions.push(ImportResolution { node, result });
            }
            if !edits.is_empty() {
                self.doc
                    .apply_edits(&edits)
                    .expect("inserting fresh nodes at offset 0 is valid");
            }
        }
    }

    pub fn wait_quiescent(&self, timeout: Duration) -> bool {
        self.scheduler.wait_quiescent(timeout)
    }

    /// Per node (sorted), per span: the current state of its execution.
    pub fn outcomes(&self) -> Vec<(NodeName, Vec<SpanOutcome>)> {
        let Some(assignment) = &self.current else {
            return Vec::new();
        };
        assignment
            .nodes
            .iter()
            .map(|(node, na)| {
                let spans = na
                    .execs
                    .iter()
                    .map(|&id| {
                        let snap = self.scheduler.snapshot(id).expect("live executions are retained");
                        SpanOutcome {
                            span: snap.span,
                            exec_id: id,
                            status: snap.status,
                            result: snap.result,
                        }
                    })
                    .collect();
                (node.clone(), spans)
            })
            .collect()
    }

    /// Number of failed executions in the current assignment.
    pub fn failures(&self) -> usize {
        self.outcomes()
            .iter()
            .flat_map(|(_, spans)| spans)
            .filter(|s| s.status == ExecStatus::Failed)
            .count()
    }
}
