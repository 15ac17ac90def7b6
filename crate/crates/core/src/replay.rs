//! Edit scripts: timed edit batches replayed against a live session or
//! collapsed into a single batch check.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::{DocumentError, Edit};
use crate::report::render_trace;
use crate::session::Session;

/// Upper bound on waiting for quiescence.
pub const QUIESCENCE_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditScript {
    /// Directory whose `*.mthy` files form the initial document and from
    /// which imports are loaded. Relative to the script file. Without a
    /// root the document starts empty and imports are never loaded.
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub at_ms: u64,
    pub edits: Vec<Edit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayMode {
    /// Apply each batch at its time against the running scheduler.
    Incremental,
    /// Apply all batches, then check the final text once.
    Batch,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read script: {0}")]
    Read(#[source] std::io::Error),
    #[error("invalid script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid script: step {index} at {at_ms} ms comes before an earlier step")]
    Unordered { index: usize, at_ms: u64 },
    #[error("invalid script: step {index}: {source}")]
    Edit {
        index: usize,
        #[source]
        source: DocumentError,
    },
    #[error("cannot load root {path}: {source}")]
    Root {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no quiescence within {0:?}")]
    Timeout(Duration),
}

impl EditScript {
    pub fn from_json(text: &str) -> Result<Self, ReplayError> {
        let script: EditScript = serde_json::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let text = std::fs::read_to_string(path).map_err(ReplayError::Read)?;
        let mut script = Self::from_json(&text)?;
        if let (Some(root), Some(dir)) = (&script.root, path.parent()) {
            script.root = Some(dir.join(root));
        }
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        for (index, pair) in self.steps.windows(2).enumerate() {
            if pair[1].at_ms < pair[0].at_ms {
                return Err(ReplayError::Unordered {
                    index: index + 1,
                    at_ms: pair[1].at_ms,
                });
            }
        }
        Ok(())
    }
}

/// Replays `script` with `workers` threads and returns the quiescent trace.
pub fn replay(script: &EditScript, mode: ReplayMode, workers: usize) -> Result<String, ReplayError> {
    let mut session = match &script.root {
        Some(root) => {
            let mut s = Session::with_root(workers, root);
            s.load_dir(root).map_err(|source| ReplayError::Root {
                path: root.clone(),
                source,
            })?;
            s
        }
        None => Session::new(workers),
    };

    match mode {
        ReplayMode::Incremental => {
            let start = Instant::now();
            session.run();
            for (index, step) in script.steps.iter().enumerate() {
                let due = start + Duration::from_millis(step.at_ms);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    thread::sleep(wait);
                }
                session
                    .submit(&step.edits)
                    .map_err(|source| ReplayError::Edit { index, source })?;
            }
        }
        ReplayMode::Batch => {
            for (index, step) in script.steps.iter().enumerate() {
                session
                    .apply(&step.edits)
                    .map_err(|source| ReplayError::Edit { index, source })?;
            }
            session.run();
        }
    }

    if !session.wait_quiescent(QUIESCENCE_TIMEOUT) {
        return Err(ReplayError::Timeout(QUIESCENCE_TIMEOUT));
    }
    Ok(render_trace(&session.outcomes()))
}
