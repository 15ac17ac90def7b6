use std::collections::{HashMap, HashSet};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::checker::{check_command, CancelFlag, CheckResult, CheckStatus, Environment};
use crate::document::{DocumentVersion, NodeName};
use crate::markup::Label;
use crate::message::Message;
use crate::syntax::CommandSpan;

use super::{
    assign, keyword_range, live_set, Assignment, EnvSource, ExecCache, ExecId, ExecKey, ExecStatus, ImportError,
    Preset, StatusSummary,
};

/// Terminal executions outside the current assignment kept for reuse.
const CACHE_LIMIT: usize = 20_000;

/// A status change of one execution.
#[derive(Debug, Clone)]
pub struct Update {
    pub exec_id: ExecId,
    pub status: ExecStatus,
    /// Present once the status is finished or failed.
    pub result: Option<Arc<CheckResult>>,
}

#[derive(Debug, Clone)]
pub struct ExecSnapshot {
    pub exec_id: ExecId,
    pub node: NodeName,
    pub span: Arc<CommandSpan>,
    pub status: ExecStatus,
    pub result: Option<Arc<CheckResult>>,
}

struct Entry {
    node: NodeName,
    span: Arc<CommandSpan>,
    env: EnvSource,
    preset: Preset,
    status: ExecStatus,
    result: Option<Arc<CheckResult>>,
    cancel: CancelFlag,
}

#[derive(Default)]
struct State {
    entries: HashMap<ExecId, Entry>,
    by_key: HashMap<ExecKey, ExecId>,
    /// Current assignment in priority order.
    order: Vec<ExecId>,
    live: HashSet<ExecId>,
    /// Index into `order` before which nothing is unprocessed.
    cursor: usize,
    next_id: u64,
    subscribers: Vec<Sender<Update>>,
    shutdown: bool,
}

impl State {
    fn emit(&mut self, exec_id: ExecId) {
        let e = &self.entries[&exec_id];
        let update = Update {
            exec_id,
            status: e.status,
            result: e.result.clone(),
        };
        self.subscribers.retain(|s| s.send(update.clone()).is_ok());
    }

    fn env_out(&self, id: ExecId) -> Arc<Environment> {
        self.entries[&id]
            .result
            .as_ref()
            .map(|r| r.env_out.clone())
            .unwrap_or_default()
    }

    fn env_in(&self, source: &EnvSource) -> Arc<Environment> {
        match source {
            EnvSource::Previous(id) => self.env_out(*id),
            EnvSource::Imports(ids) => match ids.as_slice() {
                [] => Arc::new(Environment::new()),
                [one] => self.env_out(*one),
                many => {
                    let mut env = Environment::new();
                    for id in many {
                        env.merge(&self.env_out(*id));
                    }
                    Arc::new(env)
                }
            },
        }
    }

    fn ready(&self, id: ExecId) -> bool {
        let e = &self.entries[&id];
        e.status == ExecStatus::Unprocessed && e.env.dependencies().iter().all(|d| self.entries[d].status.is_done())
    }

    fn next_runnable(&mut self) -> Option<ExecId> {
        while self.cursor < self.order.len() && self.entries[&self.order[self.cursor]].status != ExecStatus::Unprocessed
        {
            self.cursor += 1;
        }
        self.order[self.cursor..].iter().copied().find(|&id| self.ready(id))
    }

    fn quiescent(&self) -> bool {
        self.order.iter().all(|id| self.entries[id].status.is_terminal())
            && self.entries.values().all(|e| e.status != ExecStatus::Running)
    }

    fn evict(&mut self) {
        if self.entries.len() <= CACHE_LIMIT + self.live.len() {
            return;
        }
        let live = &self.live;
        self.entries
            .retain(|id, e| live.contains(id) || !e.status.is_terminal());
        let entries = &self.entries;
        self.by_key.retain(|_, id| entries.contains_key(id));
    }
}

impl ExecCache for State {
    fn lookup(&self, key: &ExecKey) -> Option<ExecId> {
        let id = *self.by_key.get(key)?;
        let e = &self.entries[&id];
        (e.status != ExecStatus::Cancelled && !e.cancel.is_cancelled()).then_some(id)
    }

    fn allocate(&mut self) -> ExecId {
        let id = ExecId(self.next_id);
        self.next_id += 1;
        id
    }
}

struct Shared {
    state: Mutex<State>,
    /// Signalled when work may have become available.
    work: Condvar,
    /// Signalled on every status change.
    changed: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Worker pool running the executions of the current assignment.
pub struct Scheduler {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
}

impl Scheduler {
    /// Starts `budget` worker threads (at least one).
    pub fn new(budget: usize) -> Self {
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            work: Condvar::new(),
            changed: Condvar::new(),
        });
        let workers = (0..budget.max(1))
            .map(|i| {
                let shared = shared.clone();
                thread::Builder::new()
                    .name(format!("mthy-worker-{i}"))
                    .spawn(move || worker(&shared))
                    .expect("spawn worker thread")
            })
            .collect();
        Scheduler { shared, workers }
    }

    pub fn budget(&self) -> usize {
        self.workers.len()
    }

    /// Receives every status change from now on, in causal order.
    pub fn subscribe(&self) -> Receiver<Update> {
        let (tx, rx) = channel();
        self.shared.lock().subscribers.push(tx);
        rx
    }

    /// Assigns executions to `version` against the current cache.
    pub fn assign(&self, version: &Arc<DocumentVersion>) -> Assignment {
        assign(version, &mut *self.shared.lock())
    }

    /// Makes `assignment` current. Pending or running executions it does
    /// not contain are cancelled.
    pub fn supersede(&self, assignment: &Assignment) {
        let mut st = self.shared.lock();
        install(&mut st, assignment);
        drop(st);
        self.shared.work.notify_all();
        self.shared.changed.notify_all();
    }

    /// Assigns and installs `version` atomically; the usual entry point.
    pub fn run(&self, version: &Arc<DocumentVersion>) -> Assignment {
        let mut st = self.shared.lock();
        let assignment = assign(version, &mut *st);
        install(&mut st, &assignment);
        drop(st);
        self.shared.work.notify_all();
        self.shared.changed.notify_all();
        assignment
    }

    pub fn status(&self, id: ExecId) -> Option<ExecStatus> {
        self.shared.lock().entries.get(&id).map(|e| e.status)
    }

    pub fn snapshot(&self, id: ExecId) -> Option<ExecSnapshot> {
        let st = self.shared.lock();
        st.entries.get(&id).map(|e| ExecSnapshot {
            exec_id: id,
            node: e.node.clone(),
            span: e.span.clone(),
            status: e.status,
            result: e.result.clone(),
        })
    }

    pub fn summarize(&self, assignment: &Assignment) -> StatusSummary {
        let st = self.shared.lock();
        super::summarize(assignment, |id| {
            st.entries.get(&id).map_or(ExecStatus::Unprocessed, |e| e.status)
        })
    }

    /// Whether the current assignment is fully processed and no worker is
    /// still finishing a cancelled execution.
    pub fn is_quiescent(&self) -> bool {
        self.shared.lock().quiescent()
    }

    /// Blocks until quiescent; false on timeout.
    pub fn wait_quiescent(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.lock();
        loop {
            if st.quiescent() {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            st = self
                .shared
                .changed
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        {
            let mut st = self.shared.lock();
            st.shutdown = true;
            for e in st.entries.values() {
                if e.status == ExecStatus::Running {
                    e.cancel.cancel();
                }
            }
        }
        self.shared.work.notify_all();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn install(st: &mut State, assignment: &Assignment) {
    let live = live_set(assignment);

    let stale: Vec<ExecId> = st.live.iter().copied().filter(|id| !live.contains(id)).collect();
    for id in stale {
        let Some(e) = st.entries.get_mut(&id) else { continue };
        match e.status {
            ExecStatus::Unprocessed => {
                e.status = ExecStatus::Cancelled;
                st.emit(id);
            }
            ExecStatus::Running => e.cancel.cancel(),
            _ => {}
        }
    }

    let mut preset_failures = Vec::new();
    for plan in &assignment.plans {
        match st.entries.get_mut(&plan.exec_id) {
            Some(e) => {
                e.node = plan.node.clone();
                e.span = plan.span.clone();
                e.env = plan.env.clone();
                e.preset = plan.preset.clone();
                if e.status == ExecStatus::Cancelled {
                    // Only reachable when installing an outdated assignment.
                    e.status = ExecStatus::Unprocessed;
                    e.cancel = CancelFlag::new();
                }
            }
            None => {
                let status = match plan.preset {
                    Preset::Fail(_) => ExecStatus::Failed,
                    _ => ExecStatus::Unprocessed,
                };
                let result = match &plan.preset {
                    Preset::Fail(msgs) => Some(Arc::new(CheckResult::failure(
                        msgs.clone(),
                        Arc::new(Environment::new()),
                    ))),
                    _ => None,
                };
                st.entries.insert(
                    plan.exec_id,
                    Entry {
                        node: plan.node.clone(),
                        span: plan.span.clone(),
                        env: plan.env.clone(),
                        preset: plan.preset.clone(),
                        status,
                        result,
                        cancel: CancelFlag::new(),
                    },
                );
                st.by_key.insert(plan.key.clone(), plan.exec_id);
                if status == ExecStatus::Failed {
                    preset_failures.push(plan.exec_id);
                }
            }
        }
    }
    for id in preset_failures {
        st.emit(id);
    }

    st.order = assignment.exec_ids().collect();
    st.live = live;
    st.cursor = 0;
    st.evict();
}

fn worker(shared: &Shared) {
    let mut st = shared.lock();
    loop {
        if st.shutdown {
            return;
        }
        let Some(id) = st.next_runnable() else {
            st = shared.work.wait(st).unwrap_or_else(|e| e.into_inner());
            continue;
        };

        let env_in = st.env_in(&st.entries[&id].env);
        let entry = st.entries.get_mut(&id).expect("runnable entry exists");
        entry.status = ExecStatus::Running;
        let node = entry.node.clone();
        let span = entry.span.clone();
        let cancel = entry.cancel.clone();
        let preset = entry.preset.clone();
        st.emit(id);
        shared.changed.notify_all();
        drop(st);

        let outcome = match &preset {
            Preset::Fail(msgs) => Ok(CheckResult::failure(msgs.clone(), env_in)),
            _ => check_command(&node, &span, &env_in, &cancel),
        };

        st = shared.lock();
        let entry = st.entries.get_mut(&id).expect("running entry is never evicted");
        match outcome {
            Ok(_) | Err(_) if cancel.is_cancelled() => {
                entry.status = ExecStatus::Cancelled;
                entry.result = None;
            }
            Ok(mut result) => {
                if let Preset::Imports(errors) = &entry.preset {
                    report_import_errors(&mut result, errors, &span);
                }
                entry.status = match result.status {
                    CheckStatus::Finished => ExecStatus::Finished,
                    CheckStatus::Failed => ExecStatus::Failed,
                };
                entry.result = Some(Arc::new(result));
            }
            Err(_) => {
                entry.status = ExecStatus::Cancelled;
                entry.result = None;
            }
        }
        st.emit(id);
        shared.work.notify_all();
        shared.changed.notify_all();
    }
}

/// Turns the links to unusable imports into errors on the import names.
fn report_import_errors(result: &mut CheckResult, errors: &[ImportError], span: &CommandSpan) {
    for err in errors {
        let mut range = None;
        if let Some(target) = err.import() {
            result.markup.map_labels(|r, label| {
                if matches!(label, Label::UseSite { def, .. } if &def.node == target && def.offset == 0) {
                    *label = Label::Error;
                    range.get_or_insert_with(|| r.clone());
                }
            });
        }
        result
            .messages
            .push(Message::error(err.to_string(), range.or_else(|| keyword_range(span))));
    }
    result.status = CheckStatus::Failed;
}
