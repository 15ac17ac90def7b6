use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, RecvTimeoutError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::document::NodeName;
use crate::scheduler::{Assignment, ExecId, ExecStatus};
use crate::session::Session;
use crate::symbols::{complete, CompletionTables, SymbolTable};
use crate::syntax::SpanId;

use super::{
    read_frame, write_frame, Envelope, FrameError, ProtocolMessage, WireCompletion, WireNode, WireSpan, WireSymbol,
    PROTOCOL_VERSION,
};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The checking core shared by all connections of one server process.
pub struct Core {
    session: Mutex<Session>,
}

impl Core {
    pub fn new(session: Session) -> Arc<Self> {
        Arc::new(Core {
            session: Mutex::new(session),
        })
    }

    pub fn session(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Serves connections one after another until a client sends `shutdown`.
pub fn serve_tcp(core: Arc<Core>, listener: TcpListener) -> Result<(), ServeError> {
    for stream in listener.incoming() {
        let stream = stream?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        if serve_connection(&core, reader, stream)? {
            break;
        }
    }
    Ok(())
}

/// Serves one connection on stdin/stdout.
pub fn serve_stdio(core: Arc<Core>) -> Result<(), ServeError> {
    let stdin = io::stdin();
    serve_connection(&core, stdin.lock(), io::stdout())?;
    Ok(())
}

/// Execution ids of the last assignment sent, with their spans.
struct Sent {
    version_id: u64,
    execs: HashMap<ExecId, (NodeName, SpanId)>,
}

/// Runs one connection to its end. Returns whether shutdown was requested.
pub fn serve_connection<R, W>(core: &Arc<Core>, mut reader: R, writer: W) -> io::Result<bool>
where
    R: Read,
    W: Write + Send + 'static,
{
    let (tx, rx) = channel::<ProtocolMessage>();
    let writer_thread = thread::spawn(move || {
        let mut writer = BufWriter::new(writer);
        let mut seq = 0;
        for message in rx {
            seq += 1;
            if write_frame(&mut writer, &Envelope::new(seq, message)).is_err() {
                break;
            }
        }
    });

    let sent: Arc<Mutex<Option<Sent>>> = Arc::new(Mutex::new(None));
    let closed = Arc::new(AtomicBool::new(false));
    let forwarder = {
        let updates = core.session().subscribe();
        let tx = tx.clone();
        let sent = sent.clone();
        let closed = closed.clone();
        thread::spawn(move || loop {
            match updates.recv_timeout(Duration::from_millis(50)) {
                Ok(update) => {
                    let sent = sent.lock().unwrap_or_else(|e| e.into_inner());
                    let Some(s) = sent.as_ref() else { continue };
                    let Some((node, span_id)) = s.execs.get(&update.exec_id) else {
                        continue;
                    };
                    let _ = tx.send(ProtocolMessage::Status {
                        version_id: s.version_id,
                        exec_id: update.exec_id,
                        status: update.status,
                    });
                    if let Some(result) = update.result {
                        let _ = tx.send(ProtocolMessage::Result {
                            version_id: s.version_id,
                            exec_id: update.exec_id,
                            node: node.clone(),
                            span_id: *span_id,
                            status: update.status,
                            messages: result.messages.clone(),
                            markup: result.markup.clone(),
                        });
                    }
                }
                Err(RecvTimeoutError::Timeout) if !closed.load(Ordering::SeqCst) => {}
                Err(_) => break,
            }
        })
    };

    let mut shutdown = false;
    let outcome = loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(body)) => body,
            Ok(None) => break Ok(()),
            Err(FrameError::Io(e)) => break Err(e),
            Err(e) => {
                let _ = tx.send(ProtocolMessage::Error {
                    reply_to: None,
                    message: e.to_string(),
                });
                break Ok(());
            }
        };
        let envelope = match Envelope::from_json(&body) {
            Ok(envelope) => envelope,
            Err(e) => {
                let _ = tx.send(ProtocolMessage::Error {
                    reply_to: e.seq,
                    message: e.message,
                });
                continue;
            }
        };
        let seq = envelope.seq;
        match envelope.message {
            ProtocolMessage::Hello { .. } => {
                let symbol_table = SymbolTable::bundled().entries().iter().map(WireSymbol::from).collect();
                let _ = tx.send(ProtocolMessage::Welcome {
                    reply_to: seq,
                    protocol_version: PROTOCOL_VERSION,
                    symbol_table,
                });
            }
            ProtocolMessage::CompletionRequest { prefix } => {
                let items = complete(&prefix, &CompletionTables::default())
                    .into_iter()
                    .map(|c| WireCompletion {
                        replacement: c.replacement,
                        display: c.display,
                    })
                    .collect();
                let _ = tx.send(ProtocolMessage::CompletionReply {
                    reply_to: seq,
                    prefix,
                    items,
                });
            }
            ProtocolMessage::NodeEdits {
                edits,
                client_version_tag,
            } => {
                let mut sent = sent.lock().unwrap_or_else(|e| e.into_inner());
                let mut session = core.session();
                let submitted = match session.submit(&edits) {
                    Ok(s) => s,
                    Err(e) => {
                        let _ = tx.send(ProtocolMessage::Error {
                            reply_to: Some(seq),
                            message: e.to_string(),
                        });
                        continue;
                    }
                };
                for import in submitted.imports {
                    let _ = tx.send(ProtocolMessage::ImportRequestResolved {
                        node: import.node,
                        ok: import.result.is_ok(),
                        error: import.result.err(),
                    });
                }
                let assignment = submitted.assignment;
                let version_id = assignment.version_id().0;
                let _ = tx.send(assignment_message(seq, client_version_tag, &assignment));
                *sent = Some(Sent {
                    version_id,
                    execs: assignment
                        .plans
                        .iter()
                        .map(|p| (p.exec_id, (p.node.clone(), p.span.id)))
                        .collect(),
                });
                // Executions already started or reused from earlier versions
                // produce no further updates for the states they are in.
                for plan in &assignment.plans {
                    let Some(snap) = session.scheduler().snapshot(plan.exec_id) else {
                        continue;
                    };
                    if snap.status == ExecStatus::Unprocessed {
                        continue;
                    }
                    let _ = tx.send(ProtocolMessage::Status {
                        version_id,
                        exec_id: plan.exec_id,
                        status: snap.status,
                    });
                    if let Some(result) = snap.result {
                        let _ = tx.send(ProtocolMessage::Result {
                            version_id,
                            exec_id: plan.exec_id,
                            node: plan.node.clone(),
                            span_id: plan.span.id,
                            status: snap.status,
                            messages: result.messages.clone(),
                            markup: result.markup.clone(),
                        });
                    }
                }
            }
            ProtocolMessage::Shutdown {} => {
                shutdown = true;
                break Ok(());
            }
            other => {
                let _ = tx.send(ProtocolMessage::Error {
                    reply_to: Some(seq),
                    message: format!("unexpected message type {:?} from client", other.type_name()),
                });
            }
        }
    };

    closed.store(true, Ordering::SeqCst);
    let _ = forwarder.join();
    drop(tx);
    let _ = writer_thread.join();
    outcome.map(|()| shutdown)
}

fn assignment_message(reply_to: u64, client_version_tag: String, assignment: &Assignment) -> ProtocolMessage {
    let nodes = assignment
        .nodes
        .iter()
        .map(|(node, na)| WireNode {
            node: node.clone(),
            spans: na
                .execs
                .iter()
                .map(|&id| {
                    let plan = assignment.plan(id).expect("every exec has a plan");
                    WireSpan {
                        span_id: plan.span.id,
                        exec_id: id,
                        keyword: plan.span.keyword.clone(),
                        range: plan.span.range.clone(),
                    }
                })
                .collect(),
        })
        .collect();
    ProtocolMessage::Assignment {
        reply_to,
        client_version_tag,
        version_id: assignment.version_id().0,
        nodes,
    }
}
