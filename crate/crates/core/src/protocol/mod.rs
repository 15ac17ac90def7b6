//! The editor wire protocol.
//!
//! Each frame is a 4-byte big-endian body length followed by a UTF-8 JSON
//! body `{"payload": {...}, "seq": N, "type": "..."}`. Bodies are written
//! in canonical form: compact, with object keys sorted. See `protocol.md`
//! for the payload of every message type.

mod server;

use std::io::{self, Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::document::{Edit, NodeName};
use crate::markup::MarkupTree;
use crate::message::Message;
use crate::scheduler::{ExecId, ExecStatus};
use crate::symbols::{SymbolEntry, SymbolStyle};
use crate::syntax::SpanId;

pub use server::{serve_stdio, serve_tcp, Core, ServeError};

pub const PROTOCOL_VERSION: u32 = 1;

/// Frames longer than this are rejected.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame length {0} out of range")]
    Length(u32),
    #[error("frame body is not UTF-8")]
    Utf8,
    #[error("connection closed inside a frame")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A well-framed body that is not a valid message.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct SchemaError {
    /// The `seq` of the offending message, when it could be read.
    pub seq: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSymbol {
    pub name: String,
    /// `U+XXXX`, or null for control symbols.
    pub codepoint: Option<String>,
    pub abbrevs: Vec<String>,
    pub style: SymbolStyle,
}

impl From<&SymbolEntry> for WireSymbol {
    fn from(e: &SymbolEntry) -> Self {
        WireSymbol {
            name: e.name.clone(),
            codepoint: e.codepoint.map(|c| format!("U+{:04X}", c as u32)),
            abbrevs: e.abbrevs.clone(),
            style: e.style,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSpan {
    pub span_id: SpanId,
    pub exec_id: ExecId,
    pub keyword: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireNode {
    pub node: NodeName,
    pub spans: Vec<WireSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireCompletion {
    pub replacement: String,
    pub display: String,
}

/// Protocol messages in both directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolMessage {
    Hello {
        client: String,
    },
    NodeEdits {
        edits: Vec<Edit>,
        client_version_tag: String,
    },
    CompletionRequest {
        prefix: String,
    },
    Shutdown {},
    Welcome {
        reply_to: u64,
        protocol_version: u32,
        symbol_table: Vec<WireSymbol>,
    },
    Assignment {
        reply_to: u64,
        client_version_tag: String,
        version_id: u64,
        nodes: Vec<WireNode>,
    },
    Status {
        version_id: u64,
        exec_id: ExecId,
        status: ExecStatus,
    },
    Result {
        version_id: u64,
        exec_id: ExecId,
        node: NodeName,
        span_id: SpanId,
        status: ExecStatus,
        /// Ranges relative to the span.
        messages: Vec<Message>,
        markup: MarkupTree,
    },
    ImportRequestResolved {
        node: NodeName,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    CompletionReply {
        reply_to: u64,
        prefix: String,
        items: Vec<WireCompletion>,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reply_to: Option<u64>,
        message: String,
    },
}

impl ProtocolMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ProtocolMessage::Hello { .. } => "hello",
            ProtocolMessage::NodeEdits { .. } => "node_edits",
            ProtocolMessage::CompletionRequest { .. } => "completion_request",
            ProtocolMessage::Shutdown {} => "shutdown",
            ProtocolMessage::Welcome { .. } => "welcome",
            ProtocolMessage::Assignment { .. } => "assignment",
            ProtocolMessage::Status { .. } => "status",
            ProtocolMessage::Result { .. } => "result",
            ProtocolMessage::ImportRequestResolved { .. } => "import_request_resolved",
            ProtocolMessage::CompletionReply { .. } => "completion_reply",
            ProtocolMessage::Error { .. } => "error",
        }
    }
}

/// Every message type, for documentation and tests.
pub const MESSAGE_TYPES: &[&str] = &[
    "hello",
    "node_edits",
    "completion_request",
    "shutdown",
    "welcome",
    "assignment",
    "status",
    "result",
    "import_request_resolved",
    "completion_reply",
    "error",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub seq: u64,
    pub message: ProtocolMessage,
}

impl Envelope {
    pub fn new(seq: u64, message: ProtocolMessage) -> Self {
        Envelope { seq, message }
    }

    /// Canonical JSON body.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(&self.message).expect("messages serialize");
        value
            .as_object_mut()
            .expect("messages are objects")
            .insert("seq".into(), self.seq.into());
        // `Value` maps keep keys sorted.
        value.to_string()
    }

    pub fn from_json(body: &str) -> Result<Self, SchemaError> {
        let value: Value = serde_json::from_str(body).map_err(|e| SchemaError {
            seq: None,
            message: format!("invalid JSON: {e}"),
        })?;
        let Value::Object(mut obj) = value else {
            return Err(SchemaError {
                seq: None,
                message: "message is not an object".into(),
            });
        };
        let seq = match obj.remove("seq") {
            Some(Value::Number(n)) if n.as_u64().is_some() => n.as_u64(),
            Some(_) => {
                return Err(SchemaError {
                    seq: None,
                    message: "seq is not a non-negative integer".into(),
                })
            }
            None => None,
        };
        let err = |message: String| SchemaError { seq, message };
        match obj.get("type") {
            None => return Err(err("missing field `type`".into())),
            Some(Value::String(t)) if !MESSAGE_TYPES.contains(&t.as_str()) => {
                return Err(err(format!("unknown message type {t:?}")))
            }
            Some(Value::String(_)) => {}
            Some(_) => return Err(err("type is not a string".into())),
        }
        let Some(seq_value) = seq else {
            return Err(err("missing field `seq`".into()));
        };
        if let Some(key) = obj.keys().find(|k| *k != "type" && *k != "payload") {
            return Err(err(format!("unknown field `{key}`")));
        }
        let message = serde_json::from_value(Value::Object(obj)).map_err(|e| err(e.to_string()))?;
        Ok(Envelope {
            seq: seq_value,
            message,
        })
    }
}

/// Serializes `envelope` as one frame.
pub fn serialize(envelope: &Envelope) -> Vec<u8> {
    let body = envelope.to_json();
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body.as_bytes());
    out
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Decodes one complete frame.
pub fn deserialize(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let mut reader = bytes;
    let body = read_frame(&mut reader)?.ok_or(FrameError::Truncated)?;
    if !reader.is_empty() {
        return Err(FrameError::Length(body.len() as u32).into());
    }
    Ok(Envelope::from_json(&body)?)
}

/// Reads one frame body; `None` on a clean end of stream.
pub fn read_frame(reader: &mut impl Read) -> Result<Option<String>, FrameError> {
    let mut len = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut len[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len);
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(FrameError::Length(len));
    }
    let mut body = vec![0u8; len as usize];
    reader.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    String::from_utf8(body).map(Some).map_err(|_| FrameError::Utf8)
}

pub fn write_frame(writer: &mut impl Write, envelope: &Envelope) -> io::Result<()> {
    writer.write_all(&serialize(envelope))?;
    writer.flush()
}
