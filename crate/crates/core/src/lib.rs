//! Continuous checking of Mini-Theory documents.
//!
//! The document model keeps immutable versions of a set of theory files.
//! Every version is partitioned into command spans, and the scheduler maps
//! each span to an execution that is checked asynchronously and in parallel,
//! reusing earlier results where the inputs are unchanged. Results stream
//! to editor frontends over a framed JSON protocol.

pub mod checker;
pub mod document;
pub mod markup;
pub mod message;
pub mod protocol;
pub mod replay;
pub mod report;
pub mod scheduler;
pub mod session;
pub mod symbols;
pub mod syntax;
