//! Live sessions: the wire protocol, the command queue and frame loop,
//! command logs with replay, the compact snapshot stream and the websocket
//! server that ties them together.

pub mod engine;
pub mod log;
pub mod protocol;
pub mod server;
pub mod wire;

pub use engine::{apply_verb, pick, Engine, Reply, SessionConfig};
pub use log::{parse_log, replay, replay_text, CommandLog, LogError, LogRecord, ReplayOutcome};
pub use protocol::{
    cmd_message, hello_message, parse_client_message, ClientMessage, ErrorCode, ErrorReply,
    Manifest, Verb, PROTOCOL_VERSION,
};
pub use server::{
    start, ConnState, Intake, ServerConfig, ServerHandle, ServerSummary, SessionError, Stopper,
};
pub use wire::{Frame, SceneMirror, SnapshotEncoder, POSITION_SCALE};
