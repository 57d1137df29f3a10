//! Websocket session server.
//!
//! One task owns the [`Engine`] and runs the frame loop at a fixed real-time
//! rate. Connection tasks parse client messages and forward commands over
//! a channel; the engine applies everything that arrived during a frame at
//! the next tick boundary in `(connection, seq)` order and sends each
//! client its own delta-encoded snapshots.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use super::engine::{Engine, SessionConfig};
use super::log::{write_log, LogRecord};
use super::protocol::{
    parse_client_message, server_message, ClientMessage, ErrorCode, ErrorReply, Verb,
    PROTOCOL_VERSION,
};
use super::wire::{Frame, SnapshotEncoder};
use crate::scene::SceneError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write the command log: {0}")]
    Log(std::io::Error),
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub session: SessionConfig,
    pub addr: SocketAddr,
    /// Where to write the command log when the server stops.
    pub record: Option<PathBuf>,
    /// Stop after this many ticks.
    pub max_ticks: Option<u64>,
}

/// Per-connection protocol state: handshake and seq ordering.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConnState {
    greeted: bool,
    last_seq: Option<u64>,
}

/// What a connection should do with one incoming text message.
#[derive(Clone, Debug, PartialEq)]
pub enum Intake {
    /// Send this text back.
    Reply(String),
    /// Handshake accepted; register with the engine.
    Hello,
    Cmd { seq: u64, verb: Verb },
    /// Send this text and close.
    Close(String),
}

fn error_text(e: &ErrorReply) -> String {
    server_message("error", e)
}

impl ConnState {
    pub fn handle(&mut self, text: &str) -> Intake {
        match parse_client_message(text) {
            Err(e) => Intake::Reply(error_text(&e)),
            Ok(ClientMessage::Hello { version }) => {
                if self.greeted {
                    Intake::Reply(error_text(&ErrorReply::new(
                        ErrorCode::BadSequence,
                        "already greeted",
                    )))
                } else if version != PROTOCOL_VERSION {
                    Intake::Close(error_text(&ErrorReply::new(
                        ErrorCode::VersionMismatch,
                        format!("server speaks version {PROTOCOL_VERSION}, client sent {version}"),
                    )))
                } else {
                    self.greeted = true;
                    Intake::Hello
                }
            }
            Ok(ClientMessage::Cmd { seq, verb, .. }) => {
                if !self.greeted {
                    Intake::Reply(error_text(
                        &ErrorReply::new(ErrorCode::BadSequence, "send hello first").for_seq(seq),
                    ))
                } else if self.last_seq.is_some_and(|l| seq <= l) {
                    Intake::Reply(error_text(
                        &ErrorReply::new(
                            ErrorCode::StaleSeq,
                            format!("seq {seq} does not follow {}", self.last_seq.unwrap_or(0)),
                        )
                        .for_seq(seq),
                    ))
                } else {
                    self.last_seq = Some(seq);
                    Intake::Cmd { seq, verb }
                }
            }
        }
    }
}

enum ToEngine {
    Join {
        conn: u64,
        out: mpsc::Sender<String>,
    },
    Cmd {
        conn: u64,
        seq: u64,
        verb: Verb,
    },
    Leave {
        conn: u64,
    },
}

/// Result of a finished session.
#[derive(Clone, Debug)]
pub struct ServerSummary {
    pub ticks: u64,
    pub digest: String,
    pub log: Vec<LogRecord>,
}

/// Stops a running server; cheap to clone.
#[derive(Clone, Debug)]
pub struct Stopper(Arc<watch::Sender<bool>>);

impl Stopper {
    pub fn stop(&self) {
        let _ = self.0.send(true);
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Stopper,
    task: JoinHandle<Result<ServerSummary, SessionError>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&self) {
        self.stop.stop();
    }

    pub fn stopper(&self) -> Stopper {
        self.stop.clone()
    }

    /// Waits for the frame loop to stop (after [`shutdown`](Self::shutdown)
    /// or the tick limit) and returns the session summary.
    pub async fn join(self) -> Result<ServerSummary, SessionError> {
        match self.task.await {
            Ok(r) => r,
            Err(e) => std::panic::resume_unwind(e.into_panic()),
        }
    }
}

/// Outgoing queue length per client; a client that falls this far behind
/// misses snapshots and gets a full one when it catches up.
const CLIENT_QUEUE: usize = 64;

/// Binds the port and starts the session.
pub async fn start(config: ServerConfig) -> Result<ServerHandle, SessionError> {
    let engine = Engine::new(config.session.clone())?;
    let listener = TcpListener::bind(config.addr)
        .await
        .map_err(|source| SessionError::Bind {
            addr: config.addr,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| SessionError::Bind {
        addr: config.addr,
        source,
    })?;
    let (stop, stop_rx) = watch::channel(false);
    let stop = Stopper(Arc::new(stop));
    let (tx, rx) = mpsc::unbounded_channel();
    let accept = tokio::spawn(accept_loop(listener, tx, stop_rx.clone()));
    let stopper = stop.clone();
    let task = tokio::spawn(async move {
        let result = frame_loop(engine, rx, stop_rx, &config).await;
        // also ends the connections when the loop stopped on its own
        stopper.stop();
        let _ = accept.await;
        let summary = result?;
        if let Some(path) = &config.record {
            write_log(path, &summary.log).map_err(SessionError::Log)?;
        }
        Ok(summary)
    });
    Ok(ServerHandle { addr, stop, task })
}

async fn accept_loop(
    listener: TcpListener,
    tx: mpsc::UnboundedSender<ToEngine>,
    mut stop: watch::Receiver<bool>,
) {
    let next_conn = Arc::new(AtomicU64::new(1));
    loop {
        tokio::select! {
            _ = stop.changed() => break,
            accepted = listener.accept() => {
                let Ok((stream, peer)) = accepted else { continue };
                let conn = next_conn.fetch_add(1, Ordering::Relaxed);
                log::debug!("connection {conn} from {peer}");
                tokio::spawn(connection(stream, conn, tx.clone(), stop.clone()));
            }
        }
    }
}

async fn connection(
    stream: TcpStream,
    conn: u64,
    tx: mpsc::UnboundedSender<ToEngine>,
    mut stop: watch::Receiver<bool>,
) {
    let Ok(ws) = tokio_tungstenite::accept_async(stream).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let (out_tx, mut out_rx) = mpsc::channel::<String>(CLIENT_QUEUE);
    let (close_tx, mut close_rx) = watch::channel(false);

    let writer = tokio::spawn(async move {
        loop {
            tokio::select! {
                msg = out_rx.recv() => match msg {
                    Some(text) => {
                        if sink.send(Message::Text(text.into())).await.is_err() {
                            break;
                        }
                    }
                    None => break,
                },
                _ = close_rx.changed() => {
                    // drain what is queued, then close
                    while let Ok(text) = out_rx.try_recv() {
                        let _ = sink.send(Message::Text(text.into())).await;
                    }
                    break;
                }
            }
        }
        let _ = sink.close().await;
    });

    let mut state = ConnState::default();
    loop {
        if *stop.borrow() {
            break;
        }
        let msg = tokio::select! {
            m = source.next() => m,
            _ = stop.changed() => None,
        };
        let Some(msg) = msg else { break };
        let text = match msg {
            Ok(Message::Text(t)) => t.to_string(),
            Ok(Message::Binary(b)) => String::from_utf8_lossy(&b).into_owned(),
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        match state.handle(&text) {
            Intake::Reply(reply) => {
                if out_tx.send(reply).await.is_err() {
                    break;
                }
            }
            Intake::Hello => {
                let _ = tx.send(ToEngine::Join {
                    conn,
                    out: out_tx.clone(),
                });
            }
            Intake::Cmd { seq, verb } => {
                let _ = tx.send(ToEngine::Cmd { conn, seq, verb });
            }
            Intake::Close(reply) => {
                let _ = out_tx.send(reply).await;
                break;
            }
        }
    }
    let _ = tx.send(ToEngine::Leave { conn });
    let _ = close_tx.send(true);
    drop(out_tx);
    let _ = writer.await;
}

struct Client {
    out: mpsc::Sender<String>,
    encoder: SnapshotEncoder,
}

impl Client {
    /// Queues a message; returns false once the client is gone.
    fn send(&mut self, text: String) -> bool {
        match self.out.try_send(text) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                self.encoder.reset();
                true
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        }
    }
}

async fn frame_loop(
    mut engine: Engine,
    mut rx: mpsc::UnboundedReceiver<ToEngine>,
    mut stop: watch::Receiver<bool>,
    config: &ServerConfig,
) -> Result<ServerSummary, SessionError> {
    let hz = if config.session.frame_hz > 0.0 {
        config.session.frame_hz
    } else {
        60.0
    };
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / hz));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut clients: BTreeMap<u64, Client> = BTreeMap::new();
    let manifest = server_message("hello_ack", &serde_json::json!({
        "version": PROTOCOL_VERSION,
        "manifest": engine.manifest(),
    }));

    loop {
        if *stop.borrow() || config.max_ticks.is_some_and(|m| engine.world.tick >= m) {
            break;
        }
        tokio::select! {
            _ = stop.changed() => break,
            _ = interval.tick() => {}
        }

        while let Ok(msg) = rx.try_recv() {
            match msg {
                ToEngine::Join { conn, out } => {
                    let mut client = Client {
                        out,
                        encoder: SnapshotEncoder::default(),
                    };
                    let frame = Frame::capture(&engine.world);
                    let snapshot = client.encoder.encode(&frame);
                    if client.send(manifest.clone()) && client.send(snapshot) {
                        clients.insert(conn, client);
                    }
                }
                ToEngine::Cmd { conn, seq, verb } => engine.submit(conn, seq, verb),
                ToEngine::Leave { conn } => {
                    clients.remove(&conn);
                }
            }
        }

        let (replies, broadcast) = engine.frame()?;
        for reply in replies {
            let text = match &reply.result {
                Ok(applied) => server_message("applied", applied),
                Err(e) => error_text(e),
            };
            if let Some(c) = clients.get_mut(&reply.conn) {
                c.send(text);
            }
        }
        if broadcast && !clients.is_empty() {
            let frame = Frame::capture(&engine.world);
            clients.retain(|_, c| {
                let text = c.encoder.encode(&frame);
                c.send(text)
            });
        }
    }

    Ok(ServerSummary {
        ticks: engine.world.tick,
        digest: engine.digest(),
        log: engine.finish_log(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::protocol::{cmd_message, hello_message};

    #[test]
    fn handshake_then_commands() {
        let mut s = ConnState::default();
        let grab = Verb::Grab { name: "tube".into() };
        match s.handle(&cmd_message(1, &grab)) {
            Intake::Reply(t) => assert!(t.contains("bad_sequence")),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.handle(&hello_message(1)), Intake::Hello);
        assert_eq!(
            s.handle(&cmd_message(1, &grab)),
            Intake::Cmd {
                seq: 1,
                verb: grab.clone()
            }
        );
        match s.handle(&cmd_message(1, &grab)) {
            Intake::Reply(t) => assert!(t.contains("stale_seq")),
            other => panic!("{other:?}"),
        }
        match s.handle("{nope") {
            Intake::Reply(t) => assert!(t.contains("bad_message")),
            other => panic!("{other:?}"),
        }
        // the connection is still usable
        assert!(matches!(s.handle(&cmd_message(2, &grab)), Intake::Cmd { seq: 2, .. }));
    }

    #[test]
    fn version_mismatch_closes() {
        let mut s = ConnState::default();
        match s.handle(&hello_message(2)) {
            Intake::Close(t) => assert!(t.contains("version_mismatch")),
            other => panic!("{other:?}"),
        }
    }
}
