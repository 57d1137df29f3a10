//! Session command logs.
//!
//! A log is newline-delimited JSON: a `header` naming the scene and seed,
//! one `cmd` record per command that took effect (with the tick boundary
//! it was applied at), and a closing `end` record with the final tick and
//! digest. Replaying a log rebuilds the scene and reapplies the commands
//! at the same ticks.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::engine::apply_verb;
use super::protocol::{Verb, PROTOCOL_VERSION};
use crate::scene;
use crate::sim::world_digest;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub scene: String,
    pub seed: u64,
    pub dt: f64,
    /// Tick of the scene when the session started.
    #[serde(default)]
    pub start_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Cmd {
        tick: u64,
        conn: u64,
        seq: u64,
        command: Verb,
    },
    End {
        tick: u64,
        digest: String,
    },
}

/// A problem with a log; `entry` is the 1-based record (line) number.
#[derive(Debug, Error, PartialEq)]
#[error("log entry {entry}: {message}")]
pub struct LogError {
    pub entry: usize,
    pub message: String,
}

fn err(entry: usize, message: impl Into<String>) -> LogError {
    LogError {
        entry,
        message: message.into(),
    }
}

/// A parsed, well-formed log.
#[derive(Clone, Debug, PartialEq)]
pub struct CommandLog {
    pub header: LogHeader,
    /// Commands with their 1-based entry numbers.
    pub commands: Vec<(usize, u64, Verb)>,
    pub end_tick: u64,
    pub digest: String,
}

pub fn to_ndjson(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).unwrap_or_default());
        out.push('\n');
    }
    out
}

pub fn write_log(path: &Path, records: &[LogRecord]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_ndjson(records).as_bytes())?;
    f.sync_all()
}

/// Parses and checks a log: header first, commands in non-decreasing tick
/// order and `(conn, seq)` order within a tick, then exactly one `end`.
pub fn parse_log(text: &str) -> Result<CommandLog, LogError> {
    let mut header = None;
    let mut commands = Vec::new();
    let mut end = None;
    let mut last: Option<(u64, u64, u64)> = None;
    let mut entries = 0;
    for (i, line) in text.split('\n').enumerate() {
        let entry = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        entries = entry;
        if end.is_some() {
            return Err(err(entry, "record after the end record"));
        }
        let record: LogRecord =
            serde_json::from_str(line).map_err(|e| err(entry, format!("unreadable record: {e}")))?;
        match record {
            LogRecord::Header(h) => {
                if header.is_some() || entry != 1 {
                    return Err(err(entry, "header must be the first and only header"));
                }
                if h.version != PROTOCOL_VERSION {
                    return Err(err(entry, format!("unsupported log version {}", h.version)));
                }
                header = Some(h);
            }
            LogRecord::Cmd {
                tick,
                conn,
                seq,
                command,
            } => {
                let Some(h) = &header else {
                    return Err(err(entry, "command before the header"));
                };
                if tick < h.start_tick {
                    return Err(err(entry, "command before the session start"));
                }
                if last.is_some_and(|l| (tick, conn, seq) <= l) {
                    return Err(err(entry, "commands out of order"));
                }
                command
                    .validate()
                    .map_err(|m| err(entry, format!("invalid command: {m}")))?;
                last = Some((tick, conn, seq));
                commands.push((entry, tick, command));
            }
            LogRecord::End { tick, digest } => {
                let Some(h) = &header else {
                    return Err(err(entry, "end before the header"));
                };
                if tick < h.start_tick || last.is_some_and(|l| tick < l.0) {
                    return Err(err(entry, "end tick precedes the last command"));
                }
                end = Some((tick, digest));
            }
        }
    }
    let header = header.ok_or_else(|| err(1, "missing header"))?;
    let (end_tick, digest) = end.ok_or_else(|| err(entries + 1, "truncated: no end record"))?;
    Ok(CommandLog {
        header,
        commands,
        end_tick,
        digest,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplayOutcome {
    pub digest: String,
    pub recorded_digest: String,
    pub ticks: u64,
}

impl ReplayOutcome {
    pub fn matches(&self) -> bool {
        self.digest == self.recorded_digest
    }
}

/// Rebuilds the scene and replays the commands headlessly.
pub fn replay(log: &CommandLog) -> Result<ReplayOutcome, LogError> {
    let mut world = scene::build(&log.header.scene, log.header.seed)
        .map_err(|e| err(1, format!("cannot build scene: {e}")))?;
    if world.config.sim.dt.to_bits() != log.header.dt.to_bits() {
        return Err(err(1, format!("log dt {} differs from the scene's", log.header.dt)));
    }
    while world.tick < log.header.start_tick {
        world.advance().map_err(|e| err(1, e.to_string()))?;
    }
    let mut next = 0;
    let end_entry = log.commands.last().map_or(2, |c| c.0 + 1);
    loop {
        while let Some((entry, tick, verb)) = log.commands.get(next) {
            if *tick != world.tick {
                break;
            }
            apply_verb(&mut world, verb)
                .map_err(|e| err(*entry, format!("command rejected on replay: {}", e.message)))?;
            next += 1;
        }
        if world.tick >= log.end_tick {
            break;
        }
        world
            .advance()
            .map_err(|e| err(end_entry, format!("simulation failed: {e}")))?;
    }
    Ok(ReplayOutcome {
        digest: world_digest(&world),
        recorded_digest: log.digest.clone(),
        ticks: world.tick,
    })
}

pub fn replay_text(text: &str) -> Result<ReplayOutcome, LogError> {
    replay(&parse_log(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let w = scene::build("single_bottle", 1).unwrap();
        serde_json::to_string(&LogRecord::Header(LogHeader {
            version: PROTOCOL_VERSION,
            scene: "single_bottle".into(),
            seed: 1,
            dt: w.config.sim.dt,
            start_tick: 0,
        }))
        .unwrap()
    }

    #[test]
    fn empty_log_equals_waiting() {
        let text = format!("{}\n{{\"type\":\"end\",\"tick\":30,\"digest\":\"x\"}}\n", header());
        let out = replay_text(&text).unwrap();
        let mut w = scene::build("single_bottle", 1).unwrap();
        w.advance_by(30).unwrap();
        assert_eq!(out.digest, world_digest(&w));
        assert_eq!(out.ticks, 30);
        assert!(!out.matches());
    }

    #[test]
    fn truncation_names_the_first_bad_entry() {
        let cmd = r#"{"type":"cmd","tick":0,"conn":1,"seq":1,"command":{"verb":"grab","name":"bottle"}}"#;
        let text = format!("{}\n{cmd}\n{{\"type\":\"end\",\"ti", header());
        assert_eq!(parse_log(&text).unwrap_err().entry, 3);
        let text = format!("{}\n{cmd}\n", header());
        let e = parse_log(&text).unwrap_err();
        assert_eq!(e.entry, 3);
        assert!(e.message.contains("truncated"));
    }

    #[test]
    fn out_of_order_commands_are_rejected() {
        let a = r#"{"type":"cmd","tick":5,"conn":1,"seq":2,"command":{"verb":"release_hand"}}"#;
        let b = r#"{"type":"cmd","tick":5,"conn":1,"seq":1,"command":{"verb":"release_hand"}}"#;
        let text = format!("{}\n{a}\n{b}\n{{\"type\":\"end\",\"tick\":9,\"digest\":\"\"}}\n", header());
        assert_eq!(parse_log(&text).unwrap_err().entry, 3);
    }

    #[test]
    fn replay_rejects_commands_that_cannot_apply() {
        let a = r#"{"type":"cmd","tick":2,"conn":1,"seq":1,"command":{"verb":"grab","name":"flask"}}"#;
        let text = format!("{}\n{a}\n{{\"type\":\"end\",\"tick\":9,\"digest\":\"\"}}\n", header());
        assert_eq!(replay_text(&text).unwrap_err().entry, 2);
    }
}
