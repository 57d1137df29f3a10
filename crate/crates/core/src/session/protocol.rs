//! Wire messages.
//!
//! Every message is one JSON object with a `type` field. Clients send
//! `hello` once, then `cmd` messages whose `verb` field names the action
//! and whose remaining fields are its arguments:
//!
//! ```text
//! {"type":"hello","version":1}
//! {"type":"cmd","seq":1,"verb":"grab","name":"bottle_feso4"}
//! {"type":"cmd","seq":2,"verb":"tilt","name":"bottle_feso4","degrees":-115,"over":120}
//! ```
//!
//! The server answers with `hello_ack`, streams `snapshot` messages and
//! reports problems with `error` messages carrying a stable `code`.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chemistry::AdditionMethod;
use crate::dsl::Statement;
use crate::pipette::ReleaseInfo;

pub const PROTOCOL_VERSION: u32 = 1;

/// A command verb: the script vocabulary minus `wait` and `assert`, plus
/// picking along a screen ray and dragging a held vessel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum Verb {
    Grab {
        name: String,
    },
    ReleaseHand,
    Move {
        name: String,
        x: f64,
        y: f64,
        z: f64,
        over: u32,
    },
    Tilt {
        name: String,
        degrees: f64,
        over: u32,
    },
    PipettePress,
    PipetteRelease {
        #[serde(default)]
        target: Option<String>,
    },
    Add {
        vessel: String,
        species: String,
        grams: f64,
        method: AdditionMethod,
    },
    /// Grabs the first vessel hit by the ray `origin + t * direction`.
    GrabAt {
        origin: [f64; 3],
        direction: [f64; 3],
    },
    /// Moves the held vessel to a pose; orientation is `[i, j, k, w]` and
    /// defaults to the current one.
    Drag {
        position: [f64; 3],
        #[serde(default)]
        orientation: Option<[f64; 4]>,
        #[serde(default = "one")]
        over: u32,
    },
}

fn one() -> u32 {
    1
}

impl Verb {
    /// The equivalent script statement, for verbs that have one.
    pub fn to_statement(&self) -> Option<Statement> {
        Some(match self.clone() {
            Verb::Grab { name } => Statement::Grab { name },
            Verb::ReleaseHand => Statement::ReleaseHand,
            Verb::Move { name, x, y, z, over } => Statement::Move { name, x, y, z, over },
            Verb::Tilt {
                name,
                degrees,
                over,
            } => Statement::Tilt {
                name,
                degrees,
                over,
            },
            Verb::PipettePress => Statement::PipettePress,
            Verb::PipetteRelease { target } => Statement::PipetteRelease { target },
            Verb::Add {
                vessel,
                species,
                grams,
                method,
            } => Statement::Add {
                vessel,
                species,
                grams,
                method,
            },
            Verb::GrabAt { .. } | Verb::Drag { .. } => return None,
        })
    }

    /// The verb for a script statement; `wait` and `assert` have none.
    pub fn from_statement(stmt: &Statement) -> Option<Verb> {
        Some(match stmt.clone() {
            Statement::Grab { name } => Verb::Grab { name },
            Statement::ReleaseHand => Verb::ReleaseHand,
            Statement::Move { name, x, y, z, over } => Verb::Move { name, x, y, z, over },
            Statement::Tilt {
                name,
                degrees,
                over,
            } => Verb::Tilt {
                name,
                degrees,
                over,
            },
            Statement::PipettePress => Verb::PipettePress,
            Statement::PipetteRelease { target } => Verb::PipetteRelease { target },
            Statement::Add {
                vessel,
                species,
                grams,
                method,
            } => Verb::Add {
                vessel,
                species,
                grams,
                method,
            },
            Statement::Wait { .. } | Statement::Assert { .. } => return None,
        })
    }

    /// Checks argument ranges the type system does not.
    pub fn validate(&self) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Verb::Move { x, y, z, over, .. } if !finite(&[*x, *y, *z]) || *over == 0 => {
                Err("move needs finite coordinates and over >= 1".into())
            }
            Verb::Tilt { degrees, over, .. }
                if !degrees.is_finite() || degrees.abs() > 180.0 || *over == 0 =>
            {
                Err("tilt needs degrees in [-180, 180] and over >= 1".into())
            }
            Verb::GrabAt { origin, direction }
                if !finite(origin) || !finite(direction) || direction.iter().all(|d| *d == 0.0) =>
            {
                Err("grab_at needs a finite origin and a non-zero direction".into())
            }
            Verb::Drag {
                position,
                orientation,
                over,
            } if !finite(position)
                || orientation.is_some_and(|q| !finite(&q) || q.iter().all(|x| *x == 0.0))
                || *over == 0 =>
            {
                Err("drag needs a finite position, a non-zero quaternion and over >= 1".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, not an object, or missing/ill-typed fields.
    BadMessage,
    VersionMismatch,
    /// A `cmd` arrived before `hello`, or a second `hello`.
    BadSequence,
    /// `seq` did not increase.
    StaleSeq,
    UnsupportedVerb,
    InvalidArgument,
    UnknownObject,
    UnknownSpecies,
    NotHeld,
    NoPipette,
    NoTarget,
    Rejected,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadMessage => "bad_message",
            ErrorCode::VersionMismatch => "version_mismatch",
            ErrorCode::BadSequence => "bad_sequence",
            ErrorCode::StaleSeq => "stale_seq",
            ErrorCode::UnsupportedVerb => "unsupported_verb",
            ErrorCode::InvalidArgument => "invalid_argument",
            ErrorCode::UnknownObject => "unknown_object",
            ErrorCode::UnknownSpecies => "unknown_species",
            ErrorCode::NotHeld => "not_held",
            ErrorCode::NoPipette => "no_pipette",
            ErrorCode::NoTarget => "no_target",
            ErrorCode::Rejected => "rejected",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An error reply; `seq` is set when it concerns a particular command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

impl ErrorReply {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ErrorReply {
            code,
            message: message.into(),
            seq: None,
        }
    }

    pub fn for_seq(mut self, seq: u64) -> Self {
        self.seq = Some(seq);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselInfo {
    pub id: u32,
    pub name: String,
    pub kind: String,
    /// `(height, inner radius)` pairs of the cavity profile, local frame.
    pub profile: Vec<(f64, f64)>,
    pub wall_thickness: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesInfo {
    pub index: usize,
    pub name: String,
    pub role: String,
    pub color: String,
}

/// What a client needs to draw the bench.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scene: String,
    pub seed: u64,
    pub dt: f64,
    pub ticks_per_frame: u32,
    pub frame_hz: f64,
    pub snapshot_every_frames: u32,
    pub particle_radius: f64,
    /// Particle positions in snapshots are integers in units of 1/scale m.
    pub position_scale: f64,
    pub vessels: Vec<VesselInfo>,
    pub species: Vec<SpeciesInfo>,
    pub verbs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClientMessage {
    Hello {
        version: u32,
    },
    Cmd {
        seq: u64,
        verb: Verb,
        issued_at: Option<f64>,
    },
}

/// Applied-command acknowledgement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Applied {
    pub seq: u64,
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release: Option<ReleaseInfo>,
}

fn bad(message: impl Into<String>) -> ErrorReply {
    ErrorReply::new(ErrorCode::BadMessage, message)
}

/// Parses one client message. `seq` is attached to the error whenever it
/// could be read.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, ErrorReply> {
    let value: Value = serde_json::from_str(text).map_err(|e| bad(format!("not JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| bad("expected a JSON object"))?;
    let ty = obj
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string field 'type'"))?;
    match ty {
        "hello" => {
            let version = obj
                .get("version")
                .and_then(Value::as_u64)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| bad("hello needs an integer 'version'"))?;
            Ok(ClientMessage::Hello { version })
        }
        "cmd" => {
            let seq = obj
                .get("seq")
                .and_then(Value::as_u64)
                .ok_or_else(|| bad("cmd needs a non-negative integer 'seq'"))?;
            let issued_at = match obj.get("issued_at") {
                None | Some(Value::Null) => None,
                Some(v) => Some(
                    v.as_f64()
                        .ok_or_else(|| bad("'issued_at' must be a number").for_seq(seq))?,
                ),
            };
            let verb_name = obj
                .get("verb")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("cmd needs a string 'verb'").for_seq(seq))?;
            if matches!(verb_name, "wait" | "assert") {
                return Err(ErrorReply::new(
                    ErrorCode::UnsupportedVerb,
                    format!("'{verb_name}' is only available in scripts"),
                )
                .for_seq(seq));
            }
            let verb: Verb = serde_json::from_value(value.clone())
                .map_err(|e| bad(format!("bad '{verb_name}' command: {e}")).for_seq(seq))?;
            verb.validate()
                .map_err(|m| ErrorReply::new(ErrorCode::InvalidArgument, m).for_seq(seq))?;
            Ok(ClientMessage::Cmd {
                seq,
                verb,
                issued_at,
            })
        }
        other => Err(bad(format!("unknown message type '{other}'"))),
    }
}

/// JSON text of a server message: `{"type": ty, ...fields of body}`.
/// `body` must serialize to an object without a `type` field.
pub fn server_message<T: Serialize>(ty: &str, body: &T) -> String {
    let tag = serde_json::to_string(ty).unwrap_or_default();
    match serde_json::to_string(body) {
        Ok(text) if text.starts_with('{') && text.len() > 2 => {
            format!("{{\"type\":{tag},{}", &text[1..])
        }
        _ => format!("{{\"type\":{tag}}}"),
    }
}

pub fn hello_message(version: u32) -> String {
    serde_json::json!({ "type": "hello", "version": version }).to_string()
}

pub fn cmd_message(seq: u64, verb: &Verb) -> String {
    let mut value = serde_json::to_value(verb).unwrap_or(Value::Null);
    if let Some(obj) = value.as_object_mut() {
        obj.insert("type".into(), Value::String("cmd".into()));
        obj.insert("seq".into(), Value::from(seq));
    }
    value.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hello_parses() {
        assert_eq!(
            parse_client_message(r#"{"type":"hello","version":1}"#),
            Ok(ClientMessage::Hello { version: 1 })
        );
    }

    #[test]
    fn cmd_round_trips_through_the_wire_form() {
        let verb = Verb::Tilt {
            name: "bottle_feso4".into(),
            degrees: -115.0,
            over: 120,
        };
        let text = cmd_message(4, &verb);
        assert_eq!(
            parse_client_message(&text),
            Ok(ClientMessage::Cmd {
                seq: 4,
                verb,
                issued_at: None
            })
        );
    }

    #[test]
    fn wait_and_assert_are_script_only() {
        let e = parse_client_message(r#"{"type":"cmd","seq":3,"verb":"wait","ticks":5}"#)
            .unwrap_err();
        assert_eq!(e.code, ErrorCode::UnsupportedVerb);
        assert_eq!(e.seq, Some(3));
    }

    #[test]
    fn malformed_messages_are_bad_message() {
        for text in [
            "",
            "[]",
            "{",
            r#"{"type":7}"#,
            r#"{"type":"cmd","verb":"grab","name":"x"}"#,
            r#"{"type":"cmd","seq":1,"verb":"fly"}"#,
            r#"{"type":"cmd","seq":1,"verb":"grab"}"#,
            r#"{"type":"nope"}"#,
        ] {
            assert_eq!(
                parse_client_message(text).unwrap_err().code,
                ErrorCode::BadMessage,
                "{text}"
            );
        }
    }

    #[test]
    fn range_checks() {
        let e = parse_client_message(
            r#"{"type":"cmd","seq":1,"verb":"tilt","name":"tube","degrees":200,"over":5}"#,
        )
        .unwrap_err();
        assert_eq!(e.code, ErrorCode::InvalidArgument);
        let e = parse_client_message(
            r#"{"type":"cmd","seq":1,"verb":"grab_at","origin":[0,0,0],"direction":[0,0,0]}"#,
        )
        .unwrap_err();
        assert_eq!(e.code, ErrorCode::InvalidArgument);
    }

    #[test]
    fn drag_defaults() {
        let m = parse_client_message(r#"{"type":"cmd","seq":9,"verb":"drag","position":[0,0.1,0]}"#)
            .unwrap();
        assert_eq!(
            m,
            ClientMessage::Cmd {
                seq: 9,
                verb: Verb::Drag {
                    position: [0.0, 0.1, 0.0],
                    orientation: None,
                    over: 1
                },
                issued_at: None
            }
        );
    }

    #[test]
    fn statements_map_onto_verbs() {
        let s = crate::dsl::parse_statement("move tube 0 0.1 0 over 3").unwrap();
        let v = Verb::from_statement(&s).unwrap();
        assert_eq!(v.to_statement(), Some(s));
        let w = crate::dsl::parse_statement("wait 3").unwrap();
        assert_eq!(Verb::from_statement(&w), None);
    }

    #[test]
    fn server_messages_lead_with_type() {
        let e = ErrorReply::new(ErrorCode::StaleSeq, "seq 1 after 2").for_seq(1);
        let text = server_message("error", &e);
        assert!(text.starts_with(r#"{"type":"error","#), "{text}");
        assert!(text.contains(r#""code":"stale_seq""#));
    }
}
