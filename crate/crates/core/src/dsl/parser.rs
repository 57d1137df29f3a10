//! Line grammar for lab scripts.
//!
//! One statement per line, tokens separated by whitespace, `#` starts a
//! comment that runs to the end of the line. Every failure is reported as a
//! [`SyntaxError`] with a 1-based line and column and the set of tokens that
//! would have been accepted there.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemistry::{AdditionMethod, Verdict};
use crate::pipette::MouthState;

pub const VERBS: [&str; 9] = [
    "grab",
    "release_hand",
    "move",
    "tilt",
    "pipette_press",
    "pipette_release",
    "add",
    "wait",
    "assert",
];

pub const PREDICATES: [&str; 8] = [
    "verdict",
    "count",
    "spills",
    "pipette_contents",
    "mouth",
    "ring_particles",
    "penetration",
    "logged",
];

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub expected: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{line}:{col}: unknown object '{name}'")]
    UnknownObject {
        name: String,
        line: usize,
        col: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl Cmp {
    const ALL: [(&'static str, Cmp); 6] = [
        ("<=", Cmp::Le),
        (">=", Cmp::Ge),
        ("==", Cmp::Eq),
        ("!=", Cmp::Ne),
        ("<", Cmp::Lt),
        (">", Cmp::Gt),
    ];

    pub fn as_str(self) -> &'static str {
        Cmp::ALL
            .iter()
            .find(|(_, c)| *c == self)
            .map(|(s, _)| *s)
            .unwrap_or("==")
    }

    pub fn holds<T: PartialOrd>(self, left: T, right: T) -> bool {
        match self {
            Cmp::Lt => left < right,
            Cmp::Le => left <= right,
            Cmp::Eq => left == right,
            Cmp::Ne => left != right,
            Cmp::Ge => left >= right,
            Cmp::Gt => left > right,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    Verdict { verdict: Verdict },
    Count { vessel: String, cmp: Cmp, n: u64 },
    Spills { cmp: Cmp, n: u64 },
    PipetteContents { cmp: Cmp, n: u64 },
    Mouth { state: MouthState },
    RingParticles { cmp: Cmp, n: u64 },
    /// Largest wall penetration so far, in particle radii.
    Penetration { cmp: Cmp, value: f64 },
    /// The vessel's addition log has an entry for the species by method.
    Logged {
        vessel: String,
        species: String,
        method: AdditionMethod,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case")]
pub enum Statement {
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
        target: Option<String>,
    },
    Add {
        vessel: String,
        species: String,
        grams: f64,
        method: AdditionMethod,
    },
    Wait {
        ticks: u64,
    },
    Assert {
        predicate: Predicate,
    },
}

impl Statement {
    /// Vessel names the statement refers to.
    pub fn objects(&self) -> Vec<&str> {
        match self {
            Statement::Grab { name }
            | Statement::Move { name, .. }
            | Statement::Tilt { name, .. } => vec![name],
            Statement::PipetteRelease { target } => target.iter().map(String::as_str).collect(),
            Statement::Add { vessel, .. } => vec![vessel],
            Statement::Assert { predicate } => match predicate {
                Predicate::Count { vessel, .. } | Predicate::Logged { vessel, .. } => {
                    vec![vessel]
                }
                _ => Vec::new(),
            },
            _ => Vec::new(),
        }
    }

    /// Ticks the statement takes when run from a script.
    pub fn duration(&self) -> u64 {
        match self {
            Statement::Move { over, .. } | Statement::Tilt { over, .. } => u64::from(*over),
            Statement::Wait { ticks } => *ticks,
            _ => 0,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Verdict { verdict } => write!(f, "verdict {verdict}"),
            Predicate::Count { vessel, cmp, n } => {
                write!(f, "count {vessel} {} {n}", cmp.as_str())
            }
            Predicate::Spills { cmp, n } => write!(f, "spills {} {n}", cmp.as_str()),
            Predicate::PipetteContents { cmp, n } => {
                write!(f, "pipette_contents {} {n}", cmp.as_str())
            }
            Predicate::Mouth { state } => write!(
                f,
                "mouth {}",
                match state {
                    MouthState::Open => "open",
                    MouthState::Closed => "closed",
                }
            ),
            Predicate::RingParticles { cmp, n } => {
                write!(f, "ring_particles {} {n}", cmp.as_str())
            }
            Predicate::Penetration { cmp, value } => {
                write!(f, "penetration {} {value:?}", cmp.as_str())
            }
            Predicate::Logged {
                vessel,
                species,
                method,
            } => write!(f, "logged {vessel} {species} {method}"),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Grab { name } => write!(f, "grab {name}"),
            Statement::ReleaseHand => f.write_str("release_hand"),
            Statement::Move { name, x, y, z, over } => {
                write!(f, "move {name} {x:?} {y:?} {z:?} over {over}")
            }
            Statement::Tilt {
                name,
                degrees,
                over,
            } => write!(f, "tilt {name} {degrees:?} over {over}"),
            Statement::PipettePress => f.write_str("pipette_press"),
            Statement::PipetteRelease { target: None } => f.write_str("pipette_release"),
            Statement::PipetteRelease { target: Some(t) } => write!(f, "pipette_release {t}"),
            Statement::Add {
                vessel,
                species,
                grams,
                method,
            } => write!(f, "add {vessel} {species} {grams:?} {method}"),
            Statement::Wait { ticks } => write!(f, "wait {ticks}"),
            Statement::Assert { predicate } => write!(f, "assert {predicate}"),
        }
    }
}

/// Parsed script. Equality compares statements only, not where they were.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Script {
    pub statements: Vec<Statement>,
    /// `(line, column)` of each statement's first token.
    pub positions: Vec<(usize, usize)>,
}

impl PartialEq for Script {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statements {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

impl Script {
    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    /// Checks that every referenced vessel exists.
    pub fn resolve<'a>(
        &self,
        mut known: impl FnMut(&str) -> bool + 'a,
    ) -> Result<(), ScriptError> {
        for (s, &(line, col)) in self.statements.iter().zip(&self.positions) {
            for name in s.objects() {
                if !known(name) {
                    return Err(ScriptError::UnknownObject {
                        name: name.to_string(),
                        line,
                        col,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    col: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    /// Column just past the last character, for "missing token" errors.
    end_col: usize,
    next: usize,
}

impl<'a> Line<'a> {
    fn new(number: usize, text: &'a str) -> Self {
        let code = match text.find('#') {
            Some(i) => &text[..i],
            None => text,
        };
        let mut tokens = Vec::new();
        let mut start: Option<(usize, usize)> = None;
        let mut col = 0;
        for (byte, ch) in code.char_indices() {
            col += 1;
            if ch.is_whitespace() {
                if let Some((b, c)) = start.take() {
                    tokens.push(Token {
                        text: &code[b..byte],
                        col: c,
                    });
                }
            } else if start.is_none() {
                start = Some((byte, col));
            }
        }
        if let Some((b, c)) = start {
            tokens.push(Token {
                text: &code[b..],
                col: c,
            });
        }
        Line {
            number,
            tokens,
            end_col: col + 1,
            next: 0,
        }
    }

    fn error(&self, col: usize, message: String, expected: &[&str]) -> SyntaxError {
        SyntaxError {
            line: self.number,
            col,
            message,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn next(&mut self, what: &str, expected: &[&str]) -> Result<Token<'a>, SyntaxError> {
        match self.tokens.get(self.next) {
            Some(t) => {
                self.next += 1;
                Ok(*t)
            }
            None => Err(self.error(
                self.end_col,
                format!("expected {what}, found end of line"),
                expected,
            )),
        }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.next).copied()
    }

    fn name(&mut self, what: &str) -> Result<String, SyntaxError> {
        let t = self.next(what, &["<name>"])?;
        let mut chars = t.text.chars();
        let ok = chars
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if ok {
            Ok(t.text.to_string())
        } else {
            Err(self.error(t.col, format!("'{}' is not a valid {what}", t.text), &["<name>"]))
        }
    }

    fn real(&mut self, what: &str) -> Result<(f64, usize), SyntaxError> {
        let t = self.next(what, &["<number>"])?;
        // only plain decimal notation; rejects inf and nan spellings
        let plain = t
            .text
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'));
        match t.text.parse::<f64>() {
            Ok(v) if plain && v.is_finite() => Ok((v, t.col)),
            _ => Err(self.error(
                t.col,
                format!("expected {what} as a finite number, found '{}'", t.text),
                &["<number>"],
            )),
        }
    }

    fn integer(&mut self, what: &str) -> Result<(u64, usize), SyntaxError> {
        let t = self.next(what, &["<integer>"])?;
        if t.text.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(v) = t.text.parse::<u64>() {
                return Ok((v, t.col));
            }
        }
        Err(self.error(
            t.col,
            format!("expected {what} as a non-negative integer, found '{}'", t.text),
            &["<integer>"],
        ))
    }

    fn keyword<T: Copy>(&mut self, what: &str, options: &[(&str, T)]) -> Result<T, SyntaxError> {
        let names: Vec<&str> = options.iter().map(|(s, _)| *s).collect();
        let t = self.next(what, &names)?;
        options
            .iter()
            .find(|(s, _)| *s == t.text)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                self.error(
                    t.col,
                    format!("unknown {what} '{}', expected one of: {}", t.text, names.join(", ")),
                    &names,
                )
            })
    }

    fn cmp(&mut self) -> Result<Cmp, SyntaxError> {
        self.keyword("comparison", &Cmp::ALL)
    }

    fn over(&mut self) -> Result<u32, SyntaxError> {
        if self.peek().is_none() {
            return Ok(1);
        }
        self.keyword("'over'", &[("over", ())])?;
        let (n, col) = self.integer("tick count")?;
        match u32::try_from(n) {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(self.error(
                col,
                format!("tick count must be between 1 and {}", u32::MAX),
                &["<integer>"],
            )),
        }
    }

    fn finish(&self) -> Result<(), SyntaxError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.error(
                t.col,
                format!("unexpected '{}' after complete statement", t.text),
                &["<end of line>"],
            )),
        }
    }
}

const METHODS: [(&str, AdditionMethod); 3] = [
    ("poured", AdditionMethod::Poured),
    ("dropper_side", AdditionMethod::DropperSide),
    ("dropper_top", AdditionMethod::DropperTop),
];

const VERDICTS: [(&str, Verdict); 3] = [
    ("brown_ring", Verdict::BrownRing),
    ("no_reaction", Verdict::NoReaction),
    ("interference", Verdict::Interference),
];

fn predicate(line: &mut Line) -> Result<Predicate, SyntaxError> {
    let t = line.next("predicate", &PREDICATES)?;
    Ok(match t.text {
        "verdict" => Predicate::Verdict {
            verdict: line.keyword("verdict", &VERDICTS)?,
        },
        "count" => Predicate::Count {
            vessel: line.name("vessel name")?,
            cmp: line.cmp()?,
            n: line.integer("count")?.0,
        },
        "spills" => Predicate::Spills {
            cmp: line.cmp()?,
            n: line.integer("count")?.0,
        },
        "pipette_contents" => Predicate::PipetteContents {
            cmp: line.cmp()?,
            n: line.integer("count")?.0,
        },
        "mouth" => Predicate::Mouth {
            state: line.keyword(
                "mouth state",
                &[("open", MouthState::Open), ("closed", MouthState::Closed)],
            )?,
        },
        "ring_particles" => Predicate::RingParticles {
            cmp: line.cmp()?,
            n: line.integer("count")?.0,
        },
        "penetration" => Predicate::Penetration {
            cmp: line.cmp()?,
            value: line.real("penetration")?.0,
        },
        "logged" => Predicate::Logged {
            vessel: line.name("vessel name")?,
            species: line.name("species name")?,
            method: line.keyword("addition method", &METHODS)?,
        },
        other => {
            return Err(line.error(
                t.col,
                format!("unknown predicate '{other}'"),
                &PREDICATES,
            ))
        }
    })
}

fn statement(line: &mut Line, verb: Token) -> Result<Statement, SyntaxError> {
    let s = match verb.text {
        "grab" => Statement::Grab {
            name: line.name("object name")?,
        },
        "release_hand" => Statement::ReleaseHand,
        "move" => Statement::Move {
            name: line.name("object name")?,
            x: line.real("x")?.0,
            y: line.real("y")?.0,
            z: line.real("z")?.0,
            over: line.over()?,
        },
        "tilt" => {
            let name = line.name("object name")?;
            let (degrees, col) = line.real("angle")?;
            if !(-180.0..=180.0).contains(&degrees) {
                return Err(line.error(
                    col,
                    format!("tilt angle {degrees} is outside [-180, 180]"),
                    &["<number>"],
                ));
            }
            Statement::Tilt {
                name,
                degrees,
                over: line.over()?,
            }
        }
        "pipette_press" => Statement::PipettePress,
        "pipette_release" => Statement::PipetteRelease {
            target: match line.peek() {
                Some(_) => Some(line.name("vessel name")?),
                None => None,
            },
        },
        "add" => {
            let vessel = line.name("vessel name")?;
            let species = line.name("species name")?;
            let (grams, col) = line.real("grams")?;
            if grams <= 0.0 {
                return Err(line.error(col, "amount must be positive".into(), &["<number>"]));
            }
            let method = match line.peek() {
                Some(_) => line.keyword("addition method", &METHODS)?,
                None => AdditionMethod::Poured,
            };
            Statement::Add {
                vessel,
                species,
                grams,
                method,
            }
        }
        "wait" => Statement::Wait {
            ticks: line.integer("tick count")?.0,
        },
        "assert" => Statement::Assert {
            predicate: predicate(line)?,
        },
        other => {
            return Err(line.error(
                verb.col,
                format!("unknown verb '{other}', expected one of: {}", VERBS.join(", ")),
                &VERBS,
            ))
        }
    };
    line.finish()?;
    Ok(s)
}

/// Parses a single statement, as sent by interactive clients.
pub fn parse_statement(text: &str) -> Result<Statement, SyntaxError> {
    let mut line = Line::new(1, text);
    let verb = line.next("statement", &VERBS)?;
    statement(&mut line, verb)
}

pub fn parse_script(text: &str) -> Result<Script, SyntaxError> {
    let mut script = Script::default();
    for (i, raw) in text.lines().enumerate() {
        let mut line = Line::new(i + 1, raw);
        let Some(verb) = line.peek() else { continue };
        line.next += 1;
        script.statements.push(statement(&mut line, verb)?);
        script.positions.push((i + 1, verb.col));
    }
    Ok(script)
}

/// Like [`parse_script`] but accepts arbitrary bytes; invalid UTF-8 is a
/// positioned error at the first offending byte.
pub fn parse_script_bytes(bytes: &[u8]) -> Result<Script, SyntaxError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_script(text),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            // the prefix is valid UTF-8 by construction
            let prefix = std::str::from_utf8(valid).unwrap_or_default();
            let line = prefix.matches('\n').count() + 1;
            let last = prefix.rsplit('\n').next().unwrap_or("");
            Err(SyntaxError {
                line,
                col: last.chars().count() + 1,
                message: "invalid UTF-8".into(),
                expected: Vec::new(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wait_statement() {
        let s = parse_script("wait 10").unwrap();
        assert_eq!(s.statements, vec![Statement::Wait { ticks: 10 }]);
    }

    #[test]
    fn tilt_statement() {
        let s = parse_script("tilt bottle_feso4 120 over 60").unwrap();
        assert_eq!(
            s.statements,
            vec![Statement::Tilt {
                name: "bottle_feso4".into(),
                degrees: 120.0,
                over: 60
            }]
        );
    }

    #[test]
    fn misspelled_verb_lists_verbs() {
        let e = parse_script("tlit bottle 120").unwrap_err();
        assert_eq!((e.line, e.col), (1, 1));
        assert_eq!(e.expected.len(), VERBS.len());
        assert!(e.expected.iter().any(|v| v == "tilt"));
    }

    #[test]
    fn comments_and_blank_lines() {
        let s = parse_script("# header\n\n  grab tube   # hold it\nrelease_hand\n").unwrap();
        assert_eq!(s.statements.len(), 2);
        assert_eq!(s.positions, vec![(3, 3), (4, 1)]);
    }

    #[test]
    fn positioned_errors() {
        let e = parse_script("wait 1\nmove tube 1 2").unwrap_err();
        assert_eq!((e.line, e.col), (2, 14));
        let e = parse_script("tilt tube 181").unwrap_err();
        assert_eq!((e.line, e.col), (1, 11));
        let e = parse_script("tilt tube 10 over 0").unwrap_err();
        assert_eq!((e.line, e.col), (1, 19));
        let e = parse_script("wait 3 4").unwrap_err();
        assert_eq!((e.line, e.col), (1, 8));
        let e = parse_script("move tube nan 0 0").unwrap_err();
        assert_eq!((e.line, e.col), (1, 11));
        let e = parse_script_bytes(b"wait 1\nwa\xffit").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
    }

    #[test]
    fn pretty_print_round_trip() {
        let text = "grab bottle_feso4\nmove bottle_feso4 0.1 0.2 -0.3 over 5\n\
                    tilt bottle_feso4 -110.5\nadd tube kno3 0.001\n\
                    assert count tube >= 3\nassert penetration <= 0.1\n\
                    assert logged tube h2so4 dropper_side\npipette_release tube\n";
        let s = parse_script(text).unwrap();
        let again = parse_script(&s.to_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn resolve_reports_unknown_object() {
        let s = parse_script("wait 1\ngrab flask").unwrap();
        let e = s.resolve(|n| n == "tube").unwrap_err();
        assert_eq!(
            e,
            ScriptError::UnknownObject {
                name: "flask".into(),
                line: 2,
                col: 1
            }
        );
    }
}
