//! Compact snapshot stream.
//!
//! Particle positions go over the wire as integers in units of
//! `1 / POSITION_SCALE` metres. The first snapshot a client receives is
//! full; later ones carry only the particles whose quantized position,
//! species or parent changed since the previous snapshot sent to that
//! client, and the mixture ledgers only when they changed. A
//! [`SceneMirror`] applies the stream back into a complete view.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chemistry::{RingBand, Verdict};
use crate::sim::{Snapshot, World};

/// Positions are sent in tenths of a millimetre.
pub const POSITION_SCALE: f64 = 10_000.0;

/// `[id, x, y, z, species, parent]`, parent `-1` for none.
pub type WireParticle = [i64; 6];

/// `[id, x, y, z, qi, qj, qk, qw, held]`, reals rounded to 6 decimals.
pub type WireVessel = [f64; 9];

fn quantize(x: f64) -> i64 {
    (x * POSITION_SCALE).round() as i64
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// One tick of world state, quantized for the wire. Cheap to share
/// between connections.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub tick: u64,
    pub particles: Vec<WireParticle>,
    pub vessels: Vec<WireVessel>,
    pub pipette: Value,
    pub mixtures: Value,
    pub verdict: Option<Verdict>,
    pub ring_band: Option<RingBand>,
    pub digest: String,
}

impl Frame {
    pub fn capture(world: &World) -> Self {
        let snap = Snapshot::capture(world);
        Self::from_snapshot(world, &snap)
    }

    fn from_snapshot(world: &World, snap: &Snapshot) -> Self {
        let particles = world
            .particles
            .iter()
            .map(|p| {
                [
                    i64::from(p.id.0),
                    quantize(p.position.x),
                    quantize(p.position.y),
                    quantize(p.position.z),
                    i64::from(p.species.0),
                    p.parent.map_or(-1, |v| i64::from(v.0)),
                ]
            })
            .collect();
        let vessels = snap
            .vessels
            .iter()
            .map(|v| {
                [
                    f64::from(v.id),
                    round6(v.position[0]),
                    round6(v.position[1]),
                    round6(v.position[2]),
                    round6(v.orientation[0]),
                    round6(v.orientation[1]),
                    round6(v.orientation[2]),
                    round6(v.orientation[3]),
                    if v.held { 1.0 } else { 0.0 },
                ]
            })
            .collect();
        Frame {
            tick: snap.tick,
            particles,
            vessels,
            pipette: serde_json::to_value(&snap.pipette).unwrap_or(Value::Null),
            mixtures: serde_json::to_value(&snap.mixtures).unwrap_or(Value::Null),
            verdict: snap.verdict,
            ring_band: snap.ring_band.clone(),
            digest: snap.digest.clone(),
        }
    }
}

#[derive(Serialize)]
struct WireSnapshot<'a> {
    tick: u64,
    full: bool,
    particles: Vec<&'a WireParticle>,
    vessels: &'a [WireVessel],
    pipette: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    mixtures: Option<&'a Value>,
    verdict: Option<Verdict>,
    ring_band: &'a Option<RingBand>,
    digest: &'a str,
}

/// Per-client delta encoder.
#[derive(Debug, Default)]
pub struct SnapshotEncoder {
    sent: BTreeMap<i64, WireParticle>,
    mixtures: Option<Value>,
    started: bool,
}

impl SnapshotEncoder {
    /// Forces the next snapshot to be full.
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// JSON text of the `snapshot` message for `frame`.
    pub fn encode(&mut self, frame: &Frame) -> String {
        let full = !self.started;
        let particles: Vec<&WireParticle> = frame
            .particles
            .iter()
            .filter(|p| full || self.sent.get(&p[0]) != Some(*p))
            .collect();
        for p in &particles {
            self.sent.insert(p[0], **p);
        }
        let mixtures_changed = full || self.mixtures.as_ref() != Some(&frame.mixtures);
        if mixtures_changed {
            self.mixtures = Some(frame.mixtures.clone());
        }
        self.started = true;
        let body = WireSnapshot {
            tick: frame.tick,
            full,
            particles,
            vessels: &frame.vessels,
            pipette: &frame.pipette,
            mixtures: mixtures_changed.then_some(&frame.mixtures),
            verdict: frame.verdict,
            ring_band: &frame.ring_band,
            digest: &frame.digest,
        };
        super::protocol::server_message("snapshot", &body)
    }
}

/// Client-side reconstruction of the snapshot stream.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
pub struct SceneMirror {
    pub tick: Option<u64>,
    pub particles: BTreeMap<i64, WireParticle>,
    pub vessels: Vec<WireVessel>,
    pub pipette: Value,
    pub mixtures: Value,
    pub verdict: Option<Verdict>,
    pub ring_band: Option<RingBand>,
    pub digest: String,
}

#[derive(Deserialize)]
struct Incoming {
    tick: u64,
    full: bool,
    particles: Vec<WireParticle>,
    vessels: Vec<WireVessel>,
    pipette: Value,
    #[serde(default)]
    mixtures: Option<Value>,
    verdict: Option<Verdict>,
    ring_band: Option<RingBand>,
    digest: String,
}

impl SceneMirror {
    /// Applies one `snapshot` message. Ticks must strictly increase and
    /// the first message must be full.
    pub fn apply(&mut self, text: &str) -> Result<(), String> {
        let m: Incoming = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if self.tick.is_some_and(|t| m.tick <= t) {
            return Err(format!("tick {} after {:?}", m.tick, self.tick));
        }
        if self.tick.is_none() && !m.full {
            return Err("first snapshot is not full".into());
        }
        if m.full {
            self.particles.clear();
        }
        for p in m.particles {
            self.particles.insert(p[0], p);
        }
        self.tick = Some(m.tick);
        self.vessels = m.vessels;
        self.pipette = m.pipette;
        if let Some(mx) = m.mixtures {
            self.mixtures = mx;
        }
        self.verdict = m.verdict;
        self.ring_band = m.ring_band;
        self.digest = m.digest;
        Ok(())
    }

    /// True when the mirror shows exactly what `frame` holds.
    pub fn agrees_with(&self, frame: &Frame) -> bool {
        self.tick == Some(frame.tick)
            && self.particles.len() == frame.particles.len()
            && frame
                .particles
                .iter()
                .all(|p| self.particles.get(&p[0]) == Some(p))
            && self.vessels == frame.vessels
            && self.pipette == frame.pipette
            && self.mixtures == frame.mixtures
            && self.verdict == frame.verdict
            && self.digest == frame.digest
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene;

    #[test]
    fn deltas_rebuild_the_full_view() {
        let mut w = scene::build("single_bottle", 2).unwrap();
        let mut enc = SnapshotEncoder::default();
        let mut mirror = SceneMirror::default();
        crate::dsl::apply_statement(
            &mut w,
            &crate::dsl::parse_statement("grab bottle").unwrap(),
            1,
        )
        .unwrap();
        crate::dsl::apply_statement(
            &mut w,
            &crate::dsl::parse_statement("tilt bottle 60 over 40").unwrap(),
            2,
        )
        .unwrap();
        for _ in 0..30 {
            w.advance_by(2).unwrap();
            let f = Frame::capture(&w);
            mirror.apply(&enc.encode(&f)).unwrap();
            assert!(mirror.agrees_with(&f));
        }
    }

    #[test]
    fn a_quiet_world_sends_no_particles() {
        let w = scene::build("single_bottle", 2).unwrap();
        let mut enc = SnapshotEncoder::default();
        let f = Frame::capture(&w);
        let first = enc.encode(&f);
        let second = enc.encode(&f);
        assert!(first.contains(r#""full":true"#));
        assert!(second.contains(r#""particles":[]"#));
        assert!(!second.contains("mixtures"));
    }

    #[test]
    fn stale_ticks_are_refused() {
        let w = scene::build("single_bottle", 2).unwrap();
        let mut enc = SnapshotEncoder::default();
        let text = enc.encode(&Frame::capture(&w));
        let mut mirror = SceneMirror::default();
        mirror.apply(&text).unwrap();
        assert!(mirror.apply(&text).is_err());
    }
}
