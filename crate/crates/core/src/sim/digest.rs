//! Canonical world serialization, its SHA-256 digest and snapshots.
//!
//! The canonical text lists every piece of state that influences later
//! ticks in a fixed order. Reals are written in scientific notation with
//! nine significant digits and negative zero is folded into zero, so two
//! worlds agree on the digest exactly when they agree on that text.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::geometry::{Pose, Vec3};
use super::world::{Route, World};
use crate::chemistry::{RingBand, Verdict};
use crate::pipette::MouthState;

fn real(out: &mut String, x: f64) {
    let x = if x == 0.0 { 0.0 } else { x };
    let _ = write!(out, " {x:.8e}");
}

fn vec3(out: &mut String, v: &Vec3) {
    for x in v.iter() {
        real(out, *x);
    }
}

fn pose(out: &mut String, p: &Pose) {
    vec3(out, &p.position);
    let q = p.orientation.quaternion();
    // q and -q are the same rotation
    let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
    for x in [q.i, q.j, q.k, q.w] {
        real(out, sign * x);
    }
}

/// Canonical text form of everything that determines future ticks.
pub fn canonical_text(world: &World) -> String {
    let mut out = String::with_capacity(64 * world.particles.len() + 1024);
    let _ = write!(out, "tick {}\ndt", world.tick);
    real(&mut out, world.config.sim.dt);
    let _ = write!(out, "\nseed {}\n", world.rng_seed);

    for p in &world.particles {
        let _ = write!(out, "p {} {}", p.id, p.species);
        vec3(&mut out, &p.position);
        vec3(&mut out, &p.velocity);
        match p.parent {
            Some(v) => {
                let _ = write!(out, " parent {v}");
            }
            None => out.push_str(" parent -"),
        }
        let route = match p.route {
            None => "-",
            Some(Route::Poured) => "poured",
            Some(Route::Dropper) => "dropper",
        };
        let _ = write!(out, " {} {} {}", u8::from(p.contained), p.outside_ticks, route);
        for (s, g) in &p.payload {
            let _ = write!(out, " {s}");
            real(&mut out, *g);
        }
        out.push('\n');
    }

    for v in &world.vessels {
        let _ = write!(out, "v {} {} {}", v.id, v.name, u8::from(v.held));
        pose(&mut out, &v.pose);
        if let Some(m) = &v.motion {
            let _ = write!(out, " motion {} {}", m.start_tick, m.ticks);
            pose(&mut out, &m.from);
            pose(&mut out, &m.to);
            vec3(&mut out, &m.pivot_local);
        }
        out.push('\n');
        out.push_str("m");
        for (s, g) in v.mixture.amounts() {
            let _ = write!(out, " {s}");
            real(&mut out, *g);
        }
        out.push_str(" solvent");
        real(&mut out, v.mixture.total_solvent());
        out.push('\n');
        for a in v.mixture.log() {
            let _ = write!(out, "l {} {} {}", a.tick, a.species, a.method);
            real(&mut out, a.amount_g);
            out.push('\n');
        }
    }

    if let Some(pp) = &world.pipette {
        let mouth = match pp.mouth {
            MouthState::Open => "open",
            MouthState::Closed => "closed",
        };
        let _ = write!(
            out,
            "pipette {} {} {} {}",
            pp.vessel,
            mouth,
            u8::from(pp.bulb_pressed),
            pp.suction_source.map_or("-".to_string(), |v| v.to_string())
        );
        for id in &pp.contents {
            let _ = write!(out, " {id}");
        }
        out.push('\n');
    }

    for (vessel, state) in &world.reactions {
        let _ = write!(
            out,
            "r {} {} {}",
            vessel,
            state.seen_revision,
            state.pending_since.map_or("-".to_string(), |t| t.to_string())
        );
        if let Some(o) = &state.outcome {
            let _ = write!(out, " {}", o.verdict);
            for id in o.ring_ids() {
                let _ = write!(out, " {id}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn digest_text(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for b in hash {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}

/// Lowercase hex SHA-256 of [`canonical_text`].
pub fn world_digest(world: &World) -> String {
    digest_text(&canonical_text(world))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleView {
    pub id: u32,
    pub position: [f64; 3],
    pub species: String,
    pub parent: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselView {
    pub id: u32,
    pub name: String,
    pub kind: String,
    pub position: [f64; 3],
    /// Quaternion as `[i, j, k, w]`.
    pub orientation: [f64; 4],
    pub held: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipetteView {
    pub vessel: u32,
    pub mouth: MouthState,
    pub capacity: usize,
    pub contents: Vec<u32>,
    pub bulb_pressed: bool,
    pub suction: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditionView {
    pub tick: u64,
    pub species: String,
    pub amount_g: f64,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureView {
    pub vessel: u32,
    /// Grams per species name.
    pub amounts: BTreeMap<String, f64>,
    pub total_solvent: f64,
    pub log: Vec<AdditionView>,
}

/// Immutable view of one tick, shared by reports and the session stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub particles: Vec<ParticleView>,
    pub vessels: Vec<VesselView>,
    pub pipette: Option<PipetteView>,
    pub mixtures: Vec<MixtureView>,
    pub verdict: Option<Verdict>,
    pub ring_band: Option<RingBand>,
    pub digest: String,
}

impl Snapshot {
    pub fn capture(world: &World) -> Self {
        let species_name = |s| {
            world
                .registry
                .get(s)
                .map_or_else(|| s.to_string(), |sp| sp.name.clone())
        };
        let arr = |v: &Vec3| [v.x, v.y, v.z];
        let outcome = world.primary_outcome();
        Snapshot {
            tick: world.tick,
            particles: world
                .particles
                .iter()
                .map(|p| ParticleView {
                    id: p.id.0,
                    position: arr(&p.position),
                    species: species_name(p.species),
                    parent: p.parent.map(|v| v.0),
                })
                .collect(),
            vessels: world
                .vessels
                .iter()
                .map(|v| {
                    let q = v.pose.orientation.quaternion();
                    VesselView {
                        id: v.id.0,
                        name: v.name.clone(),
                        kind: v.profile.kind.as_str().to_string(),
                        position: arr(&v.pose.position),
                        orientation: [q.i, q.j, q.k, q.w],
                        held: v.held,
                    }
                })
                .collect(),
            pipette: world.pipette.as_ref().map(|pp| PipetteView {
                vessel: pp.vessel.0,
                mouth: pp.mouth,
                capacity: pp.capacity,
                contents: pp.contents.iter().map(|p| p.0).collect(),
                bulb_pressed: pp.bulb_pressed,
                suction: pp.suction_active(),
            }),
            mixtures: world
                .vessels
                .iter()
                .map(|v| MixtureView {
                    vessel: v.id.0,
                    amounts: v
                        .mixture
                        .amounts()
                        .iter()
                        .map(|(s, g)| (species_name(*s), *g))
                        .collect(),
                    total_solvent: v.mixture.total_solvent(),
                    log: v
                        .mixture
                        .log()
                        .iter()
                        .map(|a| AdditionView {
                            tick: a.tick,
                            species: species_name(a.species),
                            amount_g: a.amount_g,
                            method: a.method.to_string(),
                        })
                        .collect(),
                })
                .collect(),
            verdict: outcome.map(|o| o.verdict),
            ring_band: outcome.and_then(|o| o.ring_band.clone()),
            digest: world_digest(world),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_zero_folds() {
        let mut a = String::new();
        let mut b = String::new();
        real(&mut a, -0.0);
        real(&mut b, 0.0);
        assert_eq!(a, b);
        assert_eq!(a, " 0.00000000e0");
    }

    #[test]
    fn digest_is_lowercase_hex() {
        let d = digest_text("abc");
        assert_eq!(
            d,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
