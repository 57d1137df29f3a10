//! The simulation side of a session: a world, a queue of pending commands
//! and the frame loop body. Everything here is synchronous; the server
//! only feeds it commands and forwards what it produces.

use std::collections::BTreeMap;

use super::log::{LogHeader, LogRecord};
use super::protocol::{
    Applied, ErrorCode, ErrorReply, Manifest, SpeciesInfo, Verb, VesselInfo, PROTOCOL_VERSION,
};
use super::wire::POSITION_SCALE;
use crate::dsl::{apply_statement, grab, RunError};
use crate::ids::VesselId;
use crate::pipette::ReleaseInfo;
use crate::scene::{self, SceneError};
use crate::sim::{world_digest, Pose, Quat, SimError, Vec3, World};

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub scene: String,
    pub seed: u64,
    pub frame_hz: f64,
    pub ticks_per_frame: u32,
    pub snapshot_every_frames: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            scene: "brown_ring".into(),
            seed: 7,
            frame_hz: 60.0,
            ticks_per_frame: 2,
            snapshot_every_frames: 2,
        }
    }
}

fn run_error(e: RunError) -> ErrorReply {
    let code = match &e {
        RunError::UnknownObject { .. } => ErrorCode::UnknownObject,
        RunError::UnknownSpecies { .. } => ErrorCode::UnknownSpecies,
        RunError::NotHeld { .. } => ErrorCode::NotHeld,
        RunError::NoPipette { .. } => ErrorCode::NoPipette,
        RunError::Mixture { .. } => ErrorCode::InvalidArgument,
        RunError::Sim(_) => ErrorCode::Rejected,
    };
    // the line number means nothing for a live command
    let message = match e {
        RunError::UnknownObject { name, .. } => format!("unknown object '{name}'"),
        RunError::UnknownSpecies { name, .. } => format!("unknown species '{name}'"),
        RunError::NotHeld { name, .. } => format!("'{name}' must be grabbed first"),
        RunError::NoPipette { .. } => "the bench has no dropper".into(),
        RunError::Mixture { source, .. } => source.to_string(),
        RunError::Sim(s) => s.to_string(),
    };
    ErrorReply::new(code, message)
}

/// First vessel hit by a ray, using a capsule around each vessel's axis
/// as its pick shape. Ties go to the lower id.
pub fn pick(world: &World, origin: &Vec3, direction: &Vec3) -> Option<VesselId> {
    let d = direction.try_normalize(0.0)?;
    let mut best: Option<(f64, VesselId)> = None;
    for v in &world.vessels {
        let a = v.pose.to_world(&Vec3::new(0.0, v.profile.floor_z(), 0.0));
        let b = v.mouth_center();
        let reach = v
            .profile
            .points()
            .iter()
            .map(|p| p.1)
            .fold(0.0, f64::max)
            + v.profile.wall_thickness;
        let Some(t) = ray_segment_hit(origin, &d, &a, &b, reach) else {
            continue;
        };
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, v.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Ray parameter of the closest approach to segment `ab`, if the ray
/// passes within `radius` of it in front of the origin.
fn ray_segment_hit(o: &Vec3, d: &Vec3, a: &Vec3, b: &Vec3, radius: f64) -> Option<f64> {
    let u = b - a;
    let w = o - a;
    let uu = u.dot(&u);
    let ud = u.dot(d);
    let denom = uu - ud * ud;
    // sample the segment parameter where the lines come closest, clamped
    let s = if uu <= 0.0 {
        0.0
    } else if denom.abs() < 1e-15 {
        0.0
    } else {
        ((u.dot(&w) - ud * d.dot(&w)) / denom).clamp(0.0, 1.0)
    };
    let p = a + u * s;
    let t = d.dot(&(p - o)).max(0.0);
    let gap = (o + d * t - p).norm();
    (gap <= radius).then_some(t)
}

/// Applies a verb to a world at the current tick.
pub fn apply_verb(world: &mut World, verb: &Verb) -> Result<Option<ReleaseInfo>, ErrorReply> {
    if let Some(stmt) = verb.to_statement() {
        return apply_statement(world, &stmt, 0).map_err(run_error);
    }
    match verb {
        Verb::GrabAt { origin, direction } => {
            let o = Vec3::from(*origin);
            let d = Vec3::from(*direction);
            let id = pick(world, &o, &d)
                .ok_or_else(|| ErrorReply::new(ErrorCode::NoTarget, "the ray hits no vessel"))?;
            grab(world, id);
        }
        Verb::Drag {
            position,
            orientation,
            over,
        } => {
            let v = world
                .vessels
                .iter()
                .find(|v| v.held)
                .ok_or_else(|| ErrorReply::new(ErrorCode::NotHeld, "nothing is held"))?;
            let orientation = match orientation {
                Some([i, j, k, w]) => {
                    Quat::from_quaternion(nalgebra::Quaternion::new(*w, *i, *j, *k))
                }
                None => v.pose.orientation,
            };
            let id = v.id;
            let to = Pose {
                position: Vec3::from(*position),
                orientation,
            };
            world.set_motion(id, to, Vec3::zeros(), *over);
        }
        _ => {}
    }
    Ok(None)
}

/// A queued command.
#[derive(Clone, Debug, PartialEq)]
pub struct Pending {
    pub conn: u64,
    pub seq: u64,
    pub verb: Verb,
}

/// The outcome of one command applied at a tick boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct Reply {
    pub conn: u64,
    pub result: Result<Applied, ErrorReply>,
}

pub struct Engine {
    pub world: World,
    pub config: SessionConfig,
    pending: Vec<Pending>,
    records: Vec<LogRecord>,
    frames: u64,
}

impl Engine {
    pub fn new(config: SessionConfig) -> Result<Self, SceneError> {
        let world = scene::build(&config.scene, config.seed)?;
        Ok(Self::with_world(world, config))
    }

    pub fn with_world(world: World, config: SessionConfig) -> Self {
        let header = LogRecord::Header(LogHeader {
            version: PROTOCOL_VERSION,
            scene: config.scene.clone(),
            seed: config.seed,
            dt: world.config.sim.dt,
            start_tick: world.tick,
        });
        Engine {
            world,
            config,
            pending: Vec::new(),
            records: vec![header],
            frames: 0,
        }
    }

    pub fn manifest(&self) -> Manifest {
        let w = &self.world;
        Manifest {
            scene: self.config.scene.clone(),
            seed: self.config.seed,
            dt: w.config.sim.dt,
            ticks_per_frame: self.config.ticks_per_frame,
            frame_hz: self.config.frame_hz,
            snapshot_every_frames: self.config.snapshot_every_frames,
            particle_radius: w.config.sim.particle_radius,
            position_scale: POSITION_SCALE,
            vessels: w
                .vessels
                .iter()
                .map(|v| VesselInfo {
                    id: v.id.0,
                    name: v.name.clone(),
                    kind: v.profile.kind.as_str().into(),
                    profile: v.profile.points().to_vec(),
                    wall_thickness: v.profile.wall_thickness,
                })
                .collect(),
            species: w
                .registry
                .iter()
                .map(|s| SpeciesInfo {
                    index: usize::from(s.id.0),
                    name: s.name.clone(),
                    role: s.role.to_string(),
                    color: s.color_hex(),
                })
                .collect(),
            verbs: [
                "grab",
                "release_hand",
                "move",
                "tilt",
                "pipette_press",
                "pipette_release",
                "add",
                "grab_at",
                "drag",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    /// Queues a command for the next tick boundary.
    pub fn submit(&mut self, conn: u64, seq: u64, verb: Verb) {
        self.pending.push(Pending { conn, seq, verb });
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Applies every queued command in `(connection, seq)` order at the
    /// current tick, logging the ones that took effect.
    pub fn apply_pending(&mut self) -> Vec<Reply> {
        let mut batch = std::mem::take(&mut self.pending);
        batch.sort_by_key(|p| (p.conn, p.seq));
        let mut replies = Vec::with_capacity(batch.len());
        for p in batch {
            let tick = self.world.tick;
            let result = apply_verb(&mut self.world, &p.verb)
                .map(|release| Applied {
                    seq: p.seq,
                    tick,
                    release,
                })
                .map_err(|e| e.for_seq(p.seq));
            if result.is_ok() {
                self.records.push(LogRecord::Cmd {
                    tick,
                    conn: p.conn,
                    seq: p.seq,
                    command: p.verb,
                });
            }
            replies.push(Reply {
                conn: p.conn,
                result,
            });
        }
        replies
    }

    /// One frame: queued commands, then `ticks_per_frame` ticks. Returns
    /// the command replies and whether this frame should be broadcast.
    pub fn frame(&mut self) -> Result<(Vec<Reply>, bool), SimError> {
        let replies = self.apply_pending();
        for _ in 0..self.config.ticks_per_frame {
            self.world.advance()?;
        }
        self.frames += 1;
        let every = u64::from(self.config.snapshot_every_frames.max(1));
        Ok((replies, self.frames % every == 0))
    }

    /// Log records so far: the header and every applied command.
    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn digest(&self) -> String {
        world_digest(&self.world)
    }

    /// The full log including the closing record.
    pub fn finish_log(&self) -> Vec<LogRecord> {
        let mut out = self.records.clone();
        out.push(LogRecord::End {
            tick: self.world.tick,
            digest: self.digest(),
        });
        out
    }

    /// Names of vessels, for callers that want to validate ahead of time.
    pub fn vessel_names(&self) -> BTreeMap<String, VesselId> {
        self.world
            .vessels
            .iter()
            .map(|v| (v.name.clone(), v.id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine() -> Engine {
        let world = scene::build("single_bottle", 3).unwrap();
        Engine::with_world(
            world,
            SessionConfig {
                scene: "single_bottle".into(),
                seed: 3,
                ..SessionConfig::default()
            },
        )
    }

    #[test]
    fn commands_apply_in_connection_then_seq_order() {
        let mut e = engine();
        e.submit(2, 1, Verb::Grab { name: "tube".into() });
        e.submit(1, 5, Verb::Grab { name: "bottle".into() });
        e.submit(1, 2, Verb::Grab { name: "dropper".into() });
        let replies = e.apply_pending();
        let order: Vec<(u64, u64)> = replies
            .iter()
            .map(|r| (r.conn, r.result.as_ref().unwrap().seq))
            .collect();
        assert_eq!(order, vec![(1, 2), (1, 5), (2, 1)]);
        // the last grab wins
        assert!(e.world.vessel_by_name("tube").unwrap().held);
    }

    #[test]
    fn failed_commands_are_reported_and_not_logged() {
        let mut e = engine();
        e.submit(1, 1, Verb::Grab { name: "flask".into() });
        e.submit(1, 2, Verb::Tilt {
            name: "bottle".into(),
            degrees: 10.0,
            over: 5,
        });
        let replies = e.apply_pending();
        assert_eq!(replies[0].result.as_ref().unwrap_err().code, ErrorCode::UnknownObject);
        assert_eq!(replies[1].result.as_ref().unwrap_err().code, ErrorCode::NotHeld);
        assert_eq!(replies[1].result.as_ref().unwrap_err().seq, Some(2));
        assert_eq!(e.records().len(), 1);
    }

    #[test]
    fn frame_advances_ticks_and_flags_broadcasts() {
        let mut e = engine();
        let (_, first) = e.frame().unwrap();
        let (_, second) = e.frame().unwrap();
        assert_eq!(e.world.tick, 4);
        assert!(!first);
        assert!(second);
    }

    #[test]
    fn ray_pick_hits_the_nearest_vessel() {
        let e = engine();
        // looking down -x from the right at tube height hits the bottle
        // (x = 0.08) before the tube (x = 0)
        let hit = pick(
            &e.world,
            &Vec3::new(0.5, 0.04, 0.0),
            &Vec3::new(-1.0, 0.0, 0.0),
        );
        assert_eq!(hit, e.world.vessel_by_name("bottle").map(|v| v.id));
        let miss = pick(
            &e.world,
            &Vec3::new(0.5, 0.04, 0.0),
            &Vec3::new(1.0, 0.0, 0.0),
        );
        assert_eq!(miss, None);
    }

    #[test]
    fn drag_needs_a_held_vessel() {
        let mut e = engine();
        let drag = Verb::Drag {
            position: [0.0, 0.2, 0.0],
            orientation: None,
            over: 4,
        };
        assert_eq!(
            apply_verb(&mut e.world, &drag).unwrap_err().code,
            ErrorCode::NotHeld
        );
        apply_verb(&mut e.world, &Verb::Grab { name: "tube".into() }).unwrap();
        apply_verb(&mut e.world, &drag).unwrap();
        for _ in 0..4 {
            e.world.advance().unwrap();
        }
        let tube = e.world.vessel_by_name("tube").unwrap();
        assert!((tube.pose.position - Vec3::new(0.0, 0.2, 0.0)).norm() < 1e-12);
    }
}
