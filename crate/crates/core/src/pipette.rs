//! The dropper.
//!
//! A pipette is an ordinary vessel whose mouth carries a gate. Pressing the
//! bulb opens the gate and, with the tip below a liquid surface, starts
//! suction: nearby particles are pulled by a spring toward an attractor just
//! inside the tip and are captured as they cross the mouth. The gate shuts on
//! its own once the pipette holds `capacity` particles. Releasing opens the
//! gate with suction off so the contents fall out under gravity.

use serde::{Deserialize, Serialize};

use crate::containment::{detach, proxy_counts, TransferEvent, TransferKind};
use crate::chemistry::AdditionMethod;
use crate::ids::{ParticleId, VesselId};
use crate::sim::geometry::Vec3;
use crate::sim::world::{Route, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MouthState {
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipetteConfig {
    pub capacity: usize,
    /// Suction reach as a multiple of the tip's mouth radius.
    pub suction_radius_factor: f64,
    /// Natural frequency of the attractor spring, rad/s.
    pub spring_omega: f64,
    /// Depth of the attractor inside the mouth, in particle radii.
    pub attractor_depth_radii: f64,
}

impl Default for PipetteConfig {
    fn default() -> Self {
        PipetteConfig {
            capacity: 8,
            suction_radius_factor: 3.0,
            spring_omega: 40.0,
            attractor_depth_radii: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipette {
    pub vessel: VesselId,
    pub mouth: MouthState,
    pub capacity: usize,
    /// Particles held, in id order.
    pub contents: Vec<ParticleId>,
    /// Attractor point in the pipette's local frame.
    pub attractor_offset: Vec3,
    pub bulb_pressed: bool,
    /// Vessel being drawn from while suction runs.
    pub suction_source: Option<VesselId>,
}

impl Pipette {
    pub fn new(vessel: VesselId, mouth_z: f64, particle_radius: f64, cfg: &PipetteConfig) -> Self {
        Pipette {
            vessel,
            mouth: MouthState::Closed,
            capacity: cfg.capacity,
            contents: Vec::new(),
            attractor_offset: Vec3::new(
                0.0,
                mouth_z - cfg.attractor_depth_radii * particle_radius,
                0.0,
            ),
            bulb_pressed: false,
            suction_source: None,
        }
    }

    pub fn suction_active(&self) -> bool {
        self.suction_source.is_some()
    }

    /// Whether the gate keeps a contained particle from leaving through the
    /// mouth. A closed gate holds everything; while suction runs the open
    /// mouth only admits.
    pub fn gate_blocks(&self, _particle: ParticleId) -> bool {
        self.mouth == MouthState::Closed || self.suction_active()
    }
}

/// Tip of the pipette (its mouth centre) in world coordinates.
pub fn tip(world: &World) -> Option<Vec3> {
    let id = world.pipette_vessel()?;
    world.vessel(id).map(|v| v.mouth_center())
}

/// Vessel whose liquid the tip is dipped in, if any. The fill height is the
/// top of the highest contained particle.
pub fn submerged_in(world: &World) -> Option<VesselId> {
    let own = world.pipette_vessel()?;
    let tip = tip(world)?;
    world
        .vessels
        .iter()
        .filter(|v| v.id != own)
        .find(|v| {
            let local = v.pose.to_local(&tip);
            if !v.profile.contains_local(&local) {
                return false;
            }
            let fill = world
                .contained_in(v.id)
                .map(|p| v.pose.to_local(&p.position).y + p.radius)
                .fold(f64::NEG_INFINITY, f64::max);
            local.y < fill
        })
        .map(|v| v.id)
}

pub fn press_bulb(world: &mut World) {
    let source = submerged_in(world);
    let Some(pp) = world.pipette.as_mut() else {
        return;
    };
    pp.bulb_pressed = true;
    pp.mouth = MouthState::Open;
    if pp.suction_source.is_none() && pp.contents.len() < pp.capacity {
        pp.suction_source = source;
    }
}

/// Result of a release: where the tip is relative to the target vessel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReleaseInfo {
    pub target: Option<VesselId>,
    /// Lateral distance of the tip from the target's axis, as a fraction of
    /// its mouth radius.
    pub offset_fraction: Option<f64>,
    pub expected_method: Option<AdditionMethod>,
}

pub fn release(world: &mut World, target_hint: Option<VesselId>) -> ReleaseInfo {
    let side = world.config.parenting.side_entry_fraction;
    let tip = tip(world);
    let target = target_hint.filter(|id| world.vessel(*id).is_some());
    let offset_fraction = match (target.and_then(|id| world.vessel(id)), tip) {
        (Some(v), Some(t)) => {
            let local = v.pose.to_local(&t);
            Some((local.x * local.x + local.z * local.z).sqrt() / v.profile.mouth_radius())
        }
        _ => None,
    };
    if let Some(pp) = world.pipette.as_mut() {
        pp.mouth = MouthState::Open;
        pp.bulb_pressed = false;
        pp.suction_source = None;
    }
    ReleaseInfo {
        target,
        offset_fraction,
        expected_method: offset_fraction.map(|f| {
            if f >= side {
                AdditionMethod::DropperSide
            } else {
                AdditionMethod::DropperTop
            }
        }),
    }
}

/// One tick of suction: captures particles that crossed the mouth and sets
/// spring accelerations on the next candidates.
pub fn tick_suction(world: &mut World) -> Vec<TransferEvent> {
    let mut events = Vec::new();
    let Some(pp) = world.pipette.clone() else {
        return events;
    };
    let Some(source) = pp.suction_source else {
        return events;
    };
    if pp.mouth == MouthState::Closed {
        return events;
    }
    let Some(body) = world.vessel(pp.vessel).cloned() else {
        return events;
    };
    let mouth_z = body.profile.mouth_z();

    // capture
    let mut proxies = proxy_counts(world, source);
    let mut held = pp.contents.len();
    for i in 0..world.particles.len() {
        if held >= pp.capacity {
            break;
        }
        let p = &world.particles[i];
        if !(p.contained && p.parent == Some(source)) {
            continue;
        }
        let local = body.pose.to_local(&p.position);
        if local.y >= mouth_z || body.profile.sdf_local(&local) <= 0.0 {
            continue;
        }
        let id = p.id;
        detach(world, i, &mut proxies, Route::Dropper);
        crate::containment::attach(world, i, pp.vessel, AdditionMethod::DropperTop);
        world.particles[i].route = None;
        world.particles[i].velocity *= 0.0;
        held += 1;
        events.push(TransferEvent {
            tick: world.tick,
            particle: id,
            from: Some(source),
            to: Some(pp.vessel),
            kind: TransferKind::Pickup,
        });
    }
    sync_contents(world);

    let cfg = world.config.pipette.clone();
    let gravity = world.config.sim.gravity;
    let Some(state) = world.pipette.as_mut() else {
        return events;
    };
    if state.contents.len() >= state.capacity {
        state.mouth = MouthState::Closed;
        state.suction_source = None;
        state.bulb_pressed = false;
        return events;
    }
    let want = state.capacity - state.contents.len();

    // attract the nearest candidates
    let tip = body.mouth_center();
    let reach = cfg.suction_radius_factor * body.profile.mouth_radius();
    let target = body.pose.to_world(&state.attractor_offset);
    let mut near: Vec<(f64, usize)> = world
        .particles
        .iter()
        .enumerate()
        .filter(|(_, p)| p.contained && p.parent == Some(source))
        .map(|(i, p)| ((p.position - tip).norm(), i))
        .filter(|(d, _)| *d <= reach)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let w = cfg.spring_omega;
    for &(_, i) in near.iter().take(want) {
        let p = &mut world.particles[i];
        p.accel = (target - p.position) * (w * w) - p.velocity * (2.0 * w) - gravity;
    }
    events
}

/// Refreshes the pipette's content list from particle ownership.
pub fn sync_contents(world: &mut World) {
    let Some(id) = world.pipette_vessel() else {
        return;
    };
    let contents: Vec<ParticleId> = world.contained_in(id).map(|p| p.id).collect();
    if let Some(pp) = world.pipette.as_mut() {
        pp.contents = contents;
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::chemistry::SpeciesRegistry;
    use crate::dsl::{parse_script, run_script};
    use crate::scene;
    use crate::sim::WorldConfig;

    const DIP: &str = "grab dropper
move dropper -0.08 0.26 0 over 20
move dropper 0.08 0.26 0 over 40
move dropper 0.08 0.089 0 over 60
";

    fn run(w: &mut World, text: &str) {
        let script = parse_script(text).unwrap();
        run_script(&script, w, "single_bottle").unwrap();
    }

    fn state(w: &World) -> Pipette {
        w.pipette.clone().unwrap()
    }

    #[test]
    fn press_in_air_opens_without_suction() {
        let mut w = scene::build("single_bottle", 1).unwrap();
        press_bulb(&mut w);
        let p = state(&w);
        assert_eq!(p.mouth, MouthState::Open);
        assert!(p.bulb_pressed);
        assert!(!p.suction_active());
        w.advance_by(30).unwrap();
        assert!(state(&w).contents.is_empty());
    }

    #[test]
    fn press_while_submerged_starts_suction_and_is_idempotent() {
        let mut w = scene::build("single_bottle", 1).unwrap();
        run(&mut w, DIP);
        let bottle = w.vessel_by_name("bottle").unwrap().id;
        assert_eq!(submerged_in(&w), Some(bottle));
        press_bulb(&mut w);
        let once = state(&w);
        assert_eq!(once.suction_source, Some(bottle));
        press_bulb(&mut w);
        assert_eq!(state(&w), once);
    }

    #[test]
    fn suction_fills_to_capacity_and_closes() {
        let mut w = scene::build("single_bottle", 1).unwrap();
        run(&mut w, &format!("{DIP}pipette_press\n"));
        for _ in 0..120 {
            w.advance().unwrap();
            assert!(state(&w).contents.len() <= 8);
        }
        let p = state(&w);
        assert_eq!(p.contents.len(), 8);
        assert_eq!(p.mouth, MouthState::Closed);
        assert!(!p.suction_active());
        for id in &p.contents {
            assert_eq!(w.particle(*id).unwrap().parent, Some(p.vessel));
        }
    }

    #[test]
    fn short_supply_leaves_the_mouth_open() {
        let registry = Arc::new(SpeciesRegistry::stock());
        let mut w = scene::single_bottle(WorldConfig::default(), registry, 1, 3).unwrap();
        // the shallow fill needs a deeper dip
        run(
            &mut w,
            "grab dropper
move dropper -0.08 0.26 0 over 20
move dropper 0.08 0.26 0 over 40
move dropper 0.08 0.08 0 over 60
pipette_press
wait 200
",
        );
        let p = state(&w);
        assert_eq!(p.contents.len(), 3);
        assert_eq!(p.mouth, MouthState::Open);
    }

    #[test]
    fn suction_with_a_closed_mouth_does_nothing() {
        let mut w = scene::build("single_bottle", 1).unwrap();
        run(&mut w, &format!("{DIP}pipette_press\n"));
        w.pipette.as_mut().unwrap().mouth = MouthState::Closed;
        let before = w.particles.clone();
        let pp = state(&w);
        assert!(tick_suction(&mut w).is_empty());
        assert_eq!(state(&w), pp);
        assert_eq!(w.particles, before);
    }

    #[test]
    fn side_release_over_the_tube_is_logged_as_dropper_side() {
        let mut w = scene::build("single_bottle", 1).unwrap();
        run(
            &mut w,
            &format!(
                "{DIP}pipette_press
wait 90
move dropper 0.08 0.26 0 over 60
move dropper 0.008 0.26 0 over 60
"
            ),
        );
        let tube = w.primary_tube().unwrap();
        let info = release(&mut w, Some(tube));
        assert!(info.offset_fraction.unwrap() >= 0.5);
        assert_eq!(info.expected_method, Some(AdditionMethod::DropperSide));
        w.advance_by(180).unwrap();
        assert!(state(&w).contents.is_empty());
        assert_eq!(w.contained_in(tube).count(), 8);
        let log = w.vessel(tube).unwrap().mixture.log();
        // methods are judged per particle; a few may bounce towards the axis
        assert_eq!(log[0].method, AdditionMethod::DropperSide);
        let side: f64 = log
            .iter()
            .filter(|a| a.method == AdditionMethod::DropperSide)
            .map(|a| a.amount_g)
            .sum();
        let total: f64 = log.iter().map(|a| a.amount_g).sum();
        assert!(side > 0.5 * total);
    }

    #[test]
    fn release_over_the_floor_spills_everything() {
        let mut w = scene::build("single_bottle", 1).unwrap();
        run(
            &mut w,
            &format!(
                "{DIP}pipette_press
wait 90
move dropper 0.08 0.26 0 over 60
move dropper 0.2 0.26 0.2 over 60
"
            ),
        );
        let held = state(&w).contents;
        assert_eq!(held.len(), 8);
        release(&mut w, None);
        w.advance_by(240).unwrap();
        for id in held {
            assert_eq!(w.particle(id).unwrap().parent, None);
        }
    }

    #[test]
    fn empty_release_only_opens_the_mouth() {
        let mut w = scene::build("single_bottle", 1).unwrap();
        let before = w.particles.clone();
        let info = release(&mut w, None);
        assert_eq!(info.target, None);
        assert_eq!(state(&w).mouth, MouthState::Open);
        assert!(state(&w).contents.is_empty());
        assert_eq!(w.particles, before);
    }
}
