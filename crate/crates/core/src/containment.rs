//! Particle ownership.
//!
//! Every tick each particle is assigned to at most one vessel. A particle
//! inside a cavity belongs to that vessel and rides along with it. A particle
//! in the air belongs to whichever vessel mouth it is close to; once it has
//! been away from every mouth for a grace period it is spilled and belongs to
//! nobody. Crossing a mouth also moves the particle's share of the mixture
//! ledger between vessels.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemistry::AdditionMethod;
use crate::ids::{ParticleId, SpeciesId, VesselId};
use crate::sim::geometry::tilt_angle;
use crate::sim::world::{Route, Vessel, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentingConfig {
    /// Catchment radius is `mouth_radius + catchment_radii * particle radius`.
    pub catchment_radii: f64,
    pub spill_grace_ticks: u32,
    /// Dropper arrivals at least this fraction of the mouth radius off-axis
    /// count as running down the side.
    pub side_entry_fraction: f64,
}

impl Default for ParentingConfig {
    fn default() -> Self {
        ParentingConfig {
            catchment_radii: 2.0,
            spill_grace_ticks: 12,
            side_entry_fraction: 0.5,
        }
    }
}

impl ParentingConfig {
    pub fn threshold(&self, vessel: &Vessel, particle_radius: f64) -> f64 {
        vessel.profile.mouth_radius() + self.catchment_radii * particle_radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    PourIn,
    Spill,
    Pickup,
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferKind::PourIn => "pour_in",
            TransferKind::Spill => "spill",
            TransferKind::Pickup => "pickup",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub tick: u64,
    pub particle: ParticleId,
    pub from: Option<VesselId>,
    pub to: Option<VesselId>,
    pub kind: TransferKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum ContainmentError {
    #[error("unknown vessel {0}")]
    UnknownVessel(VesselId),
}

/// Contained particles of `vessel` counted per species.
pub fn proxy_counts(world: &World, vessel: VesselId) -> BTreeMap<SpeciesId, usize> {
    let mut counts = BTreeMap::new();
    for p in world.contained_in(vessel) {
        *counts.entry(p.species).or_insert(0) += 1;
    }
    counts
}

/// Moves particle `index` out of the vessel it is contained in, taking its
/// share of that vessel's mixture along as payload.
pub(crate) fn detach(
    world: &mut World,
    index: usize,
    proxies: &mut BTreeMap<SpeciesId, usize>,
    route: Route,
) {
    let (vessel, species) = {
        let p = &world.particles[index];
        (p.parent, p.species)
    };
    let Some(vessel) = vessel else { return };
    let registry = world.registry.clone();
    let taken = match world.vessel_mut(vessel) {
        Some(v) => v.mixture.withdraw_share(&registry, species, proxies),
        None => Vec::new(),
    };
    if let Some(n) = proxies.get_mut(&species) {
        *n = n.saturating_sub(1);
    }
    let p = &mut world.particles[index];
    for (s, g) in taken {
        match p.payload.iter_mut().find(|(ps, _)| *ps == s) {
            Some(entry) => entry.1 += g,
            None => p.payload.push((s, g)),
        }
    }
    p.contained = false;
    p.route = Some(route);
}

/// Puts particle `index` inside `vessel` and credits its payload there.
pub(crate) fn attach(world: &mut World, index: usize, vessel: VesselId, method: AdditionMethod) {
    let tick = world.tick;
    let registry = world.registry.clone();
    let payload = std::mem::take(&mut world.particles[index].payload);
    if let Some(v) = world.vessel_mut(vessel) {
        for (s, g) in payload {
            if g > 0.0 {
                // species come from the registry, amounts are positive
                let _ = v.mixture.deposit(&registry, s, g, method, tick);
            }
        }
    }
    let p = &mut world.particles[index];
    p.parent = Some(vessel);
    p.contained = true;
    p.outside_ticks = 0;
}

/// Runs one round of parent assignment and returns one event per change.
pub fn assign_parents(world: &mut World, cfg: &ParentingConfig) -> Vec<TransferEvent> {
    let tick = world.tick;
    let pipette = world.pipette_vessel();
    let mut proxies: BTreeMap<VesselId, BTreeMap<SpeciesId, usize>> = world
        .vessels
        .iter()
        .map(|v| (v.id, proxy_counts(world, v.id)))
        .collect();
    let mut events = Vec::new();

    for i in 0..world.particles.len() {
        let (pos, radius, parent, contained, species) = {
            let p = &world.particles[i];
            (p.position, p.radius, p.parent, p.contained, p.species)
        };

        if contained {
            let Some(v) = parent.and_then(|id| world.vessel(id)) else {
                world.particles[i].contained = false;
                continue;
            };
            // only the mouth lets a contained particle out
            if v.pose.to_local(&pos).y < v.profile.mouth_z() {
                world.particles[i].outside_ticks = 0;
                continue;
            }
            let route = if Some(v.id) == pipette {
                Route::Dropper
            } else {
                Route::Poured
            };
            let vid = v.id;
            detach(world, i, proxies.entry(vid).or_default(), route);
        }

        let entered = world
            .vessels
            .iter()
            .filter(|v| Some(v.id) != pipette)
            .find(|v| v.contains(&pos))
            .map(|v| {
                let method = match world.particles[i].route {
                    Some(Route::Dropper) => {
                        let local = v.pose.to_local(&pos);
                        let offset = (local.x * local.x + local.z * local.z).sqrt();
                        if offset >= cfg.side_entry_fraction * v.profile.mouth_radius() {
                            AdditionMethod::DropperSide
                        } else {
                            AdditionMethod::DropperTop
                        }
                    }
                    _ => AdditionMethod::Poured,
                };
                (v.id, method)
            });
        if let Some((vid, method)) = entered {
            attach(world, i, vid, method);
            *proxies.entry(vid).or_default().entry(species).or_insert(0) += 1;
            if parent != Some(vid) {
                events.push(TransferEvent {
                    tick,
                    particle: world.particles[i].id,
                    from: parent,
                    to: Some(vid),
                    kind: TransferKind::PourIn,
                });
            }
            continue;
        }

        let catchment = world
            .vessels
            .iter()
            .filter_map(|v| {
                let d = (pos - v.mouth_center()).norm();
                (d <= cfg.threshold(v, radius)).then_some((d, v.id))
            })
            // nearest first, lowest id on exact ties
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id);

        let p = &mut world.particles[i];
        match catchment {
            Some(vid) => {
                p.outside_ticks = 0;
                if parent != Some(vid) {
                    p.parent = Some(vid);
                    events.push(TransferEvent {
                        tick,
                        particle: p.id,
                        from: parent,
                        to: Some(vid),
                        kind: if Some(vid) == pipette {
                            TransferKind::Pickup
                        } else {
                            TransferKind::PourIn
                        },
                    });
                }
            }
            None => {
                p.outside_ticks = p.outside_ticks.saturating_add(1);
                if parent.is_some() && p.outside_ticks >= cfg.spill_grace_ticks {
                    p.parent = None;
                    events.push(TransferEvent {
                        tick,
                        particle: p.id,
                        from: parent,
                        to: None,
                        kind: TransferKind::Spill,
                    });
                }
            }
        }
    }
    events
}

/// Particles of `source` currently above its mouth while it is tipped far
/// enough to pour.
pub fn pour_flux(world: &World, source: VesselId) -> Result<Vec<ParticleId>, ContainmentError> {
    let v = world
        .vessel(source)
        .ok_or(ContainmentError::UnknownVessel(source))?;
    let pour_angle = std::f64::consts::FRAC_PI_2 - v.profile.rim_angle();
    if tilt_angle(&v.pose) <= pour_angle {
        return Ok(Vec::new());
    }
    Ok(world
        .particles_in(source)
        .filter(|p| v.pose.to_local(&p.position).y >= v.profile.mouth_z())
        .map(|p| p.id)
        .collect())
}

/// Rebuilds the parent map from an initial map and an event stream.
pub fn replay_parents(
    initial: &BTreeMap<ParticleId, Option<VesselId>>,
    events: &[TransferEvent],
) -> BTreeMap<ParticleId, Option<VesselId>> {
    let mut map = initial.clone();
    for e in events {
        map.insert(e.particle, e.to);
    }
    map
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::chemistry::{Role, SpeciesRegistry};
    use crate::dsl::{apply_statement, parse_statement};
    use crate::scene;
    use crate::sim::{Pose, Vec3, WorldConfig};

    fn bench() -> (World, VesselId, VesselId, SpeciesId) {
        let registry = Arc::new(SpeciesRegistry::stock());
        let acid = registry.by_role(Role::SulfuricAcid).unwrap().id;
        let mut w = World::new(WorldConfig::default(), registry, 1);
        let tube = w.add_vessel(
            "tube",
            scene::tube_profile().unwrap(),
            Pose::at(Vec3::new(0.0, scene::TUBE_FLOOR, 0.0)),
        );
        let bottle = w.add_vessel(
            "bottle",
            scene::bottle_profile().unwrap(),
            Pose::at(Vec3::new(0.08, 0.002, 0.0)),
        );
        (w, tube, bottle, acid)
    }

    #[test]
    fn just_below_the_tube_mouth_belongs_to_the_tube() {
        let (mut w, tube, _, acid) = bench();
        let mouth = w.vessel(tube).unwrap().mouth_center();
        let id = w.add_particle(mouth - Vec3::new(0.0, 0.001, 0.0), acid, None);
        let events = assign_parents(&mut w, &ParentingConfig::default());
        assert_eq!(w.particle(id).unwrap().parent, Some(tube));
        assert!(w.particle(id).unwrap().contained);
        assert_eq!(events.len(), 1);
        assert_eq!((events[0].from, events[0].to), (None, Some(tube)));
        assert_eq!(events[0].kind, TransferKind::PourIn);
    }

    #[test]
    fn far_away_particles_spill_after_the_grace_window() {
        let (mut w, _, bottle, acid) = bench();
        let id = w.add_particle(Vec3::new(1.0, 1.0, 1.0), acid, Some(bottle));
        let cfg = ParentingConfig::default();
        for _ in 1..cfg.spill_grace_ticks {
            assert!(assign_parents(&mut w, &cfg).is_empty());
            assert_eq!(w.particle(id).unwrap().parent, Some(bottle));
        }
        let events = assign_parents(&mut w, &cfg);
        assert_eq!(w.particle(id).unwrap().parent, None);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, TransferKind::Spill);
        assert_eq!((events[0].from, events[0].to), (Some(bottle), None));
        assert!(assign_parents(&mut w, &cfg).is_empty());
    }

    #[test]
    fn equidistant_catchments_go_to_the_lower_id() {
        let registry = Arc::new(SpeciesRegistry::stock());
        let acid = registry.by_role(Role::SulfuricAcid).unwrap().id;
        let mut w = World::new(WorldConfig::default(), registry, 1);
        let a = w.add_vessel(
            "a",
            scene::tube_profile().unwrap(),
            Pose::at(Vec3::new(-0.01, 0.0, 0.0)),
        );
        w.add_vessel(
            "b",
            scene::tube_profile().unwrap(),
            Pose::at(Vec3::new(0.01, 0.0, 0.0)),
        );
        let y = scene::TUBE_HEIGHT + 0.005;
        let id = w.add_particle(Vec3::new(0.0, y, 0.0), acid, None);
        assign_parents(&mut w, &ParentingConfig::default());
        let p = w.particle(id).unwrap();
        assert_eq!(p.parent, Some(a));
        assert!(!p.contained);
    }

    #[test]
    fn upright_bottle_pours_nothing() {
        let w = scene::build("single_bottle", 3).unwrap();
        let bottle = w.vessel_by_name("bottle").unwrap().id;
        assert!(pour_flux(&w, bottle).unwrap().is_empty());
        assert_eq!(
            pour_flux(&w, VesselId(99)),
            Err(ContainmentError::UnknownVessel(VesselId(99)))
        );
    }

    #[test]
    fn tipped_bottle_pours_its_own_particles() {
        let mut w = scene::build("single_bottle", 3).unwrap();
        let bottle = w.vessel_by_name("bottle").unwrap().id;
        for (line, s) in ["grab bottle", "move bottle 0.08 0.1 0 over 30"]
            .iter()
            .enumerate()
        {
            apply_statement(&mut w, &parse_statement(s).unwrap(), line + 1).unwrap();
        }
        w.advance_by(30).unwrap();
        apply_statement(&mut w, &parse_statement("tilt bottle 120 over 60").unwrap(), 3).unwrap();
        let mut seen = 0;
        for _ in 0..90 {
            w.advance().unwrap();
            let flux = pour_flux(&w, bottle).unwrap();
            for id in &flux {
                assert_eq!(w.particle(*id).unwrap().parent, Some(bottle));
            }
            seen += flux.len();
        }
        assert!(seen > 0);
    }

    #[test]
    fn pouring_half_the_proxies_moves_half_the_amount() {
        let mut w = scene::build("single_bottle", 3).unwrap();
        let bottle = w.vessel_by_name("bottle").unwrap().id;
        let acid = w.registry.by_role(Role::SulfuricAcid).unwrap().id;
        let before = w.vessel(bottle).unwrap().mixture.amount(acid);
        let mut proxies = proxy_counts(&w, bottle);
        assert_eq!(proxies[&acid], 50);
        let idx: Vec<usize> = (0..w.particles.len())
            .filter(|&i| w.particles[i].parent == Some(bottle))
            .take(25)
            .collect();
        for i in idx.iter().copied() {
            detach(&mut w, i, &mut proxies, Route::Poured);
        }
        let carried: f64 = idx
            .iter()
            .flat_map(|&i| w.particles[i].payload.iter())
            .filter(|(s, _)| *s == acid)
            .map(|(_, g)| g)
            .sum();
        let left = w.vessel(bottle).unwrap().mixture.amount(acid);
        assert!((carried - 0.5 * before).abs() <= 1e-9 * before);
        assert!((carried + left - before).abs() <= 1e-9 * before);
    }

    #[test]
    fn event_replay_matches_the_final_parent_map() {
        let (mut w, tube, bottle, acid) = bench();
        let mouth = w.vessel(tube).unwrap().mouth_center();
        w.add_particle(mouth - Vec3::new(0.0, 0.001, 0.0), acid, None);
        w.add_particle(Vec3::new(1.0, 1.0, 1.0), acid, Some(bottle));
        w.add_particle(mouth + Vec3::new(0.0, 0.004, 0.0), acid, Some(bottle));
        let initial: BTreeMap<_, _> = w.particles.iter().map(|p| (p.id, p.parent)).collect();
        let cfg = ParentingConfig::default();
        let mut events = Vec::new();
        for _ in 0..20 {
            events.extend(assign_parents(&mut w, &cfg));
        }
        let fin: BTreeMap<_, _> = w.particles.iter().map(|p| (p.id, p.parent)).collect();
        assert_eq!(replay_parents(&initial, &events), fin);
        assert!(events.iter().all(|e| e.from != e.to));
    }
}
