use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{Pose, Quat, Vec3, VesselProfile};
use super::grid::SpatialHash;
use crate::chemistry::{Mixture, ReactionOutcome, SensitivityConfig, SpeciesRegistry};
use crate::containment::ParentingConfig;
use crate::ids::{ParticleId, SpeciesId, VesselId};
use crate::pipette::{Pipette, PipetteConfig};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("timestep must be positive and finite, got {0}")]
    BadTimestep(f64),
    #[error("non-finite state in particle {particle} at tick {tick}")]
    NonFinite { particle: ParticleId, tick: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub gravity: Vec3,
    /// Normal restitution against vessel walls and the table.
    pub restitution: f64,
    /// Fraction of tangential velocity kept per tick of wall contact.
    pub tangential_damping: f64,
    pub substeps: u32,
    /// Constraint passes per substep (walls, then pairs).
    pub iterations: u32,
    pub table_height: f64,
    pub particle_radius: f64,
    /// Speed a constraint correction may add on top of the incoming speed
    /// in one substep. Keeps jammed stacks from launching particles.
    pub max_correction_speed: f64,
    /// Particles in contact slower than this come to rest.
    pub rest_speed: f64,
    /// Pair overlap, in radii, that triggers extra constraint passes.
    pub overlap_tolerance: f64,
    pub max_extra_iterations: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1.0 / 120.0,
            gravity: Vec3::new(0.0, -9.81, 0.0),
            restitution: 0.1,
            tangential_damping: 0.9,
            substeps: 4,
            iterations: 8,
            table_height: 0.0,
            particle_radius: 0.0025,
            max_correction_speed: 0.1,
            rest_speed: 0.005,
            overlap_tolerance: 0.03,
            max_extra_iterations: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub sim: SimConfig,
    pub parenting: ParentingConfig,
    pub sensitivity: SensitivityConfig,
    pub pipette: PipetteConfig,
    /// Ticks between the last change to a tube's mixture and the reaction.
    pub reaction_delay_ticks: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            sim: SimConfig::default(),
            parenting: ParentingConfig::default(),
            sensitivity: SensitivityConfig::default(),
            pipette: PipetteConfig::default(),
            reaction_delay_ticks: 60,
        }
    }
}

/// How a particle left the vessel it last belonged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Poured,
    Dropper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub id: ParticleId,
    pub position: Vec3,
    pub velocity: Vec3,
    pub radius: f64,
    pub species: SpeciesId,
    pub parent: Option<VesselId>,
    /// Inside the parent's cavity and moving with it.
    pub contained: bool,
    /// Grams carried while between vessels.
    pub payload: Vec<(SpeciesId, f64)>,
    pub route: Option<Route>,
    /// Consecutive ticks spent outside every catchment.
    pub outside_ticks: u32,
    #[serde(skip)]
    pub(crate) accel: Vec3,
}

/// Commanded kinematics for a held vessel: blend from one pose to another
/// around a pivot fixed in the vessel frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub from: Pose,
    pub to: Pose,
    pub pivot_local: Vec3,
    pub start_tick: u64,
    pub ticks: u32,
}

impl Motion {
    pub fn pose_at(&self, tick: u64) -> Pose {
        let elapsed = tick.saturating_sub(self.start_tick) as f64;
        let s = (elapsed / f64::from(self.ticks.max(1))).clamp(0.0, 1.0);
        let orientation = self
            .from
            .orientation
            .try_slerp(&self.to.orientation, s, 1e-12)
            .unwrap_or(if s < 0.5 {
                self.from.orientation
            } else {
                self.to.orientation
            });
        let a = self.from.to_world(&self.pivot_local);
        let b = self.to.to_world(&self.pivot_local);
        let pivot = a + (b - a) * s;
        Pose {
            position: pivot - orientation * self.pivot_local,
            orientation,
        }
    }

    pub fn end_tick(&self) -> u64 {
        self.start_tick + u64::from(self.ticks)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    pub id: VesselId,
    pub name: String,
    pub profile: VesselProfile,
    pub pose: Pose,
    /// Orientation at creation; tilt angles are measured from it.
    pub rest: Quat,
    pub held: bool,
    pub mixture: Mixture,
    pub motion: Option<Motion>,
}

impl Vessel {
    pub fn mouth_center(&self) -> Vec3 {
        self.pose
            .to_world(&Vec3::new(0.0, self.profile.mouth_z(), 0.0))
    }

    pub fn contains(&self, world_point: &Vec3) -> bool {
        self.profile.contains_local(&self.pose.to_local(world_point))
    }
}

/// Tracking state for the reaction in one test tube.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReactionState {
    pub seen_revision: u64,
    pub pending_since: Option<u64>,
    pub outcome: Option<ReactionOutcome>,
}

/// Running maxima for invariant checks; not part of the digest.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldStats {
    /// Largest sphere/wall overlap of a contained particle, in radii.
    pub max_wall_penetration: f64,
    /// Largest overlap between interacting particle pairs, in radii.
    pub max_pair_penetration: f64,
    /// Particle and tick of the worst wall penetration.
    pub worst_wall: Option<(ParticleId, u64)>,
    /// Pair and tick of the worst pair overlap.
    pub worst_pair: Option<(ParticleId, ParticleId, u64)>,
}

#[derive(Clone, Debug)]
pub struct World {
    pub tick: u64,
    pub config: WorldConfig,
    pub particles: Vec<Particle>,
    pub vessels: Vec<Vessel>,
    pub pipette: Option<Pipette>,
    pub rng_seed: u64,
    pub registry: Arc<SpeciesRegistry>,
    pub reactions: BTreeMap<VesselId, ReactionState>,
    pub stats: WorldStats,
}

impl World {
    pub fn new(config: WorldConfig, registry: Arc<SpeciesRegistry>, rng_seed: u64) -> Self {
        World {
            tick: 0,
            config,
            particles: Vec::new(),
            vessels: Vec::new(),
            pipette: None,
            rng_seed,
            registry,
            reactions: BTreeMap::new(),
            stats: WorldStats::default(),
        }
    }

    pub fn add_vessel(&mut self, name: &str, profile: VesselProfile, pose: Pose) -> VesselId {
        let id = VesselId(self.vessels.last().map_or(0, |v| v.id.0 + 1));
        self.vessels.push(Vessel {
            id,
            name: name.to_string(),
            profile,
            pose,
            rest: pose.orientation,
            held: false,
            mixture: Mixture::default(),
            motion: None,
        });
        id
    }

    /// Adds a particle; it is marked contained when it sits inside `parent`.
    pub fn add_particle(
        &mut self,
        position: Vec3,
        species: SpeciesId,
        parent: Option<VesselId>,
    ) -> ParticleId {
        let id = ParticleId(self.particles.last().map_or(0, |p| p.id.0 + 1));
        let contained = parent
            .and_then(|v| self.vessel(v))
            .is_some_and(|v| v.contains(&position));
        self.particles.push(Particle {
            id,
            position,
            velocity: Vec3::zeros(),
            radius: self.config.sim.particle_radius,
            species,
            parent,
            contained,
            payload: Vec::new(),
            route: None,
            outside_ticks: 0,
            accel: Vec3::zeros(),
        });
        id
    }

    pub fn vessel(&self, id: VesselId) -> Option<&Vessel> {
        self.vessels
            .binary_search_by_key(&id, |v| v.id)
            .ok()
            .map(|i| &self.vessels[i])
    }

    pub fn vessel_mut(&mut self, id: VesselId) -> Option<&mut Vessel> {
        self.vessels
            .binary_search_by_key(&id, |v| v.id)
            .ok()
            .map(|i| &mut self.vessels[i])
    }

    pub fn vessel_by_name(&self, name: &str) -> Option<&Vessel> {
        self.vessels.iter().find(|v| v.name == name)
    }

    pub fn particle(&self, id: ParticleId) -> Option<&Particle> {
        self.particle_index(id).map(|i| &self.particles[i])
    }

    pub(crate) fn particle_index(&self, id: ParticleId) -> Option<usize> {
        self.particles.binary_search_by_key(&id, |p| p.id).ok()
    }

    pub fn particles_in(&self, vessel: VesselId) -> impl Iterator<Item = &Particle> {
        self.particles
            .iter()
            .filter(move |p| p.parent == Some(vessel))
    }

    pub fn contained_in(&self, vessel: VesselId) -> impl Iterator<Item = &Particle> {
        self.particles
            .iter()
            .filter(move |p| p.contained && p.parent == Some(vessel))
    }

    pub fn pipette_vessel(&self) -> Option<VesselId> {
        self.pipette.as_ref().map(|p| p.vessel)
    }

    /// First test tube by id; the tube whose verdict a run reports.
    pub fn primary_tube(&self) -> Option<VesselId> {
        self.vessels
            .iter()
            .find(|v| v.profile.kind == crate::sim::geometry::VesselKind::TestTube)
            .map(|v| v.id)
    }

    /// Schedules kinematic motion of a vessel towards `to` over `ticks`.
    pub fn set_motion(&mut self, vessel: VesselId, to: Pose, pivot_local: Vec3, ticks: u32) {
        let tick = self.tick;
        if let Some(v) = self.vessel_mut(vessel) {
            v.motion = Some(Motion {
                from: v.pose,
                to,
                pivot_local,
                start_tick: tick,
                ticks: ticks.max(1),
            });
        }
    }

    /// One fixed timestep of the physical world: commanded vessel motion,
    /// gravity, wall contacts and particle pairs.
    pub fn step(&mut self) -> Result<(), SimError> {
        let cfg = self.config.sim.clone();
        if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
            return Err(SimError::BadTimestep(cfg.dt));
        }
        self.apply_motions();

        let substeps = cfg.substeps.max(1);
        let h = cfg.dt / f64::from(substeps);
        let keep_tangent = cfg.tangential_damping.powf(1.0 / f64::from(substeps));
        let max_r = self
            .particles
            .iter()
            .map(|p| p.radius)
            .fold(cfg.particle_radius, f64::max);
        let reach = 2.0 * max_r * 1.25;

        for _ in 0..substeps {
            let start: Vec<Vec3> = self.particles.iter().map(|p| p.position).collect();
            for p in &mut self.particles {
                p.velocity += (cfg.gravity + p.accel) * h;
                p.position += p.velocity * h;
            }
            let predicted: Vec<Vec3> = self.particles.iter().map(|p| p.velocity).collect();

            let pairs = self.candidate_pairs(reach);
            let mut normals: Vec<Option<Vec3>> = vec![None; self.particles.len()];
            let mut touching = vec![false; self.particles.len()];
            for _ in 0..cfg.iterations.max(1) {
                self.solve_walls(&mut normals);
                self.solve_pairs(&pairs, &mut touching);
            }
            // deep overlaps left by fast arrivals get extra passes
            let mut extra = 0;
            while extra < cfg.max_extra_iterations && self.worst_overlap(&pairs) > cfg.overlap_tolerance {
                self.solve_walls(&mut normals);
                self.solve_pairs(&pairs, &mut touching);
                extra += 1;
            }
            // corners need more than one pass to clear both faces
            for _ in 0..3 {
                self.solve_walls(&mut normals);
            }

            for (i, p) in self.particles.iter_mut().enumerate() {
                let mut v = (p.position - start[i]) / h;
                if let Some(n) = normals[i] {
                    let vn = v.dot(&n);
                    let tangent = (v - n * vn) * keep_tangent;
                    let incoming = predicted[i].dot(&n);
                    // bounce only real impacts; resting contact stays put
                    let bounce_floor = cfg.gravity.norm() * h * 2.0;
                    let vn = if incoming < -bounce_floor {
                        vn.max(-cfg.restitution * incoming)
                    } else {
                        vn.max(0.0)
                    };
                    v = tangent + n * vn;
                }
                let cap = predicted[i].norm() + cfg.max_correction_speed;
                let speed = v.norm();
                if speed > cap {
                    v *= cap / speed;
                }
                if (touching[i] || normals[i].is_some()) && speed < cfg.rest_speed {
                    v = Vec3::zeros();
                }
                p.velocity = v;
            }
        }
        for p in &mut self.particles {
            p.accel = Vec3::zeros();
        }

        if let Some(bad) = self
            .particles
            .iter()
            .find(|p| !(p.position.iter().all(|x| x.is_finite()) && p.velocity.iter().all(|x| x.is_finite())))
        {
            return Err(SimError::NonFinite {
                particle: bad.id,
                tick: self.tick,
            });
        }
        self.tick += 1;
        self.record_stats(reach);
        Ok(())
    }

    fn apply_motions(&mut self) {
        let next_tick = self.tick + 1;
        for vi in 0..self.vessels.len() {
            let Some(motion) = self.vessels[vi].motion.clone() else {
                continue;
            };
            let old = self.vessels[vi].pose;
            let new = motion.pose_at(next_tick);
            let id = self.vessels[vi].id;
            for p in self.particles.iter_mut() {
                if p.contained && p.parent == Some(id) {
                    p.position = old.carry(&new, &p.position);
                }
            }
            let v = &mut self.vessels[vi];
            v.pose = new;
            if next_tick >= motion.end_tick() {
                v.pose = motion.to;
                v.motion = None;
            }
        }
    }

    fn candidate_pairs(&self, reach: f64) -> Vec<(usize, usize)> {
        let points: Vec<Vec3> = self.particles.iter().map(|p| p.position).collect();
        let grid = SpatialHash::build(reach, points.iter().copied());
        let mut pairs: Vec<(usize, usize)> = grid
            .pairs_within(&points, reach)
            .into_iter()
            .filter(|&(i, j)| self.interacts(i, j))
            .collect();
        // bottom-up so one pass settles a resting stack
        pairs.sort_by(|&(a, b), &(c, d)| {
            let ha = points[a].y.min(points[b].y);
            let hc = points[c].y.min(points[d].y);
            ha.total_cmp(&hc).then((a, b).cmp(&(c, d)))
        });
        pairs
    }

    /// Particles held in different vessels never touch; free particles touch
    /// everything.
    fn interacts(&self, i: usize, j: usize) -> bool {
        let group = |p: &Particle| p.contained.then_some(p.parent).flatten();
        match (group(&self.particles[i]), group(&self.particles[j])) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }

    fn solve_walls(&mut self, normals: &mut [Option<Vec3>]) {
        let table = self.config.sim.table_height;
        let pipette = self.pipette.as_ref();
        for (i, p) in self.particles.iter_mut().enumerate() {
            let vessel = if p.contained {
                p.parent.and_then(|id| {
                    self.vessels
                        .binary_search_by_key(&id, |v| v.id)
                        .ok()
                        .map(|k| &self.vessels[k])
                })
            } else {
                None
            };
            match vessel {
                Some(v) => {
                    let mut local = v.pose.to_local(&p.position);
                    let mouth = v.profile.mouth_z();
                    let gated = pipette.is_some_and(|pp| pp.vessel == v.id && pp.gate_blocks(p.id));
                    if gated && local.y > mouth - p.radius {
                        local.y = mouth - p.radius;
                        normals[i] = Some(v.pose.orientation * -Vec3::y());
                    }
                    if local.y < mouth {
                        let c = v.profile.contact_local(&local);
                        if c.distance < p.radius {
                            local += c.normal * (p.radius - c.distance);
                            normals[i] = Some(v.pose.orientation * c.normal);
                        }
                    }
                    p.position = v.pose.to_world(&local);
                }
                None => {
                    if p.position.y - p.radius < table {
                        p.position.y = table + p.radius;
                        normals[i] = Some(Vec3::y());
                    }
                }
            }
        }
    }

    fn worst_overlap(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (&self.particles[i], &self.particles[j]);
                (a.radius + b.radius - (a.position - b.position).norm()) / a.radius.min(b.radius)
            })
            .fold(0.0, f64::max)
    }

    fn solve_pairs(&mut self, pairs: &[(usize, usize)], touching: &mut [bool]) {
        for &(i, j) in pairs {
            let (ri, rj) = (self.particles[i].radius, self.particles[j].radius);
            let d = self.particles[j].position - self.particles[i].position;
            let dist = d.norm();
            let overlap = ri + rj - dist;
            if overlap <= 0.0 {
                continue;
            }
            touching[i] = true;
            touching[j] = true;
            let n = if dist > 1e-12 { d / dist } else { Vec3::y() };
            // a clearly vertical contact moves only the upper sphere
            let (wi, wj) = if n.y > 0.5 {
                (0.0, 1.0)
            } else if n.y < -0.5 {
                (1.0, 0.0)
            } else {
                (0.5, 0.5)
            };
            self.particles[i].position -= n * (overlap * wi);
            self.particles[j].position += n * (overlap * wj);
        }
    }

    fn record_stats(&mut self, reach: f64) {
        let mut wall: f64 = 0.0;
        let mut worst = None;
        for p in self.particles.iter().filter(|p| p.contained) {
            let Some(v) = p.parent.and_then(|id| self.vessel(id)) else {
                continue;
            };
            let local = v.pose.to_local(&p.position);
            if local.y < v.profile.mouth_z() {
                let pen = (p.radius - v.profile.sdf_local(&local)) / p.radius;
                if pen > wall {
                    wall = pen;
                    worst = Some(p.id);
                }
            }
        }
        let mut pair: f64 = 0.0;
        let mut worst_pair = None;
        for (i, j) in self.candidate_pairs(reach) {
            let (a, b) = (&self.particles[i], &self.particles[j]);
            let pen = (a.radius + b.radius - (a.position - b.position).norm())
                / a.radius.min(b.radius);
            if pen > pair {
                pair = pen;
                worst_pair = Some((a.id, b.id));
            }
        }
        if wall > self.stats.max_wall_penetration {
            self.stats.max_wall_penetration = wall;
            self.stats.worst_wall = worst.map(|id| (id, self.tick));
        }
        if pair > self.stats.max_pair_penetration {
            self.stats.max_pair_penetration = pair;
            self.stats.worst_pair = worst_pair.map(|(a, b)| (a, b, self.tick));
        }
    }

    pub fn reset_stats(&mut self) {
        self.stats = WorldStats::default();
    }

    pub fn kinetic_energy(&self) -> f64 {
        // unit mass per particle
        self.particles
            .iter()
            .map(|p| 0.5 * p.velocity.norm_squared())
            .sum()
    }
}
