//! Stock bench layouts.
//!
//! The `brown_ring` bench has a test tube in a rack, three reagent bottles
//! lined up to its right and a dropper hanging tip-down to its left. Bottles
//! are filled with a jittered packing drawn from the world seed and allowed
//! to settle before tick zero, so every run with the same seed starts from
//! the same resting state.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemistry::{AdditionMethod, Role, SpeciesRegistry};
use crate::ids::{SpeciesId, VesselId};
use crate::pipette::Pipette;
use crate::sim::geometry::{GeometryError, Quat, VesselKind, VesselProfile};
use crate::sim::{Pose, SimError, Vec3, World, WorldConfig};

pub const SCENES: [&str; 2] = ["brown_ring", "single_bottle"];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown scene '{0}' (known: brown_ring, single_bottle)")]
    Unknown(String),
    #[error("registry has no species with role {0}")]
    MissingRole(Role),
    #[error("vessel '{0}' cannot hold {1} particles")]
    Overfull(String, usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub feso4_particles: usize,
    pub nitrate_particles: usize,
    pub acid_particles: usize,
    /// Ticks of settling before the clock is reset to zero.
    pub settle_ticks: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            feso4_particles: 60,
            nitrate_particles: 60,
            acid_particles: 80,
            settle_ticks: 240,
        }
    }
}

pub const TUBE_RADIUS: f64 = 0.012;
pub const TUBE_HEIGHT: f64 = 0.15;
/// Height of the tube's floor above the table (it stands in a rack).
pub const TUBE_FLOOR: f64 = 0.02;

pub fn tube_profile() -> Result<VesselProfile, GeometryError> {
    VesselProfile::cylinder(VesselKind::TestTube, TUBE_RADIUS, TUBE_HEIGHT)
}

/// Round bottle with a short shoulder and neck.
pub fn bottle_profile() -> Result<VesselProfile, GeometryError> {
    VesselProfile::new(
        VesselKind::Bottle,
        vec![(0.0, 0.015), (0.045, 0.015), (0.055, 0.011), (0.07, 0.011)],
        0.002,
    )
}

/// Glass dropper body; the narrow end is the mouth.
pub fn dropper_profile() -> Result<VesselProfile, GeometryError> {
    VesselProfile::new(
        VesselKind::PipetteBody,
        vec![(0.0, 0.005), (0.06, 0.005), (0.075, 0.0035)],
        0.001,
    )
}

/// Orientation that turns a vessel upside down, mouth pointing at the table.
pub fn upside_down() -> Quat {
    Quat::from_axis_angle(&Vec3::z_axis(), PI)
}

fn species(registry: &SpeciesRegistry, role: Role) -> Result<SpeciesId, SceneError> {
    registry
        .by_role(role)
        .map(|s| s.id)
        .ok_or(SceneError::MissingRole(role))
}

/// Drops `count` particles of `species` into a vessel on a jittered
/// hexagonal layering, bottom up.
pub fn fill_vessel(
    world: &mut World,
    vessel: VesselId,
    species: SpeciesId,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(), SceneError> {
    let v = world
        .vessel(vessel)
        .cloned()
        .expect("fill target exists");
    let r = world.config.sim.particle_radius;
    let spacing = 2.0 * r * 1.05;
    let mut placed = 0;
    let mut h = v.profile.floor_z() + r * 1.05;
    while placed < count {
        if h > v.profile.mouth_z() - r {
            return Err(SceneError::Overfull(v.name.clone(), count));
        }
        let limit = v.profile.radius_at(h).min(v.profile.radius_at(h + r)) - r * 1.1;
        let mut layer = vec![(0.0, 0.0)];
        let mut ring = 1;
        while f64::from(ring) * spacing <= limit {
            let rho = f64::from(ring) * spacing;
            let n = (2.0 * PI * rho / spacing).floor() as u32;
            let phase = rng.random_range(0.0..2.0 * PI);
            for k in 0..n {
                let a = phase + 2.0 * PI * f64::from(k) / f64::from(n);
                layer.push((rho * a.cos(), rho * a.sin()));
            }
            ring += 1;
        }
        for (x, z) in layer {
            if placed == count {
                break;
            }
            let jitter = 0.05 * r;
            let local = Vec3::new(
                x + rng.random_range(-jitter..jitter),
                h,
                z + rng.random_range(-jitter..jitter),
            );
            let pos = v.pose.to_world(&local);
            world.add_particle(pos, species, Some(vessel));
            placed += 1;
        }
        h += spacing;
    }
    Ok(())
}

fn record(
    world: &mut World,
    vessel: VesselId,
    species: SpeciesId,
    grams: f64,
) -> Result<(), SceneError> {
    let registry = world.registry.clone();
    if let Some(v) = world.vessel_mut(vessel) {
        v.mixture
            .record_addition(&registry, species, grams, AdditionMethod::Poured, 0)
            .expect("stock amounts are valid");
    }
    Ok(())
}

/// Runs the settle phase and resets the clock.
fn settle(world: &mut World, ticks: u64) -> Result<(), SceneError> {
    world.advance_by(ticks)?;
    world.tick = 0;
    world.reactions.clear();
    world.reset_stats();
    for p in &mut world.particles {
        p.velocity = Vec3::zeros();
    }
    Ok(())
}

/// The full brown-ring bench.
pub fn brown_ring(
    config: WorldConfig,
    registry: Arc<SpeciesRegistry>,
    seed: u64,
    scene: &SceneConfig,
) -> Result<World, SceneError> {
    let water = species(&registry, Role::Water)?;
    let feso4 = species(&registry, Role::IronSulfate)?;
    let nitrate = species(&registry, Role::Nitrate)?;
    let acid = species(&registry, Role::SulfuricAcid)?;

    let mut world = World::new(config, registry, seed);
    world.add_vessel(
        "tube",
        tube_profile()?,
        Pose::at(Vec3::new(0.0, TUBE_FLOOR, 0.0)),
    );
    let b1 = world.add_vessel(
        "bottle_feso4",
        bottle_profile()?,
        Pose::at(Vec3::new(0.08, 0.002, 0.0)),
    );
    let b2 = world.add_vessel(
        "bottle_nitrate",
        bottle_profile()?,
        Pose::at(Vec3::new(0.16, 0.002, 0.0)),
    );
    let b3 = world.add_vessel(
        "bottle_acid",
        bottle_profile()?,
        Pose::at(Vec3::new(0.24, 0.002, 0.0)),
    );
    let dropper = dropper_profile()?;
    let mouth_z = dropper.mouth_z();
    let d = world.add_vessel(
        "dropper",
        dropper,
        Pose {
            position: Vec3::new(-0.08, 0.2, 0.0),
            orientation: upside_down(),
        },
    );
    let r = world.config.sim.particle_radius;
    world.pipette = Some(Pipette::new(d, mouth_z, r, &world.config.pipette));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill_vessel(&mut world, b1, feso4, scene.feso4_particles, &mut rng)?;
    fill_vessel(&mut world, b2, nitrate, scene.nitrate_particles, &mut rng)?;
    fill_vessel(&mut world, b3, acid, scene.acid_particles, &mut rng)?;

    record(&mut world, b1, feso4, 5.0)?;
    record(&mut world, b1, water, 95.0)?;
    record(&mut world, b2, nitrate, 1.0)?;
    record(&mut world, b2, water, 99.0)?;
    record(&mut world, b3, acid, 100.0)?;

    settle(&mut world, scene.settle_ticks)?;
    Ok(world)
}

/// One bottle of acid and the dropper above it; used to exercise suction.
pub fn single_bottle(
    config: WorldConfig,
    registry: Arc<SpeciesRegistry>,
    seed: u64,
    particles: usize,
) -> Result<World, SceneError> {
    let acid = species(&registry, Role::SulfuricAcid)?;
    let mut world = World::new(config, registry, seed);
    world.add_vessel(
        "tube",
        tube_profile()?,
        Pose::at(Vec3::new(0.0, TUBE_FLOOR, 0.0)),
    );
    let b = world.add_vessel(
        "bottle",
        bottle_profile()?,
        Pose::at(Vec3::new(0.08, 0.002, 0.0)),
    );
    let dropper = dropper_profile()?;
    let mouth_z = dropper.mouth_z();
    let d = world.add_vessel(
        "dropper",
        dropper,
        Pose {
            position: Vec3::new(-0.08, 0.2, 0.0),
            orientation: upside_down(),
        },
    );
    let r = world.config.sim.particle_radius;
    world.pipette = Some(Pipette::new(d, mouth_z, r, &world.config.pipette));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill_vessel(&mut world, b, acid, particles, &mut rng)?;
    record(&mut world, b, acid, 100.0)?;
    settle(&mut world, 240)?;
    Ok(world)
}

/// Builds a named scene with default configuration.
pub fn build(name: &str, seed: u64) -> Result<World, SceneError> {
    let registry = Arc::new(SpeciesRegistry::stock());
    let config = WorldConfig::default();
    match name {
        "brown_ring" => brown_ring(config, registry, seed, &SceneConfig::default()),
        "single_bottle" => single_bottle(config, registry, seed, 50),
        other => Err(SceneError::Unknown(other.to_string())),
    }
}
