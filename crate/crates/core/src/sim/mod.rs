//! Physical simulation: geometry, the world state and its fixed-timestep
//! update, plus canonical snapshots and digests.

pub mod digest;
pub mod geometry;
pub mod grid;
pub mod pipeline;
pub mod world;

pub use digest::{world_digest, Snapshot};
pub use geometry::{
    sdf_vessel, tilt_angle, tilt_orientation, GeometryError, Pose, Quat, Vec3, VesselKind,
    VesselProfile,
};
pub use world::{Particle, SimConfig, SimError, Vessel, World, WorldConfig, WorldStats};
