//! Headless virtual wet-lab for the brown-ring nitrate test.
//!
//! Liquids are modelled as small spheres that live inside analytic,
//! axisymmetric vessels. Each particle is owned ("parented") by a vessel so
//! that moving the vessel carries its contents. Pouring, dropper suction and
//! spills change that ownership, and a per-vessel mixture ledger feeds an
//! order- and threshold-sensitive reaction rule that paints the brown ring.
//!
//! The crate is organised as:
//!
//! * [`sim`]: geometry, the fixed-timestep world and its digest
//! * [`containment`]: per-tick parent assignment and pour detection
//! * [`pipette`]: the dropper gate / suction state machine
//! * [`chemistry`]: formulas, balance checks, mixtures, reaction and ring band
//! * [`scene`]: the stock bench layouts
//! * [`dsl`]: the line-oriented lab script language and its interpreter
//! * [`session`]: the websocket session service, wire messages and command logs

pub mod chemistry;
pub mod containment;
pub mod dsl;
pub mod ids;
pub mod pipette;
pub mod procedure;
pub mod scene;
pub mod session;
pub mod sim;

pub use ids::{ParticleId, SpeciesId, VesselId};
pub use sim::{Pose, Vec3, World};
