//! Script interpreter and run report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parser::{Predicate, Script, Statement};
use crate::chemistry::{rule_checks, MixtureError, RingBand, RuleChecks, Verdict};
use crate::containment::{TransferEvent, TransferKind};
use crate::ids::VesselId;
use crate::pipette::{self, MouthState, ReleaseInfo};
use crate::sim::geometry::tilt_orientation;
use crate::sim::{Pose, SimError, Snapshot, Vec3, World};

#[derive(Debug, Error, PartialEq)]
pub enum RunError {
    #[error("line {line}: unknown object '{name}'")]
    UnknownObject { name: String, line: usize },
    #[error("line {line}: unknown species '{name}'")]
    UnknownSpecies { name: String, line: usize },
    #[error("line {line}: '{name}' must be grabbed first")]
    NotHeld { name: String, line: usize },
    #[error("line {line}: the bench has no dropper")]
    NoPipette { line: usize },
    #[error("line {line}: {source}")]
    Mixture { line: usize, source: MixtureError },
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn lookup(world: &World, name: &str, line: usize) -> Result<VesselId, RunError> {
    world
        .vessel_by_name(name)
        .map(|v| v.id)
        .ok_or_else(|| RunError::UnknownObject {
            name: name.to_string(),
            line,
        })
}

fn held(world: &World, name: &str, line: usize) -> Result<VesselId, RunError> {
    let id = lookup(world, name, line)?;
    if world.vessel(id).is_some_and(|v| v.held) {
        Ok(id)
    } else {
        Err(RunError::NotHeld {
            name: name.to_string(),
            line,
        })
    }
}

/// Pose reached by tilting a vessel to `degrees` from its rest orientation
/// about world z, pivoting on its mouth centre.
pub fn tilt_target(world: &World, id: VesselId, degrees: f64) -> Option<(Pose, Vec3)> {
    let v = world.vessel(id)?;
    let pivot_local = Vec3::new(0.0, v.profile.mouth_z(), 0.0);
    let pivot = v.pose.to_world(&pivot_local);
    let orientation = tilt_orientation(degrees) * v.rest;
    Some((
        Pose {
            position: pivot - orientation * pivot_local,
            orientation,
        },
        pivot_local,
    ))
}

/// Grabs a vessel, letting go of whatever was held.
pub fn grab(world: &mut World, id: VesselId) {
    for v in &mut world.vessels {
        v.held = v.id == id;
    }
}

/// Applies one statement without advancing time. Move and tilt only start
/// the motion; the caller decides how long to run. Waits and asserts are
/// no-ops here.
pub fn apply_statement(
    world: &mut World,
    stmt: &Statement,
    line: usize,
) -> Result<Option<ReleaseInfo>, RunError> {
    match stmt {
        Statement::Grab { name } => {
            let id = lookup(world, name, line)?;
            grab(world, id);
        }
        Statement::ReleaseHand => {
            for v in &mut world.vessels {
                v.held = false;
            }
        }
        Statement::Move { name, x, y, z, over } => {
            let id = held(world, name, line)?;
            let orientation = world.vessel(id).map(|v| v.pose.orientation);
            if let Some(orientation) = orientation {
                let to = Pose {
                    position: Vec3::new(*x, *y, *z),
                    orientation,
                };
                world.set_motion(id, to, Vec3::zeros(), *over);
            }
        }
        Statement::Tilt {
            name,
            degrees,
            over,
        } => {
            let id = held(world, name, line)?;
            if let Some((to, pivot)) = tilt_target(world, id, *degrees) {
                world.set_motion(id, to, pivot, *over);
            }
        }
        Statement::PipettePress => {
            if world.pipette.is_none() {
                return Err(RunError::NoPipette { line });
            }
            pipette::press_bulb(world);
        }
        Statement::PipetteRelease { target } => {
            if world.pipette.is_none() {
                return Err(RunError::NoPipette { line });
            }
            let hint = match target {
                Some(name) => Some(lookup(world, name, line)?),
                None => None,
            };
            return Ok(Some(pipette::release(world, hint)));
        }
        Statement::Add {
            vessel,
            species,
            grams,
            method,
        } => {
            let id = lookup(world, vessel, line)?;
            let registry = world.registry.clone();
            let sp = registry
                .by_name(species)
                .ok_or_else(|| RunError::UnknownSpecies {
                    name: species.clone(),
                    line,
                })?;
            let tick = world.tick;
            if let Some(v) = world.vessel_mut(id) {
                v.mixture
                    .record_addition(&registry, sp.id, *grams, *method, tick)
                    .map_err(|source| RunError::Mixture { line, source })?;
            }
        }
        Statement::Wait { .. } | Statement::Assert { .. } => {}
    }
    Ok(None)
}

/// Checks a predicate; returns whether it holds and what was observed.
pub fn check(
    world: &World,
    predicate: &Predicate,
    spills: usize,
    line: usize,
) -> Result<(bool, String), RunError> {
    Ok(match predicate {
        Predicate::Verdict { verdict } => {
            let v = world.verdict();
            (v == *verdict, v.to_string())
        }
        Predicate::Count { vessel, cmp, n } => {
            let id = lookup(world, vessel, line)?;
            let c = world.contained_in(id).count() as u64;
            (cmp.holds(c, *n), c.to_string())
        }
        Predicate::Spills { cmp, n } => (cmp.holds(spills as u64, *n), spills.to_string()),
        Predicate::PipetteContents { cmp, n } => {
            let pp = world.pipette.as_ref().ok_or(RunError::NoPipette { line })?;
            let c = pp.contents.len() as u64;
            (cmp.holds(c, *n), c.to_string())
        }
        Predicate::Mouth { state } => {
            let pp = world.pipette.as_ref().ok_or(RunError::NoPipette { line })?;
            let s = match pp.mouth {
                MouthState::Open => "open",
                MouthState::Closed => "closed",
            };
            (pp.mouth == *state, s.to_string())
        }
        Predicate::RingParticles { cmp, n } => {
            let c = world.primary_outcome().map_or(0, |o| o.ring_ids().len()) as u64;
            (cmp.holds(c, *n), c.to_string())
        }
        Predicate::Penetration { cmp, value } => {
            let p = world.stats.max_wall_penetration;
            (cmp.holds(p, *value), format!("{p:e}"))
        }
        Predicate::Logged {
            vessel,
            species,
            method,
        } => {
            let id = lookup(world, vessel, line)?;
            let sp = world
                .registry
                .by_name(species)
                .ok_or_else(|| RunError::UnknownSpecies {
                    name: species.clone(),
                    line,
                })?;
            let log = world.vessel(id).map(|v| v.mixture.log()).unwrap_or(&[]);
            let methods: Vec<String> = log
                .iter()
                .filter(|a| a.species == sp.id)
                .map(|a| a.method.to_string())
                .collect();
            (
                log.iter().any(|a| a.species == sp.id && a.method == *method),
                format!("[{}]", methods.join(", ")),
            )
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub dt: f64,
    pub seed: u64,
    pub scene: String,
    pub particles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutedStatement {
    pub line: usize,
    pub statement: String,
    pub tick: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub release: Option<ReleaseInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertResult {
    pub line: usize,
    pub predicate: String,
    pub tick: u64,
    pub passed: bool,
    pub observed: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub header: ReportHeader,
    pub executed: Vec<ExecutedStatement>,
    pub events: Vec<TransferEvent>,
    pub asserts: Vec<AssertResult>,
    pub verdict: Verdict,
    pub rule: Option<RuleChecks>,
    pub ring_band: Option<RingBand>,
    pub ring_particles: usize,
    /// Set when an `add` statement changed a ledger directly.
    pub ledger_shortcut_used: bool,
    pub spills: usize,
    pub max_wall_penetration: f64,
    pub max_pair_penetration: f64,
    pub final_tick: u64,
    pub snapshot: Snapshot,
    pub digest: String,
    pub passed: bool,
}

impl Report {
    pub fn failed_asserts(&self) -> impl Iterator<Item = &AssertResult> {
        self.asserts.iter().filter(|a| !a.passed)
    }
}

/// Runs a script to completion. A failed assert is recorded and the run
/// continues.
pub fn run_script(script: &Script, world: &mut World, scene: &str) -> Result<Report, RunError> {
    run_script_observed(script, world, scene, &mut |_| {})
}

/// [`run_script`] calling `observe` after every tick.
pub fn run_script_observed(
    script: &Script,
    world: &mut World,
    scene: &str,
    observe: &mut dyn FnMut(&World),
) -> Result<Report, RunError> {
    let header = ReportHeader {
        dt: world.config.sim.dt,
        seed: world.rng_seed,
        scene: scene.to_string(),
        particles: world.particles.len(),
    };
    let mut executed = Vec::new();
    let mut events: Vec<TransferEvent> = Vec::new();
    let mut asserts = Vec::new();
    let mut spills = 0;
    let mut shortcut = false;

    for (i, stmt) in script.statements.iter().enumerate() {
        let line = script.positions.get(i).map_or(i + 1, |p| p.0);
        let tick = world.tick;
        if let Statement::Assert { predicate } = stmt {
            let (passed, observed) = check(world, predicate, spills, line)?;
            asserts.push(AssertResult {
                line,
                predicate: predicate.to_string(),
                tick,
                passed,
                observed,
            });
        }
        if matches!(stmt, Statement::Add { .. }) {
            shortcut = true;
        }
        let release = apply_statement(world, stmt, line)?;
        executed.push(ExecutedStatement {
            line,
            statement: stmt.to_string(),
            tick,
            release,
        });
        for _ in 0..stmt.duration() {
            let evs = world.advance()?;
            spills += evs
                .iter()
                .filter(|e| e.kind == TransferKind::Spill)
                .count();
            events.extend(evs);
            observe(world);
        }
    }

    let outcome = world.primary_outcome().cloned();
    let rule = world.primary_tube().and_then(|t| {
        world
            .vessel(t)
            .map(|v| rule_checks(&v.mixture, &world.registry, &world.config.sensitivity))
    });
    let snapshot = Snapshot::capture(world);
    let passed = asserts.iter().all(|a: &AssertResult| a.passed);
    Ok(Report {
        header,
        executed,
        events,
        asserts,
        verdict: world.verdict(),
        rule,
        ring_particles: outcome.as_ref().map_or(0, |o| o.ring_ids().len()),
        ring_band: outcome.and_then(|o| o.ring_band),
        ledger_shortcut_used: shortcut,
        spills,
        max_wall_penetration: world.stats.max_wall_penetration,
        max_pair_penetration: world.stats.max_pair_penetration,
        final_tick: world.tick,
        digest: snapshot.digest.clone(),
        snapshot,
        passed,
    })
}
