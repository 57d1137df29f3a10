//! The full per-tick pipeline around [`World::step`].

use super::geometry::VesselKind;
use super::world::{SimError, World};
use crate::chemistry::{compute_ring_band, evaluate_reaction, ReactionOutcome, Role, Verdict};
use crate::containment::{assign_parents, TransferEvent};
use crate::ids::VesselId;
use crate::pipette;

impl World {
    /// Advances one tick: suction, physics, ownership, then chemistry.
    pub fn advance(&mut self) -> Result<Vec<TransferEvent>, SimError> {
        let mut events = pipette::tick_suction(self);
        self.step()?;
        let cfg = self.config.parenting.clone();
        events.extend(assign_parents(self, &cfg));
        pipette::sync_contents(self);
        self.update_reactions();
        Ok(events)
    }

    /// Runs `n` ticks and collects their events.
    pub fn advance_by(&mut self, n: u64) -> Result<Vec<TransferEvent>, SimError> {
        let mut events = Vec::new();
        for _ in 0..n {
            events.extend(self.advance()?);
        }
        Ok(events)
    }

    /// Outcome for the primary test tube, if it has been evaluated.
    pub fn primary_outcome(&self) -> Option<&ReactionOutcome> {
        let tube = self.primary_tube()?;
        self.reactions.get(&tube)?.outcome.as_ref()
    }

    pub fn verdict(&self) -> Verdict {
        self.primary_outcome()
            .map_or(Verdict::NoReaction, |o| o.verdict)
    }

    /// Re-evaluates a tube once its mixture has been left alone for the
    /// configured delay.
    fn update_reactions(&mut self) {
        let tubes: Vec<VesselId> = self
            .vessels
            .iter()
            .filter(|v| v.profile.kind == VesselKind::TestTube)
            .map(|v| v.id)
            .collect();
        for id in tubes {
            let revision = self.vessel(id).map_or(0, |v| v.mixture.revision());
            let tick = self.tick;
            let delay = self.config.reaction_delay_ticks;
            let state = self.reactions.entry(id).or_default();
            if revision != state.seen_revision {
                state.seen_revision = revision;
                state.pending_since = Some(tick);
            }
            match state.pending_since {
                Some(since) if tick - since >= delay => {
                    state.pending_since = None;
                    let outcome = self.evaluate_tube(id);
                    self.retag_ring(&outcome);
                    if let Some(s) = self.reactions.get_mut(&id) {
                        s.outcome = Some(outcome);
                    }
                }
                _ => {}
            }
        }
    }

    /// Applies the reaction rule to one tube and, for a positive result,
    /// selects the ring particles. A positive rule without enough particles
    /// to form a column reports no reaction.
    pub fn evaluate_tube(&self, id: VesselId) -> ReactionOutcome {
        let none = ReactionOutcome {
            verdict: Verdict::NoReaction,
            ring_band: None,
        };
        let Some(v) = self.vessel(id) else {
            return none;
        };
        let verdict = evaluate_reaction(&v.mixture, &self.registry, &self.config.sensitivity);
        if verdict != Verdict::BrownRing {
            return ReactionOutcome {
                verdict,
                ring_band: None,
            };
        }
        let members: Vec<_> = self
            .contained_in(id)
            .map(|p| (p.id, p.position))
            .collect();
        let delta = 2.0 * self.config.sim.particle_radius;
        match compute_ring_band(&members, &v.profile, &v.pose, delta) {
            Some(band) => ReactionOutcome {
                verdict,
                ring_band: Some(band),
            },
            None => none,
        }
    }

    fn retag_ring(&mut self, outcome: &ReactionOutcome) {
        let Some(product) = self.registry.by_role(Role::Product).map(|s| s.id) else {
            return;
        };
        for id in outcome.ring_ids() {
            if let Some(i) = self.particle_index(*id) {
                self.particles[i].species = product;
            }
        }
    }
}
