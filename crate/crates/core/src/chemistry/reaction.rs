use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mixture::{AdditionMethod, Mixture};
use super::registry::{Role, SpeciesRegistry};
use crate::ids::ParticleId;

/// Detection limits of the test: an absolute mass and a mass fraction of
/// the solution. Both must be met.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub min_mass_g: f64,
    pub min_mass_fraction: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            min_mass_g: 2.5e-6,
            min_mass_fraction: 1.0 / 25_000.0,
        }
    }
}

/// Relative slack on threshold comparisons so that values sitting exactly
/// on a boundary, up to rounding, count as meeting it.
const BOUNDARY_RTOL: f64 = 1e-12;

fn at_least(value: f64, threshold: f64) -> bool {
    value >= threshold * (1.0 - BOUNDARY_RTOL)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BrownRing,
    NoReaction,
    Interference,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::BrownRing => "brown_ring",
            Verdict::NoReaction => "no_reaction",
            Verdict::Interference => "interference",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "brown_ring" => Ok(Verdict::BrownRing),
            "no_reaction" => Ok(Verdict::NoReaction),
            "interference" => Ok(Verdict::Interference),
            _ => Err(()),
        }
    }
}

/// Band of the occupied column that turns brown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingBand {
    /// Normalised band edges within the occupied column, `[lo, hi)`.
    pub lo: f64,
    pub hi: f64,
    /// Same edges as heights along the tube axis, tube frame.
    pub z_lo: f64,
    pub z_hi: f64,
    pub ring_ids: Vec<ParticleId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionOutcome {
    pub verdict: Verdict,
    pub ring_band: Option<RingBand>,
}

impl ReactionOutcome {
    pub fn ring_ids(&self) -> &[ParticleId] {
        self.ring_band
            .as_ref()
            .map(|b| b.ring_ids.as_slice())
            .unwrap_or(&[])
    }
}

/// Individual predicates of the rule, kept for reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleChecks {
    pub order: bool,
    pub acid_down_the_side: bool,
    pub nitrate_mass: bool,
    pub nitrate_fraction: bool,
    pub nitrite_present: bool,
}

pub fn rule_checks(
    mixture: &Mixture,
    registry: &SpeciesRegistry,
    cfg: &SensitivityConfig,
) -> RuleChecks {
    let role = |s| registry.role_of(s);
    let first = |r: Role| mixture.log().iter().position(|a| role(a.species) == Some(r));

    let order = match (
        first(Role::IronSulfate),
        first(Role::Nitrate),
        first(Role::SulfuricAcid),
    ) {
        (Some(fe), Some(no3), Some(acid)) => fe < no3 && no3 < acid,
        _ => false,
    };
    let acid_down_the_side = first(Role::SulfuricAcid)
        .is_some_and(|i| mixture.log()[i].method == AdditionMethod::DropperSide);

    let mass_of = |r: Role| -> f64 {
        mixture
            .amounts()
            .iter()
            .filter(|(&s, _)| role(s) == Some(r))
            .map(|(_, &g)| g)
            .sum()
    };
    let nitrate = mass_of(Role::Nitrate);
    let solvent = mixture.total_solvent();
    RuleChecks {
        order,
        acid_down_the_side,
        nitrate_mass: nitrate > 0.0 && at_least(nitrate, cfg.min_mass_g),
        nitrate_fraction: solvent > 0.0 && at_least(nitrate / solvent, cfg.min_mass_fraction),
        nitrite_present: mass_of(Role::Nitrite) > 0.0,
    }
}

/// Brown ring iff iron sulfate, then nitrate, then acid were added in that
/// order, the acid went down the side from the dropper, nitrate clears both
/// sensitivity limits and no nitrite is present. Nitrite with everything
/// else satisfied gives [`Verdict::Interference`].
pub fn evaluate_reaction(
    mixture: &Mixture,
    registry: &SpeciesRegistry,
    cfg: &SensitivityConfig,
) -> Verdict {
    let c = rule_checks(mixture, registry, cfg);
    if !(c.order && c.acid_down_the_side && c.nitrate_mass && c.nitrate_fraction) {
        Verdict::NoReaction
    } else if c.nitrite_present {
        Verdict::Interference
    } else {
        Verdict::BrownRing
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::SpeciesId;

    fn id(reg: &SpeciesRegistry, r: Role) -> SpeciesId {
        reg.by_role(r).unwrap().id
    }

    fn canonical(reg: &SpeciesRegistry, nitrate_g: f64, water_g: f64) -> Mixture {
        let mut m = Mixture::default();
        m.record_addition(reg, id(reg, Role::IronSulfate), 1.0, AdditionMethod::Poured, 0)
            .unwrap();
        m.record_addition(reg, id(reg, Role::Water), water_g, AdditionMethod::Poured, 0)
            .unwrap();
        m.record_addition(reg, id(reg, Role::Nitrate), nitrate_g, AdditionMethod::Poured, 1)
            .unwrap();
        m.record_addition(reg, id(reg, Role::SulfuricAcid), 2.0, AdditionMethod::DropperSide, 2)
            .unwrap();
        m
    }

    #[test]
    fn canonical_order_gives_ring() {
        let reg = SpeciesRegistry::stock();
        // 1 g nitrate in 100 g of solution
        let m = canonical(&reg, 1.0, 98.0);
        assert_eq!(m.total_solvent(), 100.0);
        assert_eq!(
            evaluate_reaction(&m, &reg, &SensitivityConfig::default()),
            Verdict::BrownRing
        );
    }

    #[test]
    fn acid_first_gives_nothing() {
        let reg = SpeciesRegistry::stock();
        let mut m = Mixture::default();
        m.record_addition(&reg, id(&reg, Role::SulfuricAcid), 2.0, AdditionMethod::DropperSide, 0)
            .unwrap();
        m.record_addition(&reg, id(&reg, Role::IronSulfate), 1.0, AdditionMethod::Poured, 1)
            .unwrap();
        m.record_addition(&reg, id(&reg, Role::Nitrate), 1.0, AdditionMethod::Poured, 2)
            .unwrap();
        assert_eq!(
            evaluate_reaction(&m, &reg, &SensitivityConfig::default()),
            Verdict::NoReaction
        );
    }

    #[test]
    fn too_dilute_gives_nothing() {
        let reg = SpeciesRegistry::stock();
        // 2 g nitrate in 100000 g: fraction 1/50000
        let m = canonical(&reg, 2.0, 100_000.0 - 3.0);
        assert_eq!(m.total_solvent(), 100_000.0);
        let c = rule_checks(&m, &reg, &SensitivityConfig::default());
        assert!(c.nitrate_mass && !c.nitrate_fraction);
        assert_eq!(
            evaluate_reaction(&m, &reg, &SensitivityConfig::default()),
            Verdict::NoReaction
        );
    }

    #[test]
    fn nitrite_interferes() {
        let reg = SpeciesRegistry::stock();
        let mut m = canonical(&reg, 1.0, 98.0);
        m.record_addition(&reg, id(&reg, Role::Nitrite), 1e-3, AdditionMethod::Poured, 3)
            .unwrap();
        assert_eq!(
            evaluate_reaction(&m, &reg, &SensitivityConfig::default()),
            Verdict::Interference
        );
    }

    #[test]
    fn acid_poured_from_top_fails_side_rule() {
        let reg = SpeciesRegistry::stock();
        let mut m = Mixture::default();
        m.record_addition(&reg, id(&reg, Role::IronSulfate), 1.0, AdditionMethod::Poured, 0)
            .unwrap();
        m.record_addition(&reg, id(&reg, Role::Nitrate), 1.0, AdditionMethod::Poured, 1)
            .unwrap();
        m.record_addition(&reg, id(&reg, Role::SulfuricAcid), 1.0, AdditionMethod::DropperTop, 2)
            .unwrap();
        assert_eq!(
            evaluate_reaction(&m, &reg, &SensitivityConfig::default()),
            Verdict::NoReaction
        );
    }
}
