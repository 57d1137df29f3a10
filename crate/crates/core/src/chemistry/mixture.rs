use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::registry::SpeciesRegistry;
use crate::ids::SpeciesId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditionMethod {
    Poured,
    DropperSide,
    DropperTop,
}

impl AdditionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AdditionMethod::Poured => "poured",
            AdditionMethod::DropperSide => "dropper_side",
            AdditionMethod::DropperTop => "dropper_top",
        }
    }
}

impl fmt::Display for AdditionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdditionMethod {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "poured" => Ok(AdditionMethod::Poured),
            "dropper_side" => Ok(AdditionMethod::DropperSide),
            "dropper_top" => Ok(AdditionMethod::DropperTop),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Addition {
    pub tick: u64,
    pub species: SpeciesId,
    pub amount_g: f64,
    pub method: AdditionMethod,
}

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("unknown species {0}")]
    UnknownSpecies(SpeciesId),
    #[error("addition amount must be positive and finite, got {0}")]
    NonPositive(f64),
    #[error("addition at tick {tick} precedes last logged tick {last}")]
    TickOrder { tick: u64, last: u64 },
}

/// Per-vessel ledger of continuous amounts in grams plus the ordered log of
/// how each species arrived.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    amounts: BTreeMap<SpeciesId, f64>,
    total_solvent: f64,
    log: Vec<Addition>,
    #[serde(skip)]
    revision: u64,
}

impl Mixture {
    pub fn amounts(&self) -> &BTreeMap<SpeciesId, f64> {
        &self.amounts
    }

    pub fn amount(&self, species: SpeciesId) -> f64 {
        self.amounts.get(&species).copied().unwrap_or(0.0)
    }

    pub fn total_solvent(&self) -> f64 {
        self.total_solvent
    }

    pub fn log(&self) -> &[Addition] {
        &self.log
    }

    /// Bumped on every change; lets the tick pipeline notice new additions.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn total_mass(&self) -> f64 {
        self.amounts.values().sum()
    }

    fn validate(
        &self,
        registry: &SpeciesRegistry,
        species: SpeciesId,
        amount_g: f64,
        tick: u64,
    ) -> Result<(), MixtureError> {
        if registry.get(species).is_none() {
            return Err(MixtureError::UnknownSpecies(species));
        }
        if !(amount_g.is_finite() && amount_g > 0.0) {
            return Err(MixtureError::NonPositive(amount_g));
        }
        if let Some(last) = self.log.last() {
            if tick < last.tick {
                return Err(MixtureError::TickOrder {
                    tick,
                    last: last.tick,
                });
            }
        }
        Ok(())
    }

    fn credit(&mut self, registry: &SpeciesRegistry, species: SpeciesId, amount_g: f64) {
        *self.amounts.entry(species).or_insert(0.0) += amount_g;
        if registry.role_of(species).is_some_and(|r| r.is_aqueous()) {
            self.total_solvent += amount_g;
        }
        self.revision += 1;
    }

    /// Appends one log entry and credits the amount.
    pub fn record_addition(
        &mut self,
        registry: &SpeciesRegistry,
        species: SpeciesId,
        amount_g: f64,
        method: AdditionMethod,
        tick: u64,
    ) -> Result<(), MixtureError> {
        self.validate(registry, species, amount_g, tick)?;
        self.credit(registry, species, amount_g);
        self.log.push(Addition {
            tick,
            species,
            amount_g,
            method,
        });
        Ok(())
    }

    /// Like [`record_addition`](Self::record_addition) but folds a stream of
    /// particle arrivals into one entry: the amount is merged into the most
    /// recent entry of the same species reachable through a run of entries
    /// with the same method. First-arrival order is never changed.
    pub fn deposit(
        &mut self,
        registry: &SpeciesRegistry,
        species: SpeciesId,
        amount_g: f64,
        method: AdditionMethod,
        tick: u64,
    ) -> Result<(), MixtureError> {
        self.validate(registry, species, amount_g, tick)?;
        let target = self
            .log
            .iter()
            .rev()
            .take_while(|a| a.method == method)
            .position(|a| a.species == species);
        match target {
            Some(back) => {
                let i = self.log.len() - 1 - back;
                self.log[i].amount_g += amount_g;
                self.credit(registry, species, amount_g);
            }
            None => {
                self.credit(registry, species, amount_g);
                self.log.push(Addition {
                    tick,
                    species,
                    amount_g,
                    method,
                });
            }
        }
        Ok(())
    }

    /// Removes the share of the mixture carried by one departing proxy
    /// particle of `species`.
    ///
    /// `proxies` counts the vessel's contained particles per species,
    /// including the departing one. A species with proxies is split evenly
    /// among its own proxies; a species without any (for example water added
    /// straight to the ledger) is split evenly among all particles.
    pub fn withdraw_share(
        &mut self,
        registry: &SpeciesRegistry,
        species: SpeciesId,
        proxies: &BTreeMap<SpeciesId, usize>,
    ) -> Vec<(SpeciesId, f64)> {
        let total: usize = proxies.values().sum();
        if total == 0 {
            return Vec::new();
        }
        let mut taken = Vec::new();
        for (&s, amount) in self.amounts.iter_mut() {
            let n_own = proxies.get(&s).copied().unwrap_or(0);
            let share = if n_own > 0 {
                if s == species {
                    *amount / n_own as f64
                } else {
                    0.0
                }
            } else {
                *amount / total as f64
            };
            if share > 0.0 {
                // the last proxy takes exactly what is left
                let share = if (n_own == 1 && s == species) || (n_own == 0 && total == 1) {
                    *amount
                } else {
                    share
                };
                *amount -= share;
                taken.push((s, share));
            }
        }
        for &(s, g) in &taken {
            if registry.role_of(s).is_some_and(|r| r.is_aqueous()) {
                self.total_solvent = (self.total_solvent - g).max(0.0);
            }
        }
        if !taken.is_empty() {
            self.revision += 1;
        }
        taken
    }
}
