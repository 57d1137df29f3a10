//! Formulas, balance checks, mixture ledgers, the reaction rule and the
//! ring band.

pub mod balance;
pub mod formula;
pub mod mixture;
pub mod reaction;
pub mod registry;
pub mod ring;

pub use balance::{balance_report, check_balance, parse_equation, Equation, EquationError, Term};
pub use formula::{parse_formula, parse_formula_bytes, Formula, FormulaError};
pub use mixture::{AdditionMethod, Mixture, MixtureError};
pub use reaction::{
    evaluate_reaction, rule_checks, ReactionOutcome, RingBand, RuleChecks, SensitivityConfig, Verdict,
};
pub use registry::{Role, Species, SpeciesRegistry};
pub use ring::compute_ring_band;
