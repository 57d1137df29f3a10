//! Equation parsing and elemental balance verification.
//!
//! Equations look like `2HNO3 + 3H2SO4 + 6FeSO4 -> 3Fe2(SO4)3 + 2NO + 4H2O`.
//! The arrow may be `->`, `-->`, `=>`, `=` or `→`; a coefficient may be
//! glued to its formula or separated by spaces.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use super::formula::{parse_formula_at, Formula, FormulaError, Tally};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub coefficient: u64,
    pub formula: Formula,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coefficient != 1 {
            write!(f, "{}", self.coefficient)?;
        }
        write!(f, "{}", self.formula)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub lhs: Vec<Term>,
    pub rhs: Vec<Term>,
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |terms: &[Term]| {
            terms
                .iter()
                .map(Term::to_string)
                .collect::<Vec<_>>()
                .join(" + ")
        };
        write!(f, "{} -> {}", side(&self.lhs), side(&self.rhs))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquationError {
    #[error("missing reaction arrow")]
    NoArrow,
    #[error("more than one reaction arrow (byte {offset})")]
    ExtraArrow { offset: usize },
    #[error("empty term at byte {offset}")]
    EmptyTerm { offset: usize },
    #[error("zero coefficient at byte {offset}")]
    ZeroCoefficient { offset: usize },
    #[error("coefficient too large at byte {offset}")]
    CoefficientOverflow { offset: usize },
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Per-element totals of both sides, for reporting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BalanceReport {
    pub rows: Vec<(String, u64, u64)>,
    pub balanced: bool,
}

impl fmt::Display for BalanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (sym, l, r) in &self.rows {
            let mark = if l == r { "ok" } else { "MISMATCH" };
            writeln!(f, "{sym:<3} {l:>5} {r:>5}  {mark}")?;
        }
        write!(
            f,
            "{}",
            if self.balanced { "BALANCED" } else { "UNBALANCED" }
        )
    }
}

const ARROWS: [&str; 5] = ["-->", "->", "=>", "→", "="];

pub fn parse_equation(text: &str) -> Result<Equation, EquationError> {
    let (arrow_at, arrow_len) = find_arrow(text, 0).ok_or(EquationError::NoArrow)?;
    let rhs_start = arrow_at + arrow_len;
    if let Some((extra, _)) = find_arrow(text, rhs_start) {
        return Err(EquationError::ExtraArrow { offset: extra });
    }
    Ok(Equation {
        lhs: parse_side(&text[..arrow_at], 0)?,
        rhs: parse_side(&text[rhs_start..], rhs_start)?,
    })
}

fn find_arrow(text: &str, from: usize) -> Option<(usize, usize)> {
    ARROWS
        .iter()
        .filter_map(|a| text[from..].find(a).map(|i| (from + i, a.len())))
        // earliest position, longest arrow at that position
        .min_by_key(|&(at, len)| (at, usize::MAX - len))
}

fn parse_side(text: &str, base: usize) -> Result<Vec<Term>, EquationError> {
    let mut terms = Vec::new();
    let mut offset = 0;
    for piece in text.split('+') {
        let lead = piece.len() - piece.trim_start().len();
        let body = piece.trim();
        let at = base + offset + lead;
        offset += piece.len() + 1;
        if body.is_empty() {
            return Err(EquationError::EmptyTerm { offset: at });
        }
        let digits = body.bytes().take_while(u8::is_ascii_digit).count();
        let coefficient = if digits == 0 {
            1
        } else {
            let c: u64 = body[..digits]
                .parse()
                .map_err(|_| EquationError::CoefficientOverflow { offset: at })?;
            if c == 0 {
                return Err(EquationError::ZeroCoefficient { offset: at });
            }
            c
        };
        let rest = &body[digits..];
        let skip = rest.len() - rest.trim_start().len();
        let formula = parse_formula_at(rest.trim_start(), at + digits + skip)?;
        terms.push(Term {
            coefficient,
            formula,
        });
    }
    Ok(terms)
}

/// Sum of `coefficient * formula` over one side. Saturates instead of
/// overflowing so that absurd coefficients compare as unbalanced.
pub fn side_tally(terms: &[Term]) -> Tally {
    let mut tally = Tally::new();
    for t in terms {
        for (sym, &n) in t.formula.elements() {
            let e = tally.entry(sym.clone()).or_insert(0);
            *e = e.saturating_add(n.saturating_mul(t.coefficient));
        }
    }
    tally
}

/// True iff both sides carry exactly the same element multiset.
pub fn check_balance(lhs: &[Term], rhs: &[Term]) -> bool {
    side_tally(lhs) == side_tally(rhs)
}

pub fn balance_report(eq: &Equation) -> BalanceReport {
    let l = side_tally(&eq.lhs);
    let r = side_tally(&eq.rhs);
    let symbols: BTreeSet<&String> = l.keys().chain(r.keys()).collect();
    let rows = symbols
        .into_iter()
        .map(|s| {
            (
                s.clone(),
                l.get(s).copied().unwrap_or(0),
                r.get(s).copied().unwrap_or(0),
            )
        })
        .collect();
    BalanceReport {
        rows,
        balanced: l == r,
    }
}
