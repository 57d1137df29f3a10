//! Chemical formula parsing.
//!
//! ```text
//! formula := unit+
//! unit    := element count? | '(' formula ')' count? | '[' formula ']' count?
//! element := [A-Z][a-z]?
//! count   := [0-9]+            (must be >= 1)
//! ```
//!
//! Formulas are parsed straight from bytes so that arbitrary input can only
//! ever produce a [`FormulaError`] carrying the offending byte offset.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

pub fn is_element(symbol: &str) -> bool {
    ELEMENTS.contains(&symbol)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("empty formula at byte {offset}")]
    Empty { offset: usize },
    #[error("unknown element symbol '{symbol}' at byte {offset}")]
    UnknownSymbol { symbol: String, offset: usize },
    #[error("unexpected byte 0x{byte:02x} at byte {offset}")]
    Unexpected { byte: u8, offset: usize },
    #[error("unclosed '{open}' opened at byte {offset}")]
    Unclosed { open: char, offset: usize },
    #[error("mismatched '{close}' at byte {offset}")]
    Mismatched { close: char, offset: usize },
    #[error("zero count at byte {offset}")]
    ZeroCount { offset: usize },
    #[error("count too large at byte {offset}")]
    Overflow { offset: usize },
}

impl FormulaError {
    pub fn offset(&self) -> usize {
        match self {
            FormulaError::Empty { offset }
            | FormulaError::UnknownSymbol { offset, .. }
            | FormulaError::Unexpected { offset, .. }
            | FormulaError::Unclosed { offset, .. }
            | FormulaError::Mismatched { offset, .. }
            | FormulaError::ZeroCount { offset }
            | FormulaError::Overflow { offset } => *offset,
        }
    }

    fn shifted(self, by: usize) -> Self {
        match self {
            FormulaError::Empty { offset } => FormulaError::Empty { offset: offset + by },
            FormulaError::UnknownSymbol { symbol, offset } => FormulaError::UnknownSymbol {
                symbol,
                offset: offset + by,
            },
            FormulaError::Unexpected { byte, offset } => FormulaError::Unexpected {
                byte,
                offset: offset + by,
            },
            FormulaError::Unclosed { open, offset } => FormulaError::Unclosed {
                open,
                offset: offset + by,
            },
            FormulaError::Mismatched { close, offset } => FormulaError::Mismatched {
                close,
                offset: offset + by,
            },
            FormulaError::ZeroCount { offset } => FormulaError::ZeroCount { offset: offset + by },
            FormulaError::Overflow { offset } => FormulaError::Overflow { offset: offset + by },
        }
    }
}

/// Element multiset, ordered by symbol.
pub type Tally = BTreeMap<String, u64>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    source: String,
    elements: Tally,
}

impl Formula {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn elements(&self) -> &Tally {
        &self.elements
    }

    pub fn count(&self, symbol: &str) -> u64 {
        self.elements.get(symbol).copied().unwrap_or(0)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Formula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_formula(s)
    }
}

pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    parse_formula_bytes(text.as_bytes())
}

/// Parses a formula from raw bytes. Never panics; every failure carries a
/// byte offset into `input`.
pub fn parse_formula_bytes(input: &[u8]) -> Result<Formula, FormulaError> {
    let mut p = FormulaParser { input, pos: 0 };
    let elements = p.body(None)?;
    // input is ASCII-only once parsing succeeded
    let source = String::from_utf8_lossy(input).into_owned();
    Ok(Formula { source, elements })
}

/// Parses `text` embedded at `base` bytes into a larger string, shifting
/// error offsets accordingly.
pub(crate) fn parse_formula_at(text: &str, base: usize) -> Result<Formula, FormulaError> {
    parse_formula(text).map_err(|e| e.shifted(base))
}

struct FormulaParser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl FormulaParser<'_> {
    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn body(&mut self, closer: Option<(u8, usize)>) -> Result<Tally, FormulaError> {
        let start = self.pos;
        let mut tally = Tally::new();
        loop {
            match self.peek() {
                Some(c @ (b'(' | b'[')) => {
                    let open_at = self.pos;
                    self.pos += 1;
                    let close = if c == b'(' { b')' } else { b']' };
                    let inner = self.body(Some((close, open_at)))?;
                    let n = self.count()?;
                    merge(&mut tally, &inner, n, open_at)?;
                }
                Some(c) if c.is_ascii_uppercase() => {
                    let at = self.pos;
                    self.pos += 1;
                    if self.peek().is_some_and(|c| c.is_ascii_lowercase()) {
                        self.pos += 1;
                    }
                    // ascii checked above
                    let symbol = std::str::from_utf8(&self.input[at..self.pos]).unwrap_or("");
                    if !is_element(symbol) {
                        return Err(FormulaError::UnknownSymbol {
                            symbol: symbol.to_string(),
                            offset: at,
                        });
                    }
                    let n = self.count()?;
                    let entry = tally.entry(symbol.to_string()).or_insert(0);
                    *entry = entry
                        .checked_add(n)
                        .ok_or(FormulaError::Overflow { offset: at })?;
                }
                Some(c @ (b')' | b']')) => match closer {
                    Some((want, _)) if want == c => {
                        if tally.is_empty() {
                            return Err(FormulaError::Empty { offset: start });
                        }
                        self.pos += 1;
                        return Ok(tally);
                    }
                    _ => {
                        return Err(FormulaError::Mismatched {
                            close: c as char,
                            offset: self.pos,
                        })
                    }
                },
                Some(c) => {
                    return Err(FormulaError::Unexpected {
                        byte: c,
                        offset: self.pos,
                    })
                }
                None => {
                    if let Some((want, at)) = closer {
                        let open = if want == b')' { '(' } else { '[' };
                        return Err(FormulaError::Unclosed { open, offset: at });
                    }
                    break;
                }
            }
        }
        if tally.is_empty() {
            return Err(FormulaError::Empty { offset: start });
        }
        Ok(tally)
    }

    fn count(&mut self) -> Result<u64, FormulaError> {
        let at = self.pos;
        let mut n: u64 = 0;
        let mut digits = 0;
        while let Some(c) = self.peek().filter(u8::is_ascii_digit) {
            n = n
                .checked_mul(10)
                .and_then(|n| n.checked_add(u64::from(c - b'0')))
                .filter(|&n| n <= u32::MAX as u64)
                .ok_or(FormulaError::Overflow { offset: at })?;
            digits += 1;
            self.pos += 1;
        }
        match digits {
            0 => Ok(1),
            _ if n == 0 => Err(FormulaError::ZeroCount { offset: at }),
            _ => Ok(n),
        }
    }
}

fn merge(into: &mut Tally, group: &Tally, times: u64, at: usize) -> Result<(), FormulaError> {
    for (sym, &n) in group {
        let add = n
            .checked_mul(times)
            .ok_or(FormulaError::Overflow { offset: at })?;
        let e = into.entry(sym.clone()).or_insert(0);
        *e = e.checked_add(add).ok_or(FormulaError::Overflow { offset: at })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tally(pairs: &[(&str, u64)]) -> Tally {
        pairs.iter().map(|(s, n)| (s.to_string(), *n)).collect()
    }

    #[test]
    fn ferric_sulfate() {
        let f = parse_formula("Fe2(SO4)3").unwrap();
        assert_eq!(f.elements(), &tally(&[("Fe", 2), ("S", 3), ("O", 12)]));
    }

    #[test]
    fn nitrosyl_complex() {
        let f = parse_formula("[Fe(H2O)5(NO)]SO4").unwrap();
        assert_eq!(
            f.elements(),
            &tally(&[("Fe", 1), ("H", 10), ("O", 10), ("N", 1), ("S", 1)])
        );
    }

    #[test]
    fn water() {
        assert_eq!(
            parse_formula("H2O").unwrap().elements(),
            &tally(&[("H", 2), ("O", 1)])
        );
    }

    #[test]
    fn errors_are_positioned() {
        assert_eq!(
            parse_formula("Fe2(SO4"),
            Err(FormulaError::Unclosed { open: '(', offset: 3 })
        );
        assert_eq!(
            parse_formula("[Fe(H2O)6)SO4"),
            Err(FormulaError::Mismatched { close: ')', offset: 9 })
        );
        assert_eq!(
            parse_formula("H2Xx"),
            Err(FormulaError::UnknownSymbol {
                symbol: "Xx".into(),
                offset: 2
            })
        );
        assert_eq!(parse_formula("H0"), Err(FormulaError::ZeroCount { offset: 1 }));
        assert_eq!(parse_formula(""), Err(FormulaError::Empty { offset: 0 }));
        assert_eq!(parse_formula("()"), Err(FormulaError::Empty { offset: 1 }));
        assert_eq!(parse_formula("NaCl)"), Err(FormulaError::Mismatched { close: ')', offset: 4 }));
        assert_eq!(
            parse_formula("2H2O"),
            Err(FormulaError::Unexpected { byte: b'2', offset: 0 })
        );
        assert!(parse_formula("H99999999999").is_err());
    }
}
