//! Species registry.
//!
//! On disk a registry is line oriented text, one species per line:
//!
//! ```text
//! # id,formula,role,color-hex
//! water,H2O,water,#cfe8ff
//! ```
//!
//! Blank lines and whole-line `#` comments are ignored. Line order assigns
//! [`SpeciesId`]s starting at zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::formula::{parse_formula, Formula, FormulaError};
use crate::ids::SpeciesId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    IronSulfate,
    Nitrate,
    SulfuricAcid,
    Nitrite,
    Water,
    Product,
    Other,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::IronSulfate => "iron_sulfate",
            Role::Nitrate => "nitrate",
            Role::SulfuricAcid => "sulfuric_acid",
            Role::Nitrite => "nitrite",
            Role::Water => "water",
            Role::Product => "product",
            Role::Other => "other",
        }
    }

    /// Dissolved salts and water count towards the solution mass.
    pub fn is_aqueous(self) -> bool {
        matches!(
            self,
            Role::IronSulfate | Role::Nitrate | Role::Nitrite | Role::Water
        )
    }
}

impl FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "iron_sulfate" => Role::IronSulfate,
            "nitrate" => Role::Nitrate,
            "sulfuric_acid" => Role::SulfuricAcid,
            "nitrite" => Role::Nitrite,
            "water" => Role::Water,
            "product" => Role::Product,
            "other" => Role::Other,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub id: SpeciesId,
    pub name: String,
    pub formula: Formula,
    pub role: Role,
    pub color: [u8; 3],
}

impl Species {
    pub fn color_hex(&self) -> String {
        format!(
            "#{:02x}{:02x}{:02x}",
            self.color[0], self.color[1], self.color[2]
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("line {line}: expected 4 comma-separated fields")]
    FieldCount { line: usize },
    #[error("line {line}: bad species id '{name}'")]
    BadName { line: usize, name: String },
    #[error("line {line}: duplicate species id '{name}'")]
    Duplicate { line: usize, name: String },
    #[error("line {line}: {source}")]
    Formula {
        line: usize,
        #[source]
        source: FormulaError,
    },
    #[error("line {line}: unknown role '{role}'")]
    BadRole { line: usize, role: String },
    #[error("line {line}: role '{role}' already taken")]
    RoleTaken { line: usize, role: Role },
    #[error("line {line}: bad colour '{color}'")]
    BadColor { line: usize, color: String },
    #[error("too many species")]
    TooMany,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpeciesRegistry {
    species: Vec<Species>,
}

pub const DEFAULT_REGISTRY: &str = "\
# id,formula,role,color-hex
water,H2O,water,#cfe8ff
feso4,FeSO4,iron_sulfate,#b6d7a8
kno3,KNO3,nitrate,#eeeeee
h2so4,H2SO4,sulfuric_acid,#fff2b3
nano2,NaNO2,nitrite,#f4f0d0
nitrosyl_complex,[Fe(H2O)5(NO)]SO4,product,#6b3a1e
";

impl SpeciesRegistry {
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut reg = SpeciesRegistry::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            // colours start with '#', so only whole-line comments exist
            let body = if raw.trim_start().starts_with('#') { "" } else { raw };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split(',').map(str::trim).collect();
            let [name, formula, role, color] = fields[..] else {
                return Err(RegistryError::FieldCount { line });
            };
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                return Err(RegistryError::BadName {
                    line,
                    name: name.into(),
                });
            }
            if reg.by_name(name).is_some() {
                return Err(RegistryError::Duplicate {
                    line,
                    name: name.into(),
                });
            }
            let formula =
                parse_formula(formula).map_err(|source| RegistryError::Formula { line, source })?;
            let role: Role = role.parse().map_err(|_| RegistryError::BadRole {
                line,
                role: role.into(),
            })?;
            if role != Role::Other && reg.by_role(role).is_some() {
                return Err(RegistryError::RoleTaken { line, role });
            }
            let color = parse_color(color).ok_or_else(|| RegistryError::BadColor {
                line,
                color: color.into(),
            })?;
            let id = u16::try_from(reg.species.len()).map_err(|_| RegistryError::TooMany)?;
            reg.species.push(Species {
                id: SpeciesId(id),
                name: name.to_string(),
                formula,
                role,
                color,
            });
        }
        Ok(reg)
    }

    pub fn get(&self, id: SpeciesId) -> Option<&Species> {
        self.species.get(id.0 as usize)
    }

    pub fn by_name(&self, name: &str) -> Option<&Species> {
        self.species.iter().find(|s| s.name == name)
    }

    pub fn by_role(&self, role: Role) -> Option<&Species> {
        self.species.iter().find(|s| s.role == role)
    }

    pub fn role_of(&self, id: SpeciesId) -> Option<Role> {
        self.get(id).map(|s| s.role)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Species> {
        self.species.iter()
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    /// Serialises back to the line format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# id,formula,role,color-hex\n");
        for s in &self.species {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.name,
                s.formula,
                s.role,
                s.color_hex()
            ));
        }
        out
    }
}

impl SpeciesRegistry {
    pub fn stock() -> Self {
        Self::parse(DEFAULT_REGISTRY).expect("stock registry parses")
    }
}

fn parse_color(s: &str) -> Option<[u8; 3]> {
    let hex = s.strip_prefix('#')?;
    if hex.len() != 6 || !hex.is_ascii() {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    Some([byte(0)?, byte(2)?, byte(4)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_registry_roles() {
        let reg = SpeciesRegistry::stock();
        assert_eq!(reg.len(), 6);
        assert_eq!(reg.by_role(Role::Nitrate).unwrap().name, "kno3");
        let product = reg.by_role(Role::Product).unwrap();
        assert_eq!(product.formula.count("H"), 10);
        assert_eq!(product.color_hex(), "#6b3a1e");
    }

    #[test]
    fn text_round_trip() {
        let reg = SpeciesRegistry::stock();
        assert_eq!(SpeciesRegistry::parse(&reg.to_text()).unwrap(), reg);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(
            SpeciesRegistry::parse("a,H2O,water"),
            Err(RegistryError::FieldCount { line: 1 })
        );
        assert!(matches!(
            SpeciesRegistry::parse("a,H2O,water,#000000\nb,H2O,water,#000000"),
            Err(RegistryError::RoleTaken { line: 2, .. })
        ));
        assert!(matches!(
            SpeciesRegistry::parse("a,H2O,solvent,#000000"),
            Err(RegistryError::BadRole { .. })
        ));
        assert!(matches!(
            SpeciesRegistry::parse("a,H2Q,water,#000000"),
            Err(RegistryError::Formula { line: 1, .. })
        ));
        assert!(matches!(
            SpeciesRegistry::parse("a,H2O,water,123456"),
            Err(RegistryError::BadColor { .. })
        ));
        assert!(matches!(
            SpeciesRegistry::parse("a,H2O,other,#000000\na,NO,other,#000000"),
            Err(RegistryError::Duplicate { line: 2, .. })
        ));
    }
}
