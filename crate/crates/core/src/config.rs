//! `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Keys are matched exactly;
//! unknown keys are rejected by the consumer so typos do not pass silently.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::milp::{Family, FamilyParams, GeneratorConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("duplicate key {0}")]
    Duplicate(String),
    #[error("unknown key {0}")]
    Unknown(String),
    #[error("bad value for {key}: {value:?}")]
    Value { key: String, value: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Duplicate(k.to_string()));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
    })
}

/// Parse a comma list of size parameters for `family`: SC `rows,cols,density`,
/// CA `items,bids`, MIS `nodes,edge_prob`, MK `items,knapsacks`.
pub fn family_params(family: Family, spec: &str) -> Result<FamilyParams, ConfigError> {
    let bad = || ConfigError::Value {
        key: "family_params".into(),
        value: spec.to_string(),
    };
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let int = |i: usize| parts.get(i).and_then(|s| s.parse::<usize>().ok()).ok_or_else(bad);
    let real = |i: usize| parts.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(bad);
    let want = match family {
        Family::SetCovering => 3,
        _ => 2,
    };
    if parts.len() != want {
        return Err(bad());
    }
    Ok(match family {
        Family::SetCovering => FamilyParams::SetCovering {
            rows: int(0)?,
            cols: int(1)?,
            density: real(2)?,
        },
        Family::CombinatorialAuction => FamilyParams::CombinatorialAuction {
            items: int(0)?,
            bids: int(1)?,
        },
        Family::MaxIndependentSet => FamilyParams::MaxIndependentSet {
            nodes: int(0)?,
            edge_prob: real(1)?,
        },
        Family::MultipleKnapsack => FamilyParams::MultipleKnapsack {
            items: int(0)?,
            knapsacks: int(1)?,
        },
    })
}

/// Inverse of [`family_params`].
pub fn family_params_string(params: &FamilyParams) -> String {
    match *params {
        FamilyParams::SetCovering { rows, cols, density } => format!("{rows},{cols},{density}"),
        FamilyParams::CombinatorialAuction { items, bids } => format!("{items},{bids}"),
        FamilyParams::MaxIndependentSet { nodes, edge_prob } => format!("{nodes},{edge_prob}"),
        FamilyParams::MultipleKnapsack { items, knapsacks } => format!("{items},{knapsacks}"),
    }
}

/// Generator settings for `family` with optional explicit sizes.
pub fn generator(family: Family, params: Option<&str>, seed: u64) -> Result<GeneratorConfig, ConfigError> {
    Ok(match params {
        Some(p) => GeneratorConfig {
            params: family_params(family, p)?,
            seed,
        },
        None => GeneratorConfig::desk(family, seed),
    })
}
