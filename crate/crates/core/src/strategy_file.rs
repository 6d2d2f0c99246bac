//! On-disk strategy documents: model parameters plus a map from encoded
//! states to action strings.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{PositionalStrategy, StateId};
use crate::model::{ActionLabel, AttackModel, AttackParams};

pub const FORMAT: &str = "nasmine-strategy";
pub const VERSION: u32 = 1;
pub const ENCODING: &str = "T:<M|H|A>;O:<H/A tip first>;C:<rows top-down, ',' within rows, '|' between rows>";

#[derive(Debug, Error)]
pub enum StrategyFileError {
    #[error("cannot read or write {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed strategy document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported strategy document: format {format:?}, version {version}")]
    Format { format: String, version: u32 },
    #[error("bad action {action:?} for state {state}")]
    BadAction { state: String, action: String },
    #[error("header lists {declared} states but the map has {actual}")]
    Count { declared: usize, actual: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyFile {
    pub format: String,
    pub version: u32,
    pub params: AttackParams,
    pub encoding: String,
    pub state_count: usize,
    pub actions: BTreeMap<String, String>,
}

impl StrategyFile {
    pub fn from_strategy(model: &AttackModel, strategy: &PositionalStrategy) -> Self {
        let actions = (0..model.state_count())
            .map(|s| {
                let s = s as StateId;
                (model.state(s).encode(), model.action_label(strategy.action(s)).to_string())
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            params: *model.params(),
            encoding: ENCODING.to_string(),
            state_count: model.state_count(),
            actions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategy documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, StrategyFileError> {
        let doc: StrategyFile = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(StrategyFileError::Format {
                format: doc.format,
                version: doc.version,
            });
        }
        if doc.state_count != doc.actions.len() {
            return Err(StrategyFileError::Count {
                declared: doc.state_count,
                actual: doc.actions.len(),
            });
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self, StrategyFileError> {
        let text = fs::read_to_string(path).map_err(|source| StrategyFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), StrategyFileError> {
        fs::write(path, self.to_json() + "\n").map_err(|source| StrategyFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Parsed lookup table keyed by encoded state.
    pub fn lookup(&self) -> Result<HashMap<String, ActionLabel>, StrategyFileError> {
        self.actions
            .iter()
            .map(|(state, action)| {
                let label = action.parse().map_err(|_| StrategyFileError::BadAction {
                    state: state.clone(),
                    action: action.clone(),
                })?;
                Ok((state.clone(), label))
            })
            .collect()
    }
}
