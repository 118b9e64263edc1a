//! Monitoring report JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use xpe_core::pipeline::MonitorOutcome;
use xpe_core::shapley::PlayerKind;

use crate::error::{io_err, Result};

pub const REPORT_VERSION: &str = "1";

/// The flags a report was produced with (everything except the thread count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: String,
    pub model: String,
    pub source: String,
    pub target: String,
    pub grouping: String,
    pub loss: String,
    pub alpha: f64,
    pub exact_cap: usize,
    pub budget: usize,
    pub background: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_embeddings: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_embeddings: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSection {
    pub objective: f64,
    pub matched_source_index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub estimated_target_loss: Option<f64>,
    pub source_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_transport_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSection {
    pub statistic: Vec<f64>,
    pub p_value: Vec<f64>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEntry {
    pub method: String,
    pub players: PlayerKind,
    pub values: Vec<f64>,
    pub v_empty: f64,
    pub v_full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Target row.
    pub index: usize,
    pub estimated_label: Option<usize>,
    pub attribution: AttributionEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub transport: TransportSection,
    pub performance: Performance,
    pub drift: DriftSection,
    pub instances: Vec<Instance>,
    pub metrics: Map<String, Value>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn from_outcome(seed: u64, config: RunConfig, outcome: &MonitorOutcome) -> Self {
        let instances = outcome
            .attributions
            .iter()
            .enumerate()
            .map(|(k, a)| Instance {
                index: outcome.target_rows[k],
                estimated_label: outcome.estimated_labels.as_ref().map(|l| l[k]),
                attribution: AttributionEntry {
                    method: a.method.as_str().to_owned(),
                    players: a.player_kind,
                    values: a.values.clone(),
                    v_empty: a.v_empty,
                    v_full: a.v_full,
                },
            })
            .collect();
        Self {
            version: REPORT_VERSION.to_owned(),
            seed,
            config,
            transport: TransportSection { objective: outcome.objective, matched_source_index: outcome.matched_source_index.clone() },
            performance: Performance {
                estimated_target_loss: outcome.estimated_target_loss,
                source_loss: outcome.source_loss,
                label_transport_accuracy: outcome.label_transport_accuracy,
            },
            drift: DriftSection {
                statistic: outcome.drift.statistic.clone(),
                p_value: outcome.drift.p_value.clone(),
                mask: outcome.drift.mask.clone(),
            },
            instances,
            metrics: Map::new(),
            warnings: outcome.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}
