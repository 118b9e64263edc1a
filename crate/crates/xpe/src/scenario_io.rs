//! Scenario directories: `source.csv`, `target.csv`, optional
//! `pre_shift.csv`, extra `target_<name>.csv` files and `scenario.json`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xpe_core::metrics::{LabelPreservation, ShiftDescriptor, ShiftScenario};
use xpe_core::Dataset;

use crate::csv_io::{read_dataset, write_dataset, Labels, DEFAULT_LABEL_COLUMN};
use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    /// Data generator, e.g. `blobs` or `group_signal`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<String>,
    pub parameters: BTreeMap<String, f64>,
    /// Shifted features (or the group band).
    pub features: Vec<usize>,
    pub seed: u64,
    pub label_preserving: LabelPreservation,
    #[serde(default)]
    pub n_train: Option<usize>,
    /// Extra target files, by name.
    #[serde(default)]
    pub extra_targets: Vec<String>,
    /// The generating flags.
    pub flags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDir {
    pub source: Dataset,
    pub target: Dataset,
    pub pre_shift: Option<Dataset>,
    pub extra: Vec<(String, Dataset)>,
    pub meta: ScenarioMeta,
}

impl ScenarioDir {
    pub fn from_shift(scenario: &ShiftScenario, kind: &str, flags: BTreeMap<String, String>) -> Self {
        let d = &scenario.descriptor;
        Self {
            source: scenario.source.clone(),
            target: scenario.target.clone(),
            pre_shift: Some(scenario.pre_shift.clone()),
            extra: Vec::new(),
            meta: ScenarioMeta {
                kind: kind.to_owned(),
                corruption: Some(d.kind.clone()),
                parameters: d.params.iter().cloned().collect(),
                features: d.features.clone(),
                seed: d.seed,
                label_preserving: scenario.label_preserving,
                n_train: scenario.n_train,
                extra_targets: Vec::new(),
                flags,
            },
        }
    }

    /// The ground-truth scenario; needs `pre_shift.csv`.
    pub fn shift_scenario(&self) -> Result<ShiftScenario> {
        let pre_shift = self.pre_shift.clone().ok_or_else(|| Error::Schema("scenario has no pre_shift.csv".into()))?;
        let sc = ShiftScenario {
            source: self.source.clone(),
            target: self.target.clone(),
            pre_shift,
            descriptor: ShiftDescriptor {
                kind: self.meta.corruption.clone().unwrap_or_else(|| self.meta.kind.clone()),
                params: self.meta.parameters.iter().map(|(k, v)| (k.clone(), *v)).collect(),
                features: self.meta.features.clone(),
                seed: self.meta.seed,
            },
            label_preserving: self.meta.label_preserving,
            n_train: self.meta.n_train,
        };
        sc.validate()?;
        Ok(sc)
    }
}

pub fn write_scenario(dir: impl AsRef<Path>, scenario: &ScenarioDir) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_dataset(dir.join("source.csv"), &scenario.source)?;
    write_dataset(dir.join("target.csv"), &scenario.target)?;
    if let Some(p) = &scenario.pre_shift {
        write_dataset(dir.join("pre_shift.csv"), p)?;
    }
    let mut meta = scenario.meta.clone();
    meta.extra_targets = scenario.extra.iter().map(|(n, _)| n.clone()).collect();
    for (name, ds) in &scenario.extra {
        write_dataset(dir.join(format!("target_{name}.csv")), ds)?;
    }
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(io_err(&path))
}

pub fn read_scenario(dir: impl AsRef<Path>) -> Result<ScenarioDir> {
    let dir = dir.as_ref();
    let meta_path = dir.join("scenario.json");
    let meta: ScenarioMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?)?;
    let labels = Labels::IfPresent(DEFAULT_LABEL_COLUMN);
    let pre_path = dir.join("pre_shift.csv");
    let pre_shift = if pre_path.exists() { Some(read_dataset(&pre_path, labels)?) } else { None };
    let extra = meta
        .extra_targets
        .iter()
        .map(|n| Ok((n.clone(), read_dataset(dir.join(format!("target_{n}.csv")), labels)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioDir {
        source: read_dataset(dir.join("source.csv"), labels)?,
        target: read_dataset(dir.join("target.csv"), labels)?,
        pre_shift,
        extra,
        meta,
    })
}
