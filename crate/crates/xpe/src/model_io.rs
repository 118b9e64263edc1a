//! Model files: JSON holding the kind, dimensions and parameter arrays.
//!
//! Floats are written in the shortest form that parses back to the same
//! `f64`, so a save/load cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use xpe_core::TrainedModel;

use crate::error::{io_err, Error, Result};

pub const FORMAT: &str = "xpe-model";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

pub fn to_json(model: &TrainedModel) -> Result<String> {
    let file = ModelFile { format: FORMAT.into(), version: 1, model: model.clone() };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn from_json(text: &str) -> Result<TrainedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format != FORMAT || file.version != 1 {
        return Err(Error::Schema(format!("unsupported model file {} v{}", file.format, file.version)));
    }
    file.model.validate()?;
    Ok(file.model)
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model)? + "\n").map_err(io_err(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    from_json(&text)
}
