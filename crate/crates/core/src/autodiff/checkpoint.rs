//! Versioned parameter files.
//!
//! JSON map from parameter name to shape plus row-major values. Floats are
//! written with shortest round-trip formatting and parsed with exact
//! round-tripping, so finite values survive a write/read cycle bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamSet, Tensor};

pub const PARAMS_FORMAT: &str = "acrg-params";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    format: String,
    version: u32,
    params: Vec<Entry>,
}

fn to_file(params: &ParamSet) -> Result<ParamFile, AutodiffError> {
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        if !t.is_finite() {
            return Err(AutodiffError::Checkpoint(format!("parameter {name} has non-finite values")));
        }
        entries.push(Entry { name: name.to_string(), rows: t.rows(), cols: t.cols(), values: t.data().to_vec() });
    }
    Ok(ParamFile { format: PARAMS_FORMAT.into(), version: PARAMS_VERSION, params: entries })
}

pub fn params_to_string(params: &ParamSet) -> Result<String, AutodiffError> {
    serde_json::to_string(&to_file(params)?).map_err(|e| AutodiffError::Checkpoint(e.to_string()))
}

pub fn params_from_str(text: &str) -> Result<ParamSet, AutodiffError> {
    let file: ParamFile = serde_json::from_str(text).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
    if file.format != PARAMS_FORMAT {
        return Err(AutodiffError::Checkpoint(format!("unexpected format tag {:?}", file.format)));
    }
    if file.version != PARAMS_VERSION {
        return Err(AutodiffError::Checkpoint(format!("unsupported version {}", file.version)));
    }
    let mut params = ParamSet::new();
    for e in file.params {
        if params.id(&e.name).is_some() {
            return Err(AutodiffError::Checkpoint(format!("duplicate parameter {}", e.name)));
        }
        let t = Tensor::from_vec(e.rows, e.cols, e.values)?;
        params.add(e.name, t);
    }
    Ok(params)
}

pub fn save_params(params: &ParamSet, path: &Path) -> Result<(), AutodiffError> {
    let text = params_to_string(params)?;
    fs::write(path, text).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_params(path: &Path) -> Result<ParamSet, AutodiffError> {
    let text = fs::read_to_string(path).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))?;
    params_from_str(&text)
}

/// Copies values from `source` into `target` by name, requiring identical names and shapes.
pub fn assign_by_name(target: &mut ParamSet, source: &ParamSet) -> Result<(), AutodiffError> {
    if target.len() != source.len() {
        return Err(AutodiffError::Checkpoint(format!(
            "parameter count mismatch: model has {}, file has {}",
            target.len(),
            source.len()
        )));
    }
    for id in target.ids().collect::<Vec<_>>() {
        let name = target.name(id).to_string();
        let src = source
            .id(&name)
            .map(|sid| source.get(sid))
            .ok_or_else(|| AutodiffError::Checkpoint(format!("missing parameter {name}")))?;
        if src.shape() != target.get(id).shape() {
            return Err(AutodiffError::Checkpoint(format!(
                "shape mismatch for {name}: model {:?}, file {:?}",
                target.get(id).shape(),
                src.shape()
            )));
        }
        *target.get_mut(id) = src.clone();
    }
    Ok(())
}
