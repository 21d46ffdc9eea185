//! Flat binary parameter files with a JSON shape manifest.
//!
//! `<stem>.bin` holds every tensor back to back as row-major little-endian
//! `f64`; `<stem>.json` records the model configuration and, per tensor, its
//! name, shape and offset (in values) into the binary file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, TablModel};
use super::{NnError, Parametric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamManifest {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
    pub total_values: usize,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn manifest(model: &TablModel) -> ParamManifest {
    let mut offset = 0;
    let tensors = model
        .tensors()
        .into_iter()
        .map(|(name, t)| {
            let e = TensorEntry { name, rows: t.nrows(), cols: t.ncols(), offset };
            offset += t.len();
            e
        })
        .collect();
    ParamManifest { config: model.config.clone(), tensors, total_values: offset }
}

/// Writes `<stem>.bin` and `<stem>.json`; returns both paths.
pub fn save(model: &TablModel, stem: &Path) -> Result<(PathBuf, PathBuf), NnError> {
    let (bin, json) = paths(stem);
    let mut bytes = Vec::with_capacity(model.num_params() * 8);
    for (_, t) in model.tensors() {
        for v in t.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&bin, bytes)?;
    fs::write(&json, serde_json::to_vec_pretty(&manifest(model))?)?;
    Ok((bin, json))
}

pub fn load(stem: &Path) -> Result<TablModel, NnError> {
    let (bin, json) = paths(stem);
    let man: ParamManifest = serde_json::from_slice(&fs::read(&json)?)?;
    let bytes = fs::read(&bin)?;
    if bytes.len() != man.total_values * 8 {
        return Err(NnError::Config(format!("parameter file has {} bytes, manifest expects {}", bytes.len(), man.total_values * 8)));
    }
    let mut model = TablModel::new(man.config.clone())?;
    let expected = manifest(&model);
    if expected.tensors != man.tensors {
        return Err(NnError::Config("manifest tensor layout does not match the configuration".into()));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    for (t, e) in model.tensors_mut().into_iter().zip(&man.tensors) {
        for (dst, src) in t.iter_mut().zip(&values[e.offset..e.offset + e.rows * e.cols]) {
            *dst = *src;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Head;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig { window: 8, init_seed: 3, ..ModelConfig::new(Head::Market) };
        let mut model = TablModel::new(cfg).unwrap();
        model.bin.mix[[0, 1]] = 0.25;
        let stem = dir.path().join("market");
        save(&model, &stem).unwrap();
        assert_eq!(load(&stem).unwrap(), model);
        fs::write(stem.with_extension("bin"), [0u8; 16]).unwrap();
        assert!(load(&stem).is_err());
    }
}
