//! JSON checkpoints: model config plus every named parameter tensor.
//! f64 values round-trip exactly through serde_json, so save/load is lossless.

use crate::error::{Error, Result};
use crate::model::{NsFpnConfig, NsFpnModel};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT_TAG: &str = "nsfpn-checkpoint-v1";

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    seed: u64,
    config: NsFpnConfig,
    params: Vec<NamedArray>,
}

pub fn save(model: &NsFpnModel, seed: u64, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format: FORMAT_TAG.to_string(),
        seed,
        config: model.cfg.clone(),
        params: model
            .params()
            .iter()
            .map(|(name, t)| NamedArray {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(path: &Path) -> Result<(NsFpnModel, u64)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.format != FORMAT_TAG {
        return Err(Error::Checkpoint(format!(
            "{}: unknown format tag {:?}, expected {:?}",
            path.display(),
            file.format,
            FORMAT_TAG
        )));
    }
    let mut model = NsFpnModel::new(file.config, file.seed)?;
    let mut stored: std::collections::HashMap<String, NamedArray> =
        file.params.into_iter().map(|p| (p.name.clone(), p)).collect();
    for (name, param) in model.params_mut() {
        let entry = stored.remove(&name).ok_or_else(|| {
            Error::Checkpoint(format!("missing parameter {name:?} in checkpoint"))
        })?;
        if entry.shape != param.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter {name:?}: checkpoint shape {:?} does not match model shape {:?}",
                entry.shape,
                param.shape()
            )));
        }
        *param = Tensor::from_vec(&entry.shape, entry.data)?;
    }
    if let Some(extra) = stored.keys().next() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has unexpected parameter {extra:?}"
        )));
    }
    Ok((model, file.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FpnMode, NUM_SFS_EDGES};
    use crate::sfs::SpiralConfig;

    fn tiny_model() -> NsFpnModel {
        let cfg = NsFpnConfig {
            channels: 4,
            mode: FpnMode::Ns,
            spiral: [SpiralConfig {
                heads: 2,
                points: 2,
                l0: 0.5,
                dl: 0.5,
                grid_stride: 1,
            }; NUM_SFS_EDGES],
            ..NsFpnConfig::default()
        };
        NsFpnModel::new(cfg, 42).unwrap()
    }

    #[test]
    fn roundtrip_is_bitwise_exact() {
        let model = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save(&model, 42, &path).unwrap();
        let (loaded, seed) = load(&path).unwrap();
        assert_eq!(seed, 42);
        for ((na, ta), (nb, tb)) in model.params().iter().zip(loaded.params().iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data(), "parameter {na} changed");
        }
    }

    #[test]
    fn rejects_wrong_format_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"format":"other","seed":0,"config":null,"params":[]}"#).unwrap();
        assert!(load(&path).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let model = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        save(&model, 0, &path).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        // corrupt the first shape entry
        text = text.replacen("\"shape\":[", "\"shape\":[9,", 1);
        std::fs::write(&path, text).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("does not match"), "{err}");
    }
}
