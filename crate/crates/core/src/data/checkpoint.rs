//! Parameter checkpoints: one STT1 file per tensor, `manifest.json` mapping
//! names to `{file, dims, frozen, group, sha256}`, and `config.json` holding
//! what is needed to rebuild the model layout.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;
use crate::model::{Model, ModelConfig};
use crate::modality::Modality;
use crate::tensor::{stt, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub file: String,
    pub dims: Vec<usize>,
    pub frozen: bool,
    pub group: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: ModelConfig,
    pub modalities: Vec<Modality>,
    pub seed: u64,
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    fsio::write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&fsio::read(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save(dir: &Path, model: &Model, store: &ParamStore, seed: u64) -> Result<()> {
    let mut manifest = BTreeMap::new();
    for id in store.ids() {
        let name = store.name(id).to_string();
        let t = store.get(id);
        let file = format!("{name}.stt");
        let bytes = stt::encode(t)?;
        fsio::write_atomic(&dir.join(&file), &bytes)?;
        manifest.insert(
            name,
            Entry {
                file,
                dims: t.dims().to_vec(),
                frozen: store.is_frozen(id),
                group: store.group(id).to_string(),
                sha256: fsio::sha256_hex(&bytes),
            },
        );
    }
    write_json(
        &dir.join("config.json"),
        &CheckpointConfig {
            model: model.config.clone(),
            modalities: model.modalities(),
            seed,
        },
    )?;
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Rebuilds the model from `config.json` and loads every tensor, restoring
/// freeze flags from the manifest.
pub fn load(dir: &Path) -> Result<(Model, ParamStore, CheckpointConfig)> {
    let cfg: CheckpointConfig = read_json(&dir.join("config.json"))?;
    let manifest_path = dir.join("manifest.json");
    let manifest: BTreeMap<String, Entry> = read_json(&manifest_path)?;
    let (model, mut store) = Model::build(&cfg.model, &cfg.modalities, cfg.seed)?;
    if manifest.len() != store.len() {
        return Err(Error::format(
            &manifest_path,
            format!("{} entries for a model with {} tensors", manifest.len(), store.len()),
        ));
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let e = manifest
            .get(&name)
            .ok_or_else(|| Error::format(&manifest_path, format!("missing tensor `{name}`")))?;
        let path = dir.join(&e.file);
        let bytes = fsio::read(&path)?;
        if fsio::sha256_hex(&bytes) != e.sha256 {
            return Err(Error::format(&path, "sha256 does not match manifest"));
        }
        let t = stt::decode::<f32>(&bytes, &path)?;
        let dst = store.get_mut(id);
        if t.dims() != dst.dims() || t.dims() != e.dims.as_slice() {
            return Err(Error::Shape {
                op: "checkpoint load",
                lhs: t.dims().to_vec(),
                rhs: dst.dims().to_vec(),
            });
        }
        dst.data_mut().copy_from_slice(t.data());
        store.set_frozen(id, e.frozen);
    }
    Ok((model, store, cfg))
}
