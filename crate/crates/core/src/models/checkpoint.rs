//! Checkpoints: an `SVT1` tensor file plus a JSON manifest at `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{SvtTensor, TensorSet};
use crate::error::{Error, Result};
use crate::tensor::{ParamSet, RngStream, Tensor};

use super::{Net1, Net1Config, Net2, Net2Config};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub arch: String,
    pub version: u32,
    /// Architecture config under `"config"` plus free-form training details.
    pub hyper: serde_json::Value,
    pub seed: u64,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes every parameter of `params` to `path` and the manifest next to it.
pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParamSet<f32>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let mut set = TensorSet::new();
    for p in params.iter() {
        set.insert(p.name.clone(), SvtTensor::from(&p.tensor))?;
    }
    set.pack(path)?;
    let json = serde_json::to_string_pretty(manifest)? + "\n";
    let mpath = manifest_path(path);
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))
}

/// Reads a checkpoint, rejecting a different architecture or version.
pub fn load_checkpoint(path: impl AsRef<Path>, arch: &str) -> Result<(Manifest, TensorSet)> {
    let path = path.as_ref();
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.arch != arch {
        return Err(Error::ArchMismatch {
            expected: arch.into(),
            found: manifest.arch,
        });
    }
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: manifest.version,
        });
    }
    Ok((manifest, TensorSet::load(path)?))
}

/// Fills `template` from `set`, checking every tensor's presence and dims.
fn fill(template: &mut ParamSet<f32>, set: &TensorSet) -> Result<()> {
    for p in template.iter_mut() {
        let (dims, data) = set.f32(&p.name)?;
        if dims != p.tensor.dims() {
            return Err(Error::TensorShape {
                name: p.name.clone(),
                expected: p.tensor.dims().to_vec(),
                found: dims.to_vec(),
            });
        }
        p.tensor = Tensor::new(dims.to_vec(), data.to_vec())?;
    }
    if let Some((name, _)) = set.iter().find(|(n, _)| template.index_of(n).is_none()) {
        return Err(Error::format(format!("checkpoint holds unexpected tensor `{name}`")));
    }
    Ok(())
}

fn config_of<C: serde::de::DeserializeOwned>(manifest: &Manifest) -> Result<C> {
    let value = manifest
        .hyper
        .get("config")
        .cloned()
        .ok_or_else(|| Error::format(format!("{} manifest has no `hyper.config`", manifest.arch)))?;
    Ok(serde_json::from_value(value)?)
}

fn hyper_with_config<C: Serialize>(config: &C, extra: serde_json::Value) -> Result<serde_json::Value> {
    let mut hyper = match extra {
        serde_json::Value::Object(map) => map,
        serde_json::Value::Null => serde_json::Map::new(),
        other => {
            let mut map = serde_json::Map::new();
            map.insert("extra".into(), other);
            map
        }
    };
    hyper.insert("config".into(), serde_json::to_value(config)?);
    Ok(serde_json::Value::Object(hyper))
}

impl Net1 {
    pub const ARCH: &'static str = "net1";

    /// Saves with `extra` merged into the manifest's hyperparameters.
    pub fn save(&self, path: impl AsRef<Path>, seed: u64, extra: serde_json::Value) -> Result<()> {
        let manifest = Manifest {
            arch: Self::ARCH.into(),
            version: CHECKPOINT_VERSION,
            hyper: hyper_with_config(&self.config, extra)?,
            seed,
        };
        save_checkpoint(path, &self.params, &manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Manifest)> {
        let (manifest, set) = load_checkpoint(path, Self::ARCH)?;
        let config: Net1Config = config_of(&manifest)?;
        let mut net = Net1::init(config, &mut RngStream::new(0, "template"))?;
        fill(&mut net.params, &set)?;
        Ok((net, manifest))
    }
}

impl Net2 {
    pub const ARCH: &'static str = "net2";

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, extra: serde_json::Value) -> Result<()> {
        let manifest = Manifest {
            arch: Self::ARCH.into(),
            version: CHECKPOINT_VERSION,
            hyper: hyper_with_config(&self.config, extra)?,
            seed,
        };
        save_checkpoint(path, &self.params, &manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Manifest)> {
        let (manifest, set) = load_checkpoint(path, Self::ARCH)?;
        let config: Net2Config = config_of(&manifest)?;
        let mut net = Net2::init(config, &mut RngStream::new(0, "template"))?;
        fill(&mut net.params, &set)?;
        Ok((net, manifest))
    }
}
