use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Serialized parameters plus an echo of the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: serde_json::Value,
    pub parameters: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(config: serde_json::Value) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            parameters: Vec::new(),
        }
    }

    /// Appends every parameter of `store`, prefixing names with `prefix`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for (_, p) in store.iter() {
            self.parameters.push(ParamRecord {
                name: format!("{prefix}{}", p.name),
                shape: p.value.shape().to_vec(),
                values: p.value.data().to_vec(),
            });
        }
    }

    /// Overwrites every parameter in `store` from the records named `prefix + name`.
    pub fn restore_into(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let full = format!("{prefix}{}", store.get(id).name);
            let rec = self
                .parameters
                .iter()
                .find(|r| r.name == full)
                .ok_or_else(|| Error::InvalidArgument(format!("checkpoint lacks parameter {full}")))?;
            let t = Tensor::new(rec.shape.clone(), rec.values.clone())?;
            if t.shape() != store.get(id).value.shape() {
                return Err(Error::shape(
                    "checkpoint",
                    format!("{full}: stored {:?}, model {:?}", t.shape(), store.get(id).value.shape()),
                ));
            }
            store.get_mut(id).value = t;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(ckpt.version));
        }
        Ok(ckpt)
    }
}
