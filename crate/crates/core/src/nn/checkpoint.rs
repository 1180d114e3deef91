//! Named-tensor checkpoints (safetensors) with a self-describing header.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use candle_core::safetensors::Load;
use candle_core::{Device, Tensor};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metadata stored in the safetensors header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// What the file holds, e.g. `generator`.
    pub kind: String,
    /// Architecture description as JSON; loaders compare it verbatim.
    pub arch: serde_json::Value,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: BTreeMap<String, Tensor>,
}

const HEADER_KEY: &str = "zsvc.header";

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    header: &CheckpointHeader,
    tensors: &BTreeMap<String, Tensor>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Storage(format!("{}: {e}", dir.display())))?;
    }
    let contiguous: Vec<(String, Tensor)> = tensors
        .iter()
        .map(|(k, t)| Ok((k.clone(), t.contiguous()?)))
        .collect::<Result<_>>()?;
    let mut meta = HashMap::new();
    meta.insert(HEADER_KEY.to_string(), serde_json::to_string(header)?);
    safetensors::serialize_to_file(
        contiguous.iter().map(|(k, t)| (k.as_str(), t)),
        Some(meta),
        path,
    )
    .map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let bad = |e: String| Error::Checkpoint(format!("{}: {e}", path.display()));
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(e.to_string()))?;
    let header_json = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(HEADER_KEY))
        .ok_or_else(|| bad("missing architecture header".into()))?;
    let header: CheckpointHeader =
        serde_json::from_str(header_json).map_err(|e| bad(e.to_string()))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| bad(e.to_string()))?;
    let mut tensors = BTreeMap::new();
    for (name, view) in st.tensors() {
        tensors.insert(name, view.load(&Device::Cpu)?);
    }
    Ok(Checkpoint { header, tensors })
}

impl Checkpoint {
    /// Fails unless the file holds `kind` with exactly the `arch` given.
    pub fn expect(&self, kind: &str, arch: &serde_json::Value) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.header.kind
            )));
        }
        if &self.header.arch != arch {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: checkpoint has {}, requested {}",
                self.header.arch, arch
            )));
        }
        Ok(())
    }

    /// Tensors under `prefix.` with the prefix stripped.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let p = format!("{prefix}.");
        self.tensors
            .iter()
            .filter_map(|(k, t)| k.strip_prefix(&p).map(|s| (s.to_string(), t.clone())))
            .collect()
    }
}
