//! Binary spectrogram container plus JSON sidecar.
//!
//! Layout (little endian): magic `ZMEL`, `u32` version, `u32` rows,
//! `u32` cols, then `rows * cols` `f32` values in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MelMeta, MelSpectrogram};
use crate::error::{Error, Result};
use crate::N_MELS;

const MAGIC: &[u8; 4] = b"ZMEL";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MelSidecar {
    pub speaker_id: Option<String>,
    pub source: Option<String>,
    pub frames: usize,
    pub n_mels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `<path>` and its sidecar `<path>.json` (extension replaced).
pub fn write_mel(
    path: impl AsRef<Path>,
    mel: &MelSpectrogram,
    provenance: Option<(u64, &str)>,
) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(HEADER_LEN + mel.as_slice().len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(mel.n_frames() as u32).to_le_bytes());
    bytes.extend_from_slice(&(N_MELS as u32).to_le_bytes());
    for v in mel.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::input(path, e))?;

    let sidecar = MelSidecar {
        speaker_id: mel.meta.speaker_id.clone(),
        source: mel.meta.source.clone(),
        frames: mel.n_frames(),
        n_mels: N_MELS,
        seed: provenance.map(|p| p.0),
        config_hash: provenance.map(|p| p.1.to_string()),
    };
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::input(&side, e))?;
    Ok(())
}

/// Reads a container; the sidecar is optional and only supplies metadata.
pub fn read_mel(path: impl AsRef<Path>) -> Result<MelSpectrogram> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::input(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::input(path, "not a spectrogram container"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (version, rows, cols) = (word(4), word(8), word(12));
    if version != VERSION as usize {
        return Err(Error::input(path, format!("unsupported version {version}")));
    }
    if cols != N_MELS {
        return Err(Error::input(path, format!("expected {N_MELS} columns, found {cols}")));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != rows * cols * 4 {
        return Err(Error::input(path, "truncated payload"));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut mel = MelSpectrogram::new(data, rows).map_err(|e| Error::input(path, e))?;

    let side = sidecar_path(path);
    if side.exists() {
        let meta: MelSidecar = serde_json::from_slice(&fs::read(&side)?)?;
        if meta.frames != rows {
            return Err(Error::input(&side, "sidecar frame count disagrees with container"));
        }
        mel.meta = MelMeta {
            source: meta.source,
            speaker_id: meta.speaker_id,
        };
    }
    Ok(mel)
}
