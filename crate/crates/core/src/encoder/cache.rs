use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{SpeakerEmbedding, SpeakerEncoder};
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::EMBEDDING_DIM;

const PACKED_MAGIC: &[u8; 4] = b"ZEMB";

/// On-disk record for one speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEmbedding {
    pub speaker_id: String,
    pub vector: Vec<f32>,
    pub source_utterances: Vec<String>,
}

impl StoredEmbedding {
    pub fn embedding(&self) -> Result<SpeakerEmbedding> {
        Ok(SpeakerEmbedding::from_unit(self.vector.clone())?.with_speaker(self.speaker_id.clone()))
    }
}

/// Directory of per-speaker embedding records with an in-memory layer.
/// Many readers may look up embeddings at once; inserts take the write lock.
#[derive(Debug)]
pub struct EmbeddingStore {
    dir: PathBuf,
    entries: RwLock<HashMap<String, StoredEmbedding>>,
    hits: AtomicU64,
    computations: AtomicU64,
}

impl EmbeddingStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        Ok(Self {
            dir,
            entries: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            computations: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Number of lookups answered without running the encoder.
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    /// Number of times the encoder was run.
    pub fn computations(&self) -> u64 {
        self.computations.load(Ordering::SeqCst)
    }

    fn record_path(&self, speaker_id: &str) -> Result<PathBuf> {
        let bad = speaker_id.is_empty()
            || speaker_id.starts_with('.')
            || speaker_id.contains(['/', '\\']);
        if bad {
            return Err(Error::Storage(format!("invalid speaker id {speaker_id:?}")));
        }
        Ok(self.dir.join(format!("{speaker_id}.json")))
    }

    /// Cached embedding for `speaker_id`, if any (memory first, then disk).
    pub fn get(&self, speaker_id: &str) -> Result<Option<StoredEmbedding>> {
        if let Some(e) = self.entries.read().expect("store lock poisoned").get(speaker_id) {
            return Ok(Some(e.clone()));
        }
        let path = self.record_path(speaker_id)?;
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| storage(&path, e))?;
        let rec: StoredEmbedding = serde_json::from_str(&text)
            .map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
        if rec.vector.len() != EMBEDDING_DIM {
            return Err(Error::Storage(format!(
                "{}: embedding has {} values",
                path.display(),
                rec.vector.len()
            )));
        }
        self.entries
            .write()
            .expect("store lock poisoned")
            .insert(speaker_id.to_string(), rec.clone());
        Ok(Some(rec))
    }

    /// Writes a record to disk and memory.
    pub fn put(&self, record: StoredEmbedding) -> Result<()> {
        let path = self.record_path(&record.speaker_id)?;
        let mut entries = self.entries.write().expect("store lock poisoned");
        let json = serde_json::to_string_pretty(&record)?;
        fs::write(&path, json).map_err(|e| storage(&path, e))?;
        entries.insert(record.speaker_id.clone(), record);
        Ok(())
    }

    /// Returns the stored embedding for `speaker_id`, computing it from
    /// `utterances` with `encoder` on the first request only.
    pub fn get_or_compute(
        &self,
        encoder: &SpeakerEncoder,
        speaker_id: &str,
        utterances: &[MelSpectrogram],
    ) -> Result<SpeakerEmbedding> {
        if let Some(rec) = self.get(speaker_id)? {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return rec.embedding();
        }
        self.computations.fetch_add(1, Ordering::SeqCst);
        let emb = encoder.speaker_embedding(utterances)?.with_speaker(speaker_id);
        self.put(StoredEmbedding {
            speaker_id: speaker_id.to_string(),
            vector: emb.as_slice().to_vec(),
            source_utterances: utterances
                .iter()
                .enumerate()
                .map(|(i, u)| u.meta.source.clone().unwrap_or_else(|| format!("#{i}")))
                .collect(),
        })?;
        Ok(emb)
    }

    /// All records currently on disk, sorted by speaker id.
    pub fn all(&self) -> Result<Vec<StoredEmbedding>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(|e| storage(&self.dir, e))? {
            let path = entry.map_err(|e| storage(&self.dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            if let Some(rec) = self.get(&id)? {
                out.push(rec);
            }
        }
        Ok(out)
    }

    /// Bulk export: magic, record count, then per record the id length,
    /// id bytes and 256 little-endian f32 values.
    pub fn export_packed(&self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let records = self.all()?;
        let mut buf = Vec::new();
        buf.extend_from_slice(PACKED_MAGIC);
        buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
        for r in &records {
            buf.extend_from_slice(&(r.speaker_id.len() as u32).to_le_bytes());
            buf.extend_from_slice(r.speaker_id.as_bytes());
            for v in &r.vector {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| storage(path, e))?;
        f.write_all(&buf).map_err(|e| storage(path, e))?;
        Ok(records.len())
    }
}

/// Reads a file written by [`EmbeddingStore::export_packed`].
pub fn read_packed(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f32>)>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| storage(path, e))?;
    let corrupt = || Error::Storage(format!("{}: truncated or corrupt packed embeddings", path.display()));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(corrupt)?;
        pos += n;
        Ok(s)
    };
    if take(4)? != PACKED_MAGIC {
        return Err(corrupt());
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let id = String::from_utf8(take(len)?.to_vec()).map_err(|_| corrupt())?;
        let vector = take(4 * EMBEDDING_DIM)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((id, vector));
    }
    Ok(out)
}

fn storage(path: &Path, e: std::io::Error) -> Error {
    Error::Storage(format!("{}: {e}", path.display()))
}
