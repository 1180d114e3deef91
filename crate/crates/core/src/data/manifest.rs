use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEntry {
    pub speaker_id: String,
    /// `false` for speakers held out of every training run.
    pub seen: bool,
    /// Paths relative to the dataset root.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SpeakerEntry {
    pub fn utterances(&self) -> impl Iterator<Item = (&str, Split)> {
        self.train
            .iter()
            .map(|u| (u.as_str(), Split::Train))
            .chain(self.test.iter().map(|u| (u.as_str(), Split::Test)))
    }
}

/// Same sentence from the baseline's source and target speaker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelEntry {
    pub stem: String,
    pub source: String,
    pub target: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub speakers: Vec<SpeakerEntry>,
    #[serde(default)]
    pub parallel_pairs: Vec<ParallelEntry>,
}

impl DatasetManifest {
    pub fn speaker(&self, id: &str) -> Option<&SpeakerEntry> {
        self.speakers.iter().find(|s| s.speaker_id == id)
    }

    pub fn seen(&self) -> impl Iterator<Item = &SpeakerEntry> {
        self.speakers.iter().filter(|s| s.seen)
    }

    pub fn unseen(&self) -> impl Iterator<Item = &SpeakerEntry> {
        self.speakers.iter().filter(|s| !s.seen)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::Storage(format!("{}: {e}", path.display())))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::input(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::input(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    pub seed: u64,
    pub test_fraction: f64,
    /// Speakers excluded from training (zero-shot evaluation only).
    pub unseen: Vec<String>,
    /// `(source, target)` speakers whose shared utterance stems become
    /// parallel pairs for the baseline.
    pub parallel: Option<(String, String)>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            test_fraction: 0.1,
            unseen: Vec::new(),
            parallel: None,
        }
    }
}

/// Held-out count for `n` utterances: the rounded fraction, but never the
/// whole set.
pub fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1))
}

/// Seeded split of `items` into (train, test), each kept in input order.
pub fn split_items(items: &[String], fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let n_test = test_count(items.len(), fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; items.len()];
    for i in rand::seq::index::sample(&mut rng, items.len(), n_test) {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (item, t) in items.iter().zip(is_test) {
        if t { test.push(item.clone()) } else { train.push(item.clone()) }
    }
    (train, test)
}

fn is_wav(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Scans `root/<speaker>/*.wav`, splits each speaker's utterances and
/// writes `root/manifest.json`.
pub fn ingest_dataset(root: impl AsRef<Path>, options: &IngestOptions) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !(0.0..1.0).contains(&options.test_fraction) {
        return Err(Error::Config(format!("test fraction {} outside [0, 1)", options.test_fraction)));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::input(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Dataset(format!("{} has no speaker directories", root.display())));
    }
    let mut speakers = Vec::with_capacity(dirs.len());
    let mut stems: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for dir in dirs {
        let id = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut files: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::input(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_wav(p))
            .map(|p| format!("{id}/{}", p.file_name().unwrap().to_string_lossy()))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Dataset(format!("speaker {id} has no .wav files")));
        }
        if files.len() == 1 {
            log::warn!("speaker {id} has a single utterance; it goes to the training split");
        }
        for f in &files {
            let stem = Path::new(f).file_stem().unwrap().to_string_lossy().into_owned();
            stems.entry(id.clone()).or_default().insert(stem, f.clone());
        }
        let (train, test) = split_items(&files, options.test_fraction, crate::derive_seed(options.seed, &format!("split/{id}")));
        speakers.push(SpeakerEntry {
            seen: !options.unseen.contains(&id),
            speaker_id: id,
            train,
            test,
        });
    }
    for u in &options.unseen {
        if !speakers.iter().any(|s| &s.speaker_id == u) {
            return Err(Error::Config(format!("unseen speaker {u} not found under {}", root.display())));
        }
    }
    let parallel_pairs = match &options.parallel {
        None => Vec::new(),
        Some((src, trg)) => parallel_pairs(&stems, src, trg, options)?,
    };
    let manifest = DatasetManifest {
        seed: options.seed,
        speakers,
        parallel_pairs,
    };
    manifest.write(root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn parallel_pairs(
    stems: &BTreeMap<String, BTreeMap<String, String>>,
    src: &str,
    trg: &str,
    options: &IngestOptions,
) -> Result<Vec<ParallelEntry>> {
    let lookup = |id: &str| {
        stems
            .get(id)
            .ok_or_else(|| Error::Config(format!("parallel speaker {id} not found")))
    };
    let (a, b) = (lookup(src)?, lookup(trg)?);
    let shared: Vec<String> = a.keys().filter(|k| b.contains_key(*k)).cloned().collect();
    if shared.is_empty() {
        return Err(Error::Dataset(format!("speakers {src} and {trg} share no utterance names")));
    }
    let (_, test) = split_items(&shared, options.test_fraction, crate::derive_seed(options.seed, "split/parallel"));
    Ok(shared
        .into_iter()
        .map(|stem| ParallelEntry {
            split: if test.contains(&stem) { Split::Test } else { Split::Train },
            source: a[&stem].clone(),
            target: b[&stem].clone(),
            stem,
        })
        .collect())
}
