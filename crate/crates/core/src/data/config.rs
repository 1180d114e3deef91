use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{BaselineTrainingConfig, LinearBaselineConfig};
use crate::discriminator::DiscriminatorConfig;
use crate::encoder::{EncoderConfig, EncoderTrainingConfig};
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::training::{TrainingConfig, EMBEDDING_UTTERANCES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// `data/<speaker>/<utt>.wav`.
    pub data_root: PathBuf,
    /// Holds `mels/`, `embeddings/`, `checkpoints/` and `reports/`.
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_root: "data".into(),
            work_dir: "work".into(),
        }
    }
}

impl Paths {
    pub fn mels(&self) -> PathBuf {
        self.work_dir.join("mels")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.work_dir.join("embeddings")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.work_dir.join("checkpoints")
    }

    pub fn reports(&self) -> PathBuf {
        self.work_dir.join("reports")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Utterances averaged into each speaker embedding.
    pub embedding_utterances: usize,
    /// Griffin-Lim iterations for the fallback vocoder.
    pub vocoder_iterations: usize,
    pub speed_seconds: f64,
    /// Include vocoding in the `full` speed stage.
    pub bench_vocoder: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            embedding_utterances: EMBEDDING_UTTERANCES,
            vocoder_iterations: 60,
            speed_seconds: 10.0,
            bench_vocoder: false,
        }
    }
}

/// Everything one run needs. Sections missing from the file keep their
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Only `cpu` is supported.
    pub device: String,
    pub paths: Paths,
    pub training: TrainingConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub encoder: EncoderConfig,
    pub encoder_training: EncoderTrainingConfig,
    pub baseline: LinearBaselineConfig,
    pub baseline_training: BaselineTrainingConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            device: "cpu".into(),
            paths: Paths::default(),
            training: TrainingConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            encoder: EncoderConfig::default(),
            encoder_training: EncoderTrainingConfig::default(),
            baseline: LinearBaselineConfig::default(),
            baseline_training: BaselineTrainingConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copies the run seed into every subsystem, each under its own
    /// namespace, and checks the result.
    pub fn resolved(mut self) -> Result<Self> {
        if self.device != "cpu" {
            return Err(Error::Config(format!("unsupported device {:?}; only cpu is available", self.device)));
        }
        self.training.seed = crate::derive_seed(self.seed, "train");
        self.encoder_training.seed = crate::derive_seed(self.seed, "encoder");
        self.baseline_training.seed = crate::derive_seed(self.seed, "baseline");
        self.training.validate()?;
        if self.discriminator.crop_frames != self.training.fixed_crop_k {
            return Err(Error::Config(format!(
                "discriminator crop {} differs from fixed_crop_k {}",
                self.discriminator.crop_frames, self.training.fixed_crop_k
            )));
        }
        if self.evaluation.embedding_utterances == 0 {
            return Err(Error::Config("embedding_utterances must be at least 1".into()));
        }
        Ok(self)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}
