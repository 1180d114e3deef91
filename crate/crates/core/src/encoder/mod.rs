//! Speaker encoder: a stacked GRU mapping a spectrogram to a unit-norm
//! 256-d embedding, its GE2E training objective and an embedding cache.

mod cache;
mod embedding;
mod ge2e;
mod train;

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, CheckpointHeader, Gru, Linear, ParamBuilder, Params};
use crate::{EMBEDDING_DIM, N_MELS};

pub use cache::{read_packed, EmbeddingStore, StoredEmbedding};
pub use embedding::SpeakerEmbedding;
pub use ge2e::{ge2e_loss, Ge2eHead};
pub use train::{
    crop_or_repeat, train_speaker_encoder, EncoderStepRecord, EncoderTrainingConfig, SpeakerUtterances,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            layers: 3,
        }
    }
}

/// Stacked GRU followed by a linear projection of the last time step and
/// L2 normalisation.
#[derive(Debug, Clone)]
pub struct SpeakerEncoder {
    config: EncoderConfig,
    params: Params,
    gru: Gru,
    proj: Linear,
}

const CHECKPOINT_KIND: &str = "speaker-encoder";

impl SpeakerEncoder {
    pub fn new(config: EncoderConfig, dtype: DType, seed: u64) -> Result<Self> {
        let mut params = Params::new(dtype);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (gru, proj) = Self::layers(&config, &mut ParamBuilder::fresh(&mut params, &mut rng))?;
        Ok(Self {
            config,
            params,
            gru,
            proj,
        })
    }

    pub fn from_params(config: EncoderConfig, mut params: Params) -> Result<Self> {
        let (gru, proj) = Self::layers(&config, &mut ParamBuilder::existing(&mut params))?;
        Ok(Self {
            config,
            params,
            gru,
            proj,
        })
    }

    fn layers(config: &EncoderConfig, pb: &mut ParamBuilder) -> Result<(Gru, Linear)> {
        if config.layers == 0 || config.hidden == 0 {
            return Err(Error::Parameter("encoder needs at least one non-empty layer".into()));
        }
        let gru = Gru::new(&mut pb.sub("gru"), N_MELS, config.hidden, config.layers)?;
        let proj = Linear::new(&mut pb.sub("proj"), config.hidden, EMBEDDING_DIM)?;
        Ok((gru, proj))
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn deep_clone(&self) -> Result<Self> {
        Self::from_params(self.config.clone(), self.params.deep_clone()?)
    }

    /// `(B, T, 80) -> (B, 256)` with unit-norm rows.
    pub fn forward(&self, mels: &Tensor) -> Result<Tensor> {
        let seq = self.gru.forward(mels)?;
        let t = seq.dim(1)?;
        let last = seq.narrow(1, t - 1, 1)?.squeeze(1)?;
        let e = self.proj.forward(&last)?;
        l2_normalize_rows(&e)
    }

    pub fn encode_utterance(&self, mel: &MelSpectrogram) -> Result<SpeakerEmbedding> {
        mel.ensure_finite()?;
        let x = mel.to_tensor(self.dtype(), &Device::Cpu)?;
        let e = self.forward(&x)?.squeeze(0)?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        let mut emb = SpeakerEmbedding::from_unit(e)?;
        emb.speaker_id = mel.meta.speaker_id.clone();
        Ok(emb)
    }

    /// Mean of the per-utterance embeddings, renormalised to unit length.
    pub fn speaker_embedding(&self, mels: &[MelSpectrogram]) -> Result<SpeakerEmbedding> {
        if mels.is_empty() {
            return Err(Error::Parameter(
                "speaker embedding needs at least one utterance".into(),
            ));
        }
        let each = mels
            .iter()
            .map(|m| self.encode_utterance(m))
            .collect::<Result<Vec<_>>>()?;
        let mut mean = SpeakerEmbedding::mean_of(&each)?;
        mean.speaker_id = mels[0].meta.speaker_id.clone();
        Ok(mean)
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, config_hash: &str) -> Result<()> {
        let header = CheckpointHeader {
            kind: CHECKPOINT_KIND.into(),
            arch: serde_json::to_value(&self.config)?,
            seed,
            config_hash: config_hash.into(),
            extra: Default::default(),
        };
        save_checkpoint(path, &header, &self.params.tensors())
    }

    /// Loads a checkpoint, taking the architecture from its header.
    pub fn load(path: impl AsRef<Path>, dtype: DType) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let config: EncoderConfig = serde_json::from_value(ck.header.arch.clone())
            .map_err(|e| Error::Checkpoint(format!("bad encoder header: {e}")))?;
        ck.expect(CHECKPOINT_KIND, &serde_json::to_value(&config)?)?;
        Self::from_params(config, Params::from_tensors(ck.tensors, dtype)?)
    }
}

pub(crate) fn l2_normalize_rows(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)? + 1e-12)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}
