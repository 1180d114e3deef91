use candle_core::{Device, Tensor};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ge2e::Ge2eHead;
use super::SpeakerEncoder;
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, scalar, Adam, AdamConfig, ParamBuilder, Params};
use crate::N_MELS;

/// All utterances of one speaker.
#[derive(Debug, Clone)]
pub struct SpeakerUtterances {
    pub speaker_id: String,
    pub utterances: Vec<MelSpectrogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderTrainingConfig {
    pub speakers_per_batch: usize,
    pub utterances_per_speaker: usize,
    pub crop_frames: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for EncoderTrainingConfig {
    fn default() -> Self {
        Self {
            speakers_per_batch: 8,
            utterances_per_speaker: 6,
            crop_frames: 128,
            epochs: 8,
            steps_per_epoch: 100,
            lr_start: 4e-4,
            lr_end: 3e-7,
            clip_norm: 3.0,
            seed: 0,
        }
    }
}

impl EncoderTrainingConfig {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    /// Geometric interpolation from `lr_start` (first epoch) to `lr_end`
    /// (last epoch).
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_start;
        }
        let frac = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }

    fn validate(&self) -> Result<()> {
        if self.speakers_per_batch < 2 || self.utterances_per_speaker < 2 {
            return Err(Error::Parameter(
                "GE2E batches need at least 2 speakers and 2 utterances each".into(),
            ));
        }
        if self.crop_frames == 0 {
            return Err(Error::Parameter("crop_frames must be positive".into()));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Parameter(
                "learning rates and clip norm must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderStepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Random `frames`-long window of `mel`. Utterances shorter than the window
/// are tiled end to end first.
pub fn crop_or_repeat<R: Rng + ?Sized>(mel: &MelSpectrogram, frames: usize, rng: &mut R) -> Result<MelSpectrogram> {
    let t = mel.n_frames();
    if frames == 0 {
        return Err(Error::Parameter("crop length must be positive".into()));
    }
    if t == 0 {
        return Err(Error::Parameter("cannot crop an empty spectrogram".into()));
    }
    if t >= frames {
        let start = rng.random_range(0..=t - frames);
        return mel.slice(start, frames);
    }
    let reps = frames.div_ceil(t);
    let total = reps * t;
    let start = rng.random_range(0..=total - frames);
    let mut data = Vec::with_capacity(frames * N_MELS);
    for i in start..start + frames {
        data.extend_from_slice(mel.frame(i % t));
    }
    Ok(MelSpectrogram::new(data, frames)?.with_meta(mel.meta.clone()))
}

/// Trains a copy of `init` with the GE2E objective and returns it together
/// with the per-step log. The input encoder is never modified.
pub fn train_speaker_encoder(
    init: &SpeakerEncoder,
    data: &[SpeakerUtterances],
    config: &EncoderTrainingConfig,
) -> Result<(SpeakerEncoder, Vec<EncoderStepRecord>)> {
    config.validate()?;
    let eligible: Vec<&SpeakerUtterances> = data
        .iter()
        .filter(|s| s.utterances.len() >= config.utterances_per_speaker)
        .collect();
    if eligible.len() < config.speakers_per_batch {
        return Err(Error::Dataset(format!(
            "encoder training needs {} speakers with at least {} utterances each, found {}",
            config.speakers_per_batch,
            config.utterances_per_speaker,
            eligible.len()
        )));
    }
    for s in &eligible {
        for u in &s.utterances {
            u.ensure_finite()?;
        }
    }

    let encoder = init.deep_clone()?;
    let mut log = Vec::new();
    if config.total_steps() == 0 {
        return Ok((encoder, log));
    }

    let dtype = encoder.dtype();
    let mut head_params = Params::new(dtype);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let head = Ge2eHead::new(&mut ParamBuilder::fresh(&mut head_params, &mut rng), 10.0, -5.0)?;
    let adam_cfg = AdamConfig {
        lr: config.lr_start,
        ..AdamConfig::default()
    };
    let mut opt = Adam::new(encoder.params(), adam_cfg)?;
    let mut head_opt = Adam::new(&head_params, adam_cfg)?;
    let mut all_vars = encoder.params().vars();
    all_vars.extend(head_params.vars());

    let (n, m, k) = (config.speakers_per_batch, config.utterances_per_speaker, config.crop_frames);
    for epoch in 0..config.epochs {
        let lr = config.lr_for_epoch(epoch);
        opt.set_lr(lr);
        head_opt.set_lr(lr);
        for _ in 0..config.steps_per_epoch {
            let mut rows = Vec::with_capacity(n * m * k * N_MELS);
            for si in sample(&mut rng, eligible.len(), n) {
                let spk = eligible[si];
                for ui in sample(&mut rng, spk.utterances.len(), m) {
                    rows.extend(crop_or_repeat(&spk.utterances[ui], k, &mut rng)?.into_vec());
                }
            }
            let x = Tensor::from_vec(rows, (n * m, k, N_MELS), &Device::Cpu)?.to_dtype(dtype)?;
            let emb = encoder.forward(&x)?;
            let d = emb.dim(1)?;
            let loss = head.loss(&emb.reshape((n, m, d))?)?;
            let value = scalar(&loss)?;
            if !value.is_finite() {
                return Err(Error::Divergence {
                    step: log.len(),
                    detail: format!("GE2E loss became {value}"),
                    dump: None,
                });
            }
            let mut grads = loss.backward()?;
            let (pre, _) = clip_grad_norm(&mut grads, &all_vars, config.clip_norm)?;
            opt.step(&grads)?;
            head_opt.step(&grads)?;
            // Keep the similarity scale positive.
            let w = head.w.maximum(1e-6)?;
            head_params.assign("w", &w)?;
            log.push(EncoderStepRecord {
                step: log.len(),
                epoch,
                loss: value,
                lr,
                grad_norm: pre,
            });
        }
    }
    Ok((encoder, log))
}
