use serde::{Deserialize, Serialize};

use super::dtw::dtw_align;
use super::metrics::{aligned_metrics, FrameMetrics};
use crate::audio::{silence_mask, MelSpectrogram};
use crate::encoder::SpeakerEncoder;
use crate::error::Result;
use crate::generator::{convert_mel, ConditioningPair, Converter};

/// `‖E(converted) − E(target)‖₂` over unit-norm embeddings, so always in `[0, 2]`.
pub fn speaker_similarity(
    encoder: &SpeakerEncoder,
    converted: &MelSpectrogram,
    target: &MelSpectrogram,
) -> Result<f64> {
    let a = encoder.encode_utterance(converted)?;
    let b = encoder.encode_utterance(target)?;
    Ok(a.distance(&b))
}

/// Frame metrics together with the embedding distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub mae: f64,
    pub mse: f64,
    pub cos_theta: f64,
    pub e_norm: f64,
    pub frames_evaluated: usize,
}

impl PairMetrics {
    pub fn new(frames: FrameMetrics, e_norm: f64) -> Self {
        Self {
            mae: frames.mae,
            mse: frames.mse,
            cos_theta: frames.cos_theta,
            e_norm,
            frames_evaluated: frames.frames_evaluated,
        }
    }
}

/// DTW alignment, target-masked frame metrics and `e_norm` in one call.
pub fn compare(
    encoder: &SpeakerEncoder,
    converted: &MelSpectrogram,
    target: &MelSpectrogram,
) -> Result<PairMetrics> {
    let path = dtw_align(converted, target);
    let frames = aligned_metrics(converted, target, &path, &silence_mask(target))?;
    Ok(PairMetrics::new(frames, speaker_similarity(encoder, converted, target)?))
}

/// Maps `x_src` to the target speaker and back, then scores the
/// reconstruction against `x_src` itself.
pub fn cyclic_reconstruction_eval<C: Converter + ?Sized>(
    converter: &C,
    encoder: &SpeakerEncoder,
    x_src: &MelSpectrogram,
    pair: &ConditioningPair,
) -> Result<PairMetrics> {
    let there = convert_mel(converter, x_src, pair)?;
    let back = convert_mel(converter, &there, &pair.swapped())?;
    compare(encoder, &back, x_src)
}
