use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;
use crate::encoder::crop_or_repeat;
use crate::error::{Error, Result};
use crate::N_MELS;

/// How crop lengths are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CropPolicy {
    /// Uniform over the listed lengths (models that accept any length).
    Variable(Vec<usize>),
    /// Always the same length (the discriminator needs fixed-size input).
    Fixed(usize),
}

impl CropPolicy {
    pub fn sample_length<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            CropPolicy::Variable(lengths) => *lengths.choose(rng).expect("non-empty crop set"),
            CropPolicy::Fixed(k) => *k,
        }
    }
}

/// A random training window from `mel`, repeat-padded when the utterance is
/// shorter than the chosen length.
pub fn sample_training_crop<R: Rng + ?Sized>(
    mel: &MelSpectrogram,
    policy: &CropPolicy,
    rng: &mut R,
) -> Result<MelSpectrogram> {
    let k = policy.sample_length(rng);
    crop_or_repeat(mel, k, rng)
}

/// The same window taken from two spectrograms (parallel source/target
/// pairs). Both are tiled to at least `k` frames and the start offset is
/// drawn within the shorter one.
pub fn sample_paired_crop<R: Rng + ?Sized>(
    a: &MelSpectrogram,
    b: &MelSpectrogram,
    k: usize,
    rng: &mut R,
) -> Result<(MelSpectrogram, MelSpectrogram)> {
    if k == 0 {
        return Err(Error::Parameter("crop length must be positive".into()));
    }
    let span = |m: &MelSpectrogram| m.n_frames().max(k.div_ceil(m.n_frames()) * m.n_frames());
    let limit = span(a).min(span(b));
    let start = rng.random_range(0..=limit - k);
    let take = |m: &MelSpectrogram| -> Result<MelSpectrogram> {
        let t = m.n_frames();
        let mut data = Vec::with_capacity(k * N_MELS);
        for i in start..start + k {
            data.extend_from_slice(m.frame(i % t));
        }
        Ok(MelSpectrogram::new(data, k)?.with_meta(m.meta.clone()))
    };
    Ok((take(a)?, take(b)?))
}
