//! Deterministic synthetic speakers and speech-like signals for tests,
//! examples and toy training runs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::{MelMeta, MelSpectrogram, Waveform, LOG_FLOOR};
use crate::{N_MELS, SAMPLE_RATE};

/// A speaker defined by a smooth log-Mel spectral envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub seed: u64,
    pub envelope: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UtteranceSpec {
    pub frames: usize,
    pub seed: u64,
}

/// Mean log level of voiced frames.
const VOICED_LEVEL: f64 = -4.0;

impl SyntheticSpeaker {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let tilt = rng.random_range(-1.5..1.5);
        let mut envelope = vec![0.0f64; N_MELS];
        for _ in 0..3 {
            let centre = rng.random_range(5.0..75.0);
            let width = rng.random_range(3.0..9.0);
            let height = rng.random_range(0.8..2.2);
            for (b, e) in envelope.iter_mut().enumerate() {
                *e += height * (-0.5 * ((b as f64 - centre) / width).powi(2)).exp();
            }
        }
        for (b, e) in envelope.iter_mut().enumerate() {
            *e += tilt * (b as f64 / (N_MELS - 1) as f64 - 0.5);
        }
        let mean = envelope.iter().sum::<f64>() / N_MELS as f64;
        Self {
            seed,
            envelope: envelope.iter().map(|e| (e - mean) as f32).collect(),
        }
    }

    /// Log-Mel utterance: envelope plus a random phone-like excitation
    /// sequence and frame noise, with silent lead-in, tail and pauses.
    pub fn utterance(&self, spec: &UtteranceSpec) -> MelSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ self.seed);
        let noise = Normal::new(0.0, 0.15).unwrap();
        let frames = spec.frames.max(1);
        let lead = if frames >= 16 { 2 } else { 0 };
        let mut data = Vec::with_capacity(frames * N_MELS);
        let mut t = 0;
        while t < frames {
            let seg = rng.random_range(3..=8).min(frames - t);
            let silent = t < lead || t + seg > frames - lead || rng.random_bool(0.08);
            let content = phone_pattern(&mut rng);
            for _ in 0..seg {
                for b in 0..N_MELS {
                    let v = if silent {
                        LOG_FLOOR as f64 + 0.3 * rng.random::<f64>()
                    } else {
                        VOICED_LEVEL + self.envelope[b] as f64 + content[b] + noise.sample(&mut rng)
                    };
                    data.push(v.max(LOG_FLOOR as f64) as f32);
                }
            }
            t += seg;
        }
        MelSpectrogram::new(data, frames)
            .expect("synthetic utterance shape")
            .with_meta(MelMeta {
                source: Some(format!("synthetic-{}-{}", self.seed, spec.seed)),
                speaker_id: Some(format!("spk{}", self.seed)),
            })
    }

    /// `count` utterances of `frames` frames with seeds `base_seed..`.
    pub fn utterances(&self, count: usize, frames: usize, base_seed: u64) -> Vec<MelSpectrogram> {
        (0..count as u64)
            .map(|i| self.utterance(&UtteranceSpec { frames, seed: base_seed + i }))
            .collect()
    }
}

fn phone_pattern(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p = vec![0.0; N_MELS];
    for _ in 0..2 {
        let centre = rng.random_range(0.0..N_MELS as f64);
        let width = rng.random_range(4.0..12.0);
        let height = rng.random_range(-1.0..1.0);
        for (b, v) in p.iter_mut().enumerate() {
            *v += height * (-0.5 * ((b as f64 - centre) / width).powi(2)).exp();
        }
    }
    p
}

/// Source-filter parameters of a synthetic voice.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub f0: f64,
    /// (centre Hz, bandwidth Hz) pairs.
    pub formants: Vec<(f64, f64)>,
}

impl VoiceProfile {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf0f0);
        Self {
            f0: rng.random_range(95.0..230.0),
            formants: vec![
                (rng.random_range(400.0..900.0), 120.0),
                (rng.random_range(1100.0..2200.0), 180.0),
                (rng.random_range(2400.0..3300.0), 250.0),
            ],
        }
    }
}

/// Harmonic signal shaped by formant resonances with a syllable-rate
/// amplitude envelope and short pauses. Peak amplitude stays below 1.
pub fn speech_like_waveform(secs: f64, seed: u64) -> Waveform {
    voice_waveform(&VoiceProfile::from_seed(seed), secs, seed)
}

pub fn voice_waveform(voice: &VoiceProfile, secs: f64, seed: u64) -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let n = (secs * sr).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let syllable_hz = rng.random_range(3.0..5.0);
    let vibrato = rng.random_range(0.0..2.0 * PI);
    let n_harm = (5000.0 / voice.f0) as usize;
    let gains: Vec<f64> = (1..=n_harm)
        .map(|k| {
            let f = k as f64 * voice.f0;
            let shaped: f64 = voice
                .formants
                .iter()
                .map(|&(c, bw)| (-0.5 * ((f - c) / bw).powi(2)).exp())
                .sum();
            (0.05 + shaped) / (k as f64).sqrt()
        })
        .collect();
    let norm: f64 = gains.iter().sum();
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let f0 = voice.f0 * (1.0 + 0.05 * (2.0 * PI * 1.3 * t + vibrato).sin());
        phase += 2.0 * PI * f0 / sr;
        let mut v = 0.0;
        for (k, g) in gains.iter().enumerate() {
            v += g * ((k + 1) as f64 * phase).sin();
        }
        let syl = (PI * syllable_hz * t).sin().abs();
        // Gate the quietest part of every second syllable into a pause.
        let cycle = (syllable_hz * t) as usize;
        let amp = if cycle % 2 == 1 && syl < 0.35 { 0.0 } else { syl.powf(0.5) };
        samples.push((0.6 * amp * v / norm) as f32);
    }
    Waveform::new(samples, SAMPLE_RATE)
}
