use std::f32::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex32;

use super::mel::shared_stft;
use super::{mel_filterbank, MelSpectrogram, Waveform};
use crate::error::{Error, Result};
use crate::{HOP_LENGTH, N_MELS, SAMPLE_RATE};

/// Anything that can turn a log-Mel spectrogram back into audio.
pub trait Vocoder: Send + Sync {
    fn name(&self) -> &str;
    fn synthesize(&self, mel: &MelSpectrogram) -> Result<Waveform>;
}

/// Iterative phase reconstruction (Griffin-Lim) on top of a least-squares
/// inversion of the Mel filterbank.
#[derive(Debug, Clone)]
pub struct GriffinLim {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for GriffinLim {
    fn default() -> Self {
        Self {
            iterations: 60,
            seed: 0,
        }
    }
}

impl Vocoder for GriffinLim {
    fn name(&self) -> &str {
        "griffin-lim"
    }

    fn synthesize(&self, mel: &MelSpectrogram) -> Result<Waveform> {
        griffin_lim(mel, self.iterations, self.seed)
    }
}

/// Phase-reconstruction fallback vocoder producing `T * 256` samples.
pub fn reconstruct_waveform(mel: &MelSpectrogram, iterations: usize) -> Result<Waveform> {
    griffin_lim(mel, iterations, 0)
}

fn filterbank_pinv() -> &'static DMatrix<f32> {
    static PINV: OnceLock<DMatrix<f32>> = OnceLock::new();
    PINV.get_or_init(|| {
        let fb = mel_filterbank();
        let n_bins = fb.len() / N_MELS;
        let m = DMatrix::from_row_slice(N_MELS, n_bins, fb);
        m.pseudo_inverse(1e-6).expect("filterbank pseudo-inverse")
    })
}

/// Linear-frequency magnitudes for each frame, clamped non-negative.
fn mel_to_magnitudes(mel: &MelSpectrogram) -> Vec<Vec<f32>> {
    let pinv = filterbank_pinv();
    mel.rows()
        .map(|row| {
            let energies = nalgebra::DVector::from_iterator(N_MELS, row.iter().map(|v| v.exp()));
            (pinv * energies).iter().map(|&m| m.max(0.0)).collect()
        })
        .collect()
}

fn griffin_lim(mel: &MelSpectrogram, iterations: usize, seed: u64) -> Result<Waveform> {
    if iterations < 1 {
        return Err(Error::Parameter(
            "phase reconstruction needs at least one iteration".into(),
        ));
    }
    let stft = shared_stft();
    let length = mel.n_frames() * HOP_LENGTH;
    let mags = mel_to_magnitudes(mel);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phases: Vec<Vec<Complex32>> = mags
        .iter()
        .map(|col| {
            col.iter()
                .map(|_| Complex32::from_polar(1.0, rng.random_range(-PI..PI)))
                .collect()
        })
        .collect();

    let apply = |phases: &[Vec<Complex32>]| -> Vec<Vec<Complex32>> {
        mags.iter()
            .zip(phases)
            .map(|(m, p)| m.iter().zip(p).map(|(&a, &u)| u * a).collect())
            .collect()
    };

    let mut samples = stft.inverse(&apply(&phases), length);
    for _ in 1..iterations {
        let rebuilt = stft.forward(&samples);
        for (p, col) in phases.iter_mut().zip(&rebuilt) {
            for (u, c) in p.iter_mut().zip(col) {
                let n = c.norm();
                *u = if n > 1e-12 {
                    c / n
                } else {
                    Complex32::new(1.0, 0.0)
                };
            }
        }
        samples = stft.inverse(&apply(&phases), length);
    }
    Ok(Waveform::new(samples, SAMPLE_RATE))
}
