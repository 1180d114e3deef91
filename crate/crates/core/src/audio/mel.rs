use std::sync::OnceLock;

use super::{MelMeta, MelSpectrogram, SilenceMask, Stft, Waveform};
use crate::error::{Error, Result};
use crate::{HOP_LENGTH, N_MELS, SAMPLE_RATE, WIN_LENGTH};

/// Magnitudes are clamped to this value before taking the natural log.
pub const MAG_FLOOR: f32 = 1e-5;
/// `ln(MAG_FLOOR)`: the value of every bin of a silent frame.
pub const LOG_FLOOR: f32 = -11.512925;
/// Frames whose mean log-Mel value is strictly above this are non-silent.
pub const SILENCE_THRESHOLD: f64 = -10.0;

pub(crate) fn shared_stft() -> &'static Stft {
    static STFT: OnceLock<Stft> = OnceLock::new();
    STFT.get_or_init(|| Stft::new(WIN_LENGTH, HOP_LENGTH))
}

/// Slaney-style Mel scale: linear below 1 kHz, logarithmic above.
fn hz_to_mel(hz: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = 6.4f64.ln() / 27.0;
    if hz < min_log_hz {
        hz / f_sp
    } else {
        min_log_mel + (hz / min_log_hz).ln() / logstep
    }
}

fn mel_to_hz(mel: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = 6.4f64.ln() / 27.0;
    if mel < min_log_mel {
        mel * f_sp
    } else {
        min_log_hz * (logstep * (mel - min_log_mel)).exp()
    }
}

fn build_filterbank(sr: u32, n_fft: usize, n_mels: usize, fmin: f64, fmax: f64) -> Vec<f32> {
    let n_bins = n_fft / 2 + 1;
    let fft_freqs: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sr as f64 / n_fft as f64)
        .collect();
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = vec![0.0f32; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        // Area normalisation: every triangle integrates to the same value.
        let enorm = 2.0 / (right - left);
        for (k, &f) in fft_freqs.iter().enumerate() {
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            let w = rising.min(falling).max(0.0);
            weights[m * n_bins + k] = (w * enorm) as f32;
        }
    }
    weights
}

/// The `80 x 513` Mel filterbank (row-major), 0 Hz to 11025 Hz.
pub fn mel_filterbank() -> &'static [f32] {
    static FB: OnceLock<Vec<f32>> = OnceLock::new();
    FB.get_or_init(|| {
        build_filterbank(
            SAMPLE_RATE,
            WIN_LENGTH,
            N_MELS,
            0.0,
            SAMPLE_RATE as f64 / 2.0,
        )
    })
}

/// Log-Mel spectrogram: magnitude STFT (1024 window, 256 hop), 80 Mel bands,
/// natural log of magnitudes clamped at [`MAG_FLOOR`].
pub fn mel_spectrogram(wave: &Waveform) -> Result<MelSpectrogram> {
    if wave.is_empty() {
        return Err(Error::InvalidInput("waveform has no samples".into()));
    }
    if wave.sample_rate != SAMPLE_RATE {
        return Err(Error::InvalidInput(format!(
            "waveform is at {} Hz, expected {SAMPLE_RATE}",
            wave.sample_rate
        )));
    }
    let stft = shared_stft();
    let fb = mel_filterbank();
    let n_bins = stft.n_bins();
    let spec = stft.forward(&wave.samples);

    let mut data = Vec::with_capacity(spec.len() * N_MELS);
    let mut mag = vec![0.0f32; n_bins];
    for frame in &spec {
        for (m, c) in mag.iter_mut().zip(frame) {
            *m = c.norm();
        }
        for row in fb.chunks_exact(n_bins) {
            let e: f32 = row.iter().zip(&mag).map(|(w, m)| w * m).sum();
            data.push(e.max(MAG_FLOOR).ln());
        }
    }
    let frames = spec.len();
    Ok(MelSpectrogram::new(data, frames)?.with_meta(MelMeta::default()))
}

/// Marks frames whose mean over the 80 bins is strictly greater than
/// [`SILENCE_THRESHOLD`].
pub fn silence_mask(mel: &MelSpectrogram) -> SilenceMask {
    let flags = mel
        .rows()
        .map(|row| {
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / N_MELS as f64;
            mean > SILENCE_THRESHOLD
        })
        .collect();
    SilenceMask { flags }
}
