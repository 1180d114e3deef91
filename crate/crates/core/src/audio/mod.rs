//! Waveform loading, log-Mel analysis, silence detection and the fallback
//! phase-reconstruction vocoder.

mod container;
mod mel;
mod resample;
mod stft;
mod vocoder;
mod wav;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{HOP_LENGTH, N_MELS, SAMPLE_RATE};

pub use container::{read_mel, write_mel, MelSidecar};
pub use mel::{mel_filterbank, mel_spectrogram, silence_mask, LOG_FLOOR, MAG_FLOOR, SILENCE_THRESHOLD};
pub use resample::resample;
pub use stft::{Stft, StftFrame};
pub use vocoder::{reconstruct_waveform, GriffinLim, Vocoder};
pub use wav::{load_waveform, save_waveform};

/// Mono audio at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let ss: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (ss / self.samples.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MelMeta {
    pub source: Option<String>,
    pub speaker_id: Option<String>,
}

/// A `T x 80` matrix of log-Mel magnitudes, stored row-major (one row per
/// frame).
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f32>,
    frames: usize,
    pub meta: MelMeta,
}

impl MelSpectrogram {
    /// Wraps a row-major buffer. Only the shape is checked here; the frontend
    /// is responsible for producing finite values and consumers that care
    /// call [`MelSpectrogram::ensure_finite`].
    pub fn new(data: Vec<f32>, frames: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Shape("spectrogram needs at least one frame".into()));
        }
        if data.len() != frames * N_MELS {
            return Err(Error::Shape(format!(
                "buffer of {} values is not {frames} x {N_MELS}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            frames,
            meta: MelMeta::default(),
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * N_MELS);
        for (t, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != N_MELS {
                return Err(Error::Shape(format!(
                    "frame {t} has {} bins, expected {N_MELS}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(data, rows.len())
    }

    pub fn filled(frames: usize, value: f32) -> Result<Self> {
        Self::new(vec![value; frames * N_MELS], frames)
    }

    pub fn with_meta(mut self, meta: MelMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n_frames(&self) -> usize {
        self.frames
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * N_MELS..(t + 1) * N_MELS]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        &mut self.data[t * N_MELS..(t + 1) * N_MELS]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(N_MELS)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Frames per second of audio.
    pub fn frame_rate() -> f64 {
        SAMPLE_RATE as f64 / HOP_LENGTH as f64
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames as f64 / Self::frame_rate()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::InvalidInput(format!(
                "non-finite value at frame {}, bin {}",
                i / N_MELS,
                i % N_MELS
            ))),
        }
    }

    /// Frames `start..start + len`, clamped to the spectrogram.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start >= self.frames || len == 0 {
            return Err(Error::Shape(format!(
                "slice {start}+{len} out of range for {} frames",
                self.frames
            )));
        }
        let end = (start + len).min(self.frames);
        let data = self.data[start * N_MELS..end * N_MELS].to_vec();
        Ok(Self {
            data,
            frames: end - start,
            meta: self.meta.clone(),
        })
    }

    /// Tensor of shape `(1, T, 80)`.
    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        let t = Tensor::from_slice(&self.data, (1, self.frames, N_MELS), device)?;
        Ok(t.to_dtype(dtype)?)
    }

    /// Accepts `(T, 80)` or `(1, T, 80)`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let t = match t.rank() {
            2 => t.clone(),
            3 if t.dim(0)? == 1 => t.squeeze(0)?,
            _ => {
                return Err(Error::Shape(format!(
                    "cannot read a spectrogram from shape {:?}",
                    t.dims()
                )))
            }
        };
        let (frames, bins) = t.dims2()?;
        if bins != N_MELS {
            return Err(Error::Shape(format!("expected {N_MELS} bins, got {bins}")));
        }
        let data = t
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        Self::new(data, frames)
    }
}

/// Per-frame non-silence flags; `true` marks a non-silent frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SilenceMask {
    pub flags: Vec<bool>,
}

impl SilenceMask {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn non_silent(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}
