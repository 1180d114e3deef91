use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{resample, Waveform};
use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

/// Loads a WAV file (16/24/32-bit PCM or 32-bit float), downmixes to mono
/// by averaging channels and resamples to 22050 Hz.
pub fn load_waveform(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| Error::input(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;

    let interleaved: Vec<f32> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::input(path, e))?,
        SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::input(path, e))?
        }
    };
    if interleaved.len() < channels {
        return Err(Error::input(path, "file contains no audio samples"));
    }

    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|c| c.iter().sum::<f32>() / channels as f32)
            .collect()
    };

    let samples = resample(&mono, spec.sample_rate, SAMPLE_RATE);
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

/// Writes mono 16-bit PCM. Samples outside [-1, 1] are clipped.
pub fn save_waveform(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| Error::input(path, e))?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16;
        writer.write_sample(v).map_err(|e| Error::input(path, e))?;
    }
    writer.finalize().map_err(|e| Error::input(path, e))?;
    Ok(())
}
