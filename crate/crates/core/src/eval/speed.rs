use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audio::{mel_spectrogram, Vocoder};
use crate::encoder::SpeakerEncoder;
use crate::error::{Error, Result};
use crate::generator::{convert_mel, ConditioningPair, Converter};
use crate::synthetic::speech_like_waveform;
use crate::SpeakerEmbedding;

pub const MIN_WARMUP_RUNS: usize = 2;
pub const MIN_TIMED_RUNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineStage {
    Generator,
    Encoder,
    Frontend,
    Full,
}

impl fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Generator => "generator",
            Self::Encoder => "encoder",
            Self::Frontend => "frontend",
            Self::Full => "full",
        })
    }
}

impl FromStr for PipelineStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generator" => Ok(Self::Generator),
            "encoder" => Ok(Self::Encoder),
            "frontend" => Ok(Self::Frontend),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!(
                "unknown stage {other:?} (expected generator, encoder, frontend or full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedResult {
    pub stage: PipelineStage,
    pub audio_seconds: f64,
    pub run_ms: Vec<f64>,
    pub median_ms: f64,
    pub ms_per_second: f64,
}

/// Runs `work` `warmup` times untimed, then `runs` times timed. Reports the
/// median wall-clock time divided by the audio duration.
pub fn time_per_audio_second<F>(
    stage: PipelineStage,
    audio_seconds: f64,
    warmup: usize,
    runs: usize,
    mut work: F,
) -> Result<SpeedResult>
where
    F: FnMut() -> Result<()>,
{
    if !(audio_seconds > 0.0) {
        return Err(Error::Parameter(format!("audio length must be positive, got {audio_seconds}")));
    }
    for _ in 0..warmup.max(MIN_WARMUP_RUNS) {
        work()?;
    }
    let mut run_ms = Vec::with_capacity(runs);
    for _ in 0..runs.max(MIN_TIMED_RUNS) {
        let start = Instant::now();
        work()?;
        run_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let median_ms = median(&run_ms);
    Ok(SpeedResult {
        stage,
        audio_seconds,
        run_ms,
        median_ms,
        ms_per_second: median_ms / audio_seconds,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Models exercised by [`speed_benchmark`]. The vocoder only runs in the
/// `full` stage and only when provided.
pub struct BenchModels<'a> {
    pub generator: &'a dyn Converter,
    pub encoder: &'a SpeakerEncoder,
    pub vocoder: Option<&'a dyn Vocoder>,
}

/// Times one pipeline stage on a synthetic utterance of `audio_seconds`.
pub fn speed_benchmark(
    models: &BenchModels<'_>,
    stage: PipelineStage,
    audio_seconds: f64,
    warmup: usize,
    runs: usize,
) -> Result<SpeedResult> {
    let wave = speech_like_waveform(audio_seconds, 17);
    let audio_seconds = wave.duration_secs();
    let mel = mel_spectrogram(&wave)?;
    let target = models.encoder.encode_utterance(&mel_spectrogram(&speech_like_waveform(1.0, 18))?)?;
    let pair = ConditioningPair::new(models.encoder.encode_utterance(&mel)?, target.clone());
    let convert = |m: &crate::MelSpectrogram, p: &ConditioningPair| convert_mel(models.generator, m, p);
    match stage {
        PipelineStage::Frontend => time_per_audio_second(stage, audio_seconds, warmup, runs, || {
            mel_spectrogram(&wave).map(drop)
        }),
        PipelineStage::Encoder => time_per_audio_second(stage, audio_seconds, warmup, runs, || {
            models.encoder.encode_utterance(&mel).map(drop)
        }),
        PipelineStage::Generator => time_per_audio_second(stage, audio_seconds, warmup, runs, || {
            convert(&mel, &pair).map(drop)
        }),
        PipelineStage::Full => time_per_audio_second(stage, audio_seconds, warmup, runs, || {
            let m = mel_spectrogram(&wave)?;
            let s: SpeakerEmbedding = models.encoder.encode_utterance(&m)?;
            let out = convert(&m, &ConditioningPair::new(s, target.clone()))?;
            if let Some(v) = models.vocoder {
                v.synthesize(&out)?;
            }
            Ok(())
        }),
    }
}
