//! Command implementations behind the CLI: preprocessing, the three
//! training commands, conversion, evaluation and benchmarking. All paths
//! come from a [`RunConfig`]; see [`Paths`](crate::data::Paths) for the
//! working-directory layout.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use crate::audio::{load_waveform, mel_spectrogram, read_mel, reconstruct_waveform, save_waveform, write_mel, GriffinLim};
use crate::baseline::{
    linear_convert, train_linear_baseline, BaselineStepRecord, LinearBaseline, ParallelCorpus, ParallelPair,
};
use crate::data::{ingest_dataset, DatasetManifest, IngestOptions, RunConfig, Split, MANIFEST_FILE};
use crate::encoder::{
    train_speaker_encoder, EmbeddingStore, EncoderStepRecord, SpeakerEncoder, SpeakerUtterances,
};
use crate::error::{Error, Result};
use crate::eval::{
    compare, cyclic_reconstruction_eval, speed_benchmark, write_csv, BenchModels, MetricsBlock, MetricsReport,
    PairRecord, PipelineStage, SpeedResult,
};
use crate::generator::{ConditioningPair, Generator};
use crate::training::{
    train_stargan_zsvc, NonParallelDataset, RunOutputs, StepRecord, TrainingState, GENERATOR_FILE, STATE_FILE,
};
use crate::{derive_seed, MelSpectrogram, SpeakerEmbedding, EMBEDDING_DIM};

pub const ENCODER_FILE: &str = "encoder.safetensors";
pub const BASELINE_FILE: &str = "baseline.safetensors";
pub const MEL_EXTENSION: &str = "zmel";

/// Process exit status for an error: 2 for configuration problems, 3 for
/// data problems, 4 for numeric divergence and 1 for anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Scheduling(_) => 2,
        Error::Input { .. }
        | Error::InvalidInput(_)
        | Error::Dataset(_)
        | Error::Storage(_)
        | Error::Checkpoint(_)
        | Error::Evaluation(_) => 3,
        Error::Divergence { .. } => 4,
        _ => 1,
    }
}

fn require(path: PathBuf, hint: &str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Config(format!("missing checkpoint {} ({hint})", path.display())))
    }
}

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.data_root.join(MANIFEST_FILE)
}

pub fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = manifest_path(cfg);
    if !path.is_file() {
        return Err(Error::Config(format!("no manifest at {} (run preprocess first)", path.display())));
    }
    DatasetManifest::read(path)
}

/// `work/mels/<speaker>/<stem>.zmel` for a manifest entry `<speaker>/<file>`.
pub fn mel_path(cfg: &RunConfig, utterance: &str) -> PathBuf {
    cfg.paths.mels().join(utterance).with_extension(MEL_EXTENSION)
}

pub fn load_mels(cfg: &RunConfig, utterances: &[String]) -> Result<Vec<MelSpectrogram>> {
    utterances.iter().map(|u| read_mel(mel_path(cfg, u))).collect()
}

/// Scans the data root, writes the manifest and converts every utterance to
/// a log-Mel container. Files are spread over the available cores; output
/// names depend only on the input names.
pub fn preprocess(cfg: &RunConfig, options: &IngestOptions) -> Result<DatasetManifest> {
    let manifest = ingest_dataset(&cfg.paths.data_root, options)?;
    let jobs: Vec<(String, String)> = manifest
        .speakers
        .iter()
        .flat_map(|s| s.utterances().map(|(u, _)| (s.speaker_id.clone(), u.to_string())))
        .collect();
    let hash = cfg.hash();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                let hash = &hash;
                scope.spawn(move || -> Result<()> {
                    for (speaker, utt) in part {
                        let wave = load_waveform(cfg.paths.data_root.join(utt))?;
                        let mut mel = mel_spectrogram(&wave)?;
                        mel.meta.speaker_id = Some(speaker.clone());
                        mel.meta.source = Some(utt.clone());
                        let out = mel_path(cfg, utt);
                        if let Some(dir) = out.parent() {
                            fs::create_dir_all(dir)?;
                        }
                        write_mel(&out, &mel, Some((cfg.seed, hash)))?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("preprocessing worker panicked"))
    })?;
    log::info!("preprocessed {} utterances from {} speakers", jobs.len(), manifest.speakers.len());
    Ok(manifest)
}

fn write_ndjson<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Trains the speaker encoder on the training split of every speaker.
/// Cached embeddings from an earlier encoder are discarded.
pub fn train_encoder_command(cfg: &RunConfig) -> Result<Vec<EncoderStepRecord>> {
    let manifest = load_manifest(cfg)?;
    let data = manifest
        .speakers
        .iter()
        .map(|s| {
            Ok(SpeakerUtterances {
                speaker_id: s.speaker_id.clone(),
                utterances: load_mels(cfg, &s.train)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let init = SpeakerEncoder::new(cfg.encoder.clone(), DType::F32, derive_seed(cfg.seed, "encoder-init"))?;
    let (encoder, log) = train_speaker_encoder(&init, &data, &cfg.encoder_training)?;
    let dir = cfg.paths.checkpoints();
    fs::create_dir_all(&dir)?;
    encoder.save(dir.join(ENCODER_FILE), cfg.seed, &cfg.hash())?;
    write_ndjson(&dir.join("encoder-log.ndjson"), &log)?;
    let cache = cfg.paths.embeddings();
    if cache.exists() {
        fs::remove_dir_all(&cache)?;
    }
    Ok(log)
}

pub fn load_encoder(cfg: &RunConfig) -> Result<SpeakerEncoder> {
    let path = require(cfg.paths.checkpoints().join(ENCODER_FILE), "run train-encoder first")?;
    SpeakerEncoder::load(path, DType::F32)
}

pub fn load_generator(cfg: &RunConfig) -> Result<Generator> {
    let path = require(cfg.paths.checkpoints().join(GENERATOR_FILE), "run train first")?;
    Generator::load(path, DType::F32)
}

/// Trains the conversion GAN on the seen speakers, resuming from the
/// rolling checkpoint when one exists.
pub fn train_command(cfg: &RunConfig) -> Result<Vec<StepRecord>> {
    let manifest = load_manifest(cfg)?;
    let encoder = load_encoder(cfg)?;
    let speakers = manifest
        .seen()
        .map(|s| {
            Ok(SpeakerUtterances {
                speaker_id: s.speaker_id.clone(),
                utterances: load_mels(cfg, &s.train)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = NonParallelDataset::with_encoder(&encoder, speakers)?;
    let dir = cfg.paths.checkpoints();
    let state_path = dir.join(STATE_FILE);
    let mut state = if state_path.is_file() {
        log::info!("resuming from {}", state_path.display());
        TrainingState::load(&state_path, &cfg.training)?
    } else {
        TrainingState::new(cfg.generator.clone(), cfg.discriminator.clone(), &cfg.training)?
    };
    let out = RunOutputs {
        log_path: Some(dir.join("train-log.ndjson")),
        checkpoint_dir: Some(dir),
        config_hash: cfg.hash(),
    };
    train_stargan_zsvc(&mut state, &data, &cfg.training, &out)
}

fn parallel_corpus(cfg: &RunConfig, manifest: &DatasetManifest, split: Split) -> Result<ParallelCorpus> {
    let pairs = manifest
        .parallel_pairs
        .iter()
        .filter(|p| p.split == split)
        .map(|p| {
            Ok(ParallelPair {
                id: p.stem.clone(),
                source: read_mel(mel_path(cfg, &p.source))?,
                target: read_mel(mel_path(cfg, &p.target))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParallelCorpus::new(pairs))
}

/// Trains the linear one-to-one baseline on the manifest's parallel pairs,
/// using the held-out pairs for early stopping.
pub fn train_baseline_command(cfg: &RunConfig) -> Result<Vec<BaselineStepRecord>> {
    let manifest = load_manifest(cfg)?;
    if manifest.parallel_pairs.is_empty() {
        return Err(Error::Dataset(
            "manifest has no parallel pairs (preprocess with a parallel speaker pair)".into(),
        ));
    }
    let train = parallel_corpus(cfg, &manifest, Split::Train)?;
    let val = parallel_corpus(cfg, &manifest, Split::Test)?;
    let mut model = LinearBaseline::new(cfg.baseline.clone(), DType::F32, derive_seed(cfg.seed, "baseline-init"))?;
    let log = train_linear_baseline(&mut model, &train, (!val.is_empty()).then_some(&val), &cfg.baseline_training)?;
    let dir = cfg.paths.checkpoints();
    fs::create_dir_all(&dir)?;
    model.save(dir.join(BASELINE_FILE), cfg.seed, &cfg.hash())?;
    write_ndjson(&dir.join("baseline-log.ndjson"), &log)?;
    Ok(log)
}

/// Where a conversion embedding comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSource {
    /// WAV files of the speaker; the first `embedding_utterances` are averaged.
    Utterances(Vec<PathBuf>),
    /// JSON array holding a 256-d unit vector.
    Vector(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ConvertRequest {
    pub source_wav: PathBuf,
    pub source: EmbeddingSource,
    pub target: EmbeddingSource,
    /// Output stem; `.wav`, `.zmel` and `.json` are appended.
    pub output: PathBuf,
    pub vocode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProvenance {
    pub source: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertProvenance {
    pub input: String,
    pub generator_checkpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_checkpoint: Option<String>,
    pub source_embedding: EmbeddingProvenance,
    pub target_embedding: EmbeddingProvenance,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocoder: Option<String>,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct ConvertOutcome {
    pub converted: MelSpectrogram,
    pub mel_path: PathBuf,
    pub wav_path: Option<PathBuf>,
    pub provenance_path: PathBuf,
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Reads a raw embedding vector; a wrong length is reported as a
/// checkpoint incompatibility.
pub fn read_embedding_vector(path: &Path) -> Result<SpeakerEmbedding> {
    let bytes = fs::read(path).map_err(|e| Error::input(path, e))?;
    let v: Vec<f32> = serde_json::from_slice(&bytes).map_err(|e| Error::input(path, e))?;
    if v.len() != EMBEDDING_DIM {
        return Err(Error::Checkpoint(format!(
            "{} holds a {}-d embedding; the models use {EMBEDDING_DIM}",
            path.display(),
            v.len()
        )));
    }
    SpeakerEmbedding::from_unit(v).map_err(|e| Error::input(path, e))
}

fn resolve_embedding(
    cfg: &RunConfig,
    source: &EmbeddingSource,
    encoder: &mut Option<SpeakerEncoder>,
) -> Result<(SpeakerEmbedding, String)> {
    match source {
        EmbeddingSource::Vector(path) => Ok((read_embedding_vector(path)?, path.display().to_string())),
        EmbeddingSource::Utterances(paths) => {
            if paths.is_empty() {
                return Err(Error::Config("no utterances given for a speaker embedding".into()));
            }
            if encoder.is_none() {
                *encoder = Some(load_encoder(cfg)?);
            }
            let used = &paths[..paths.len().min(cfg.evaluation.embedding_utterances)];
            let mels = used
                .iter()
                .map(|p| mel_spectrogram(&load_waveform(p)?))
                .collect::<Result<Vec<_>>>()?;
            let emb = encoder.as_ref().unwrap().speaker_embedding(&mels)?;
            let names: Vec<String> = used.iter().map(|p| p.display().to_string()).collect();
            Ok((emb, names.join(",")))
        }
    }
}

/// Converts one WAV file. Never touches trainable state and never needs a
/// parallel target utterance.
pub fn convert_command(cfg: &RunConfig, req: &ConvertRequest) -> Result<ConvertOutcome> {
    let g_path = require(cfg.paths.checkpoints().join(GENERATOR_FILE), "run train first")?;
    let generator = Generator::load(&g_path, DType::F32)?;
    let mut encoder = None;
    let (s_src, src_desc) = resolve_embedding(cfg, &req.source, &mut encoder)?;
    let (s_trg, trg_desc) = resolve_embedding(cfg, &req.target, &mut encoder)?;
    let mel = mel_spectrogram(&load_waveform(&req.source_wav)?)?;
    let pair = ConditioningPair::new(s_src, s_trg);
    let converted = generator.generate_padded(&mel, &pair)?;

    if let Some(dir) = req.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let hash = cfg.hash();
    let mel_path = with_suffix(&req.output, MEL_EXTENSION);
    write_mel(&mel_path, &converted, Some((cfg.seed, &hash)))?;
    let wav_path = if req.vocode {
        let wave = reconstruct_waveform(&converted, cfg.evaluation.vocoder_iterations)?;
        let p = with_suffix(&req.output, "wav");
        save_waveform(&p, &wave)?;
        Some(p)
    } else {
        None
    };
    let provenance = ConvertProvenance {
        input: req.source_wav.display().to_string(),
        generator_checkpoint: g_path.display().to_string(),
        encoder_checkpoint: encoder
            .is_some()
            .then(|| cfg.paths.checkpoints().join(ENCODER_FILE).display().to_string()),
        source_embedding: EmbeddingProvenance {
            source: src_desc,
            vector: pair.s_src.as_slice().to_vec(),
        },
        target_embedding: EmbeddingProvenance {
            source: trg_desc,
            vector: pair.s_trg.as_slice().to_vec(),
        },
        frames: converted.n_frames(),
        vocoder: req
            .vocode
            .then(|| format!("griffin-lim/{}", cfg.evaluation.vocoder_iterations)),
        seed: cfg.seed,
        config_hash: hash,
    };
    let provenance_path = with_suffix(&req.output, "json");
    fs::write(&provenance_path, serde_json::to_vec_pretty(&provenance)?)?;
    Ok(ConvertOutcome {
        converted,
        mel_path,
        wav_path,
        provenance_path,
    })
}

/// Source/target grouping of an evaluation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    SeenToSeen,
    SeenToUnseen,
    UnseenToSeen,
    UnseenToUnseen,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting::SeenToSeen,
        Setting::SeenToUnseen,
        Setting::UnseenToSeen,
        Setting::UnseenToUnseen,
    ];

    /// Grouping of a (source seen, target seen) pair.
    pub fn of(source_seen: bool, target_seen: bool) -> Self {
        match (source_seen, target_seen) {
            (true, true) => Setting::SeenToSeen,
            (true, false) => Setting::SeenToUnseen,
            (false, true) => Setting::UnseenToSeen,
            (false, false) => Setting::UnseenToUnseen,
        }
    }

    pub fn involves_unseen(self) -> bool {
        self != Setting::SeenToSeen
    }

    fn sides(self) -> (bool, bool) {
        match self {
            Setting::SeenToSeen => (true, true),
            Setting::SeenToUnseen => (true, false),
            Setting::UnseenToSeen => (false, true),
            Setting::UnseenToUnseen => (false, false),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::SeenToSeen => "seen-to-seen",
            Setting::SeenToUnseen => "seen-to-unseen",
            Setting::UnseenToSeen => "unseen-to-seen",
            Setting::UnseenToUnseen => "unseen-to-unseen",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown evaluation setting {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    /// The embedding-conditioned conversion GAN.
    Stargan,
    /// The linear one-to-one baseline.
    Linear,
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelId::Stargan => "stargan",
            ModelId::Linear => "linear",
        })
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stargan" => Ok(ModelId::Stargan),
            "linear" => Ok(ModelId::Linear),
            other => Err(Error::Config(format!("unknown model {other:?} (expected stargan or linear)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateRequest {
    pub model: ModelId,
    /// Ignored for the linear baseline, which only knows its own pair.
    pub settings: Vec<Setting>,
    pub reconstruction: bool,
    pub speed: bool,
}

impl Default for EvaluateRequest {
    fn default() -> Self {
        Self {
            model: ModelId::Stargan,
            settings: Setting::ALL.to_vec(),
            reconstruction: true,
            speed: false,
        }
    }
}

/// The target speaker's rendition of the same sentence, if any.
fn matching_utterance<'a>(entry: &'a crate::data::SpeakerEntry, stem: &str) -> Option<&'a str> {
    entry
        .utterances()
        .map(|(u, _)| u)
        .find(|u| Path::new(u).file_stem().is_some_and(|s| s == stem))
}

fn stem_of(utterance: &str) -> String {
    Path::new(utterance)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Evaluates on the test split and writes one JSON report per setting plus
/// a CSV summary to the reports directory.
pub fn evaluate_command(cfg: &RunConfig, req: &EvaluateRequest) -> Result<Vec<MetricsReport>> {
    let manifest = load_manifest(cfg)?;
    let encoder = load_encoder(cfg)?;
    let reports = match req.model {
        ModelId::Stargan => evaluate_stargan(cfg, &manifest, &encoder, req)?,
        ModelId::Linear => vec![evaluate_linear(cfg, &manifest, &encoder)?],
    };
    let dir = cfg.paths.reports();
    fs::create_dir_all(&dir)?;
    for r in &reports {
        r.write_json(dir.join(format!("{}-{}.json", req.model, r.setting)))?;
    }
    write_csv(&reports, dir.join(format!("{}.csv", req.model)))?;
    Ok(reports)
}

fn evaluate_stargan(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    encoder: &SpeakerEncoder,
    req: &EvaluateRequest,
) -> Result<Vec<MetricsReport>> {
    if req.settings.iter().any(|s| s.involves_unseen()) && manifest.unseen().next().is_none() {
        return Err(Error::Config(
            "an unseen setting was requested but the manifest has no unseen speakers".into(),
        ));
    }
    let generator = load_generator(cfg)?;
    let store = EmbeddingStore::open(cfg.paths.embeddings())?;
    let n_emb = cfg.evaluation.embedding_utterances;
    let embedding = |id: &str| -> Result<SpeakerEmbedding> {
        let entry = manifest.speaker(id).expect("speaker from manifest");
        let pool = if entry.train.is_empty() { &entry.test } else { &entry.train };
        let mels = load_mels(cfg, &pool[..pool.len().min(n_emb)])?;
        store.get_or_compute(encoder, id, &mels)
    };
    let speed = if req.speed {
        let models = BenchModels {
            generator: &generator,
            encoder,
            vocoder: None,
        };
        Some(speed_benchmark(&models, PipelineStage::Generator, cfg.evaluation.speed_seconds, 2, 5)?.ms_per_second)
    } else {
        None
    };
    let mut reports = Vec::new();
    for &setting in &req.settings {
        let (src_seen, trg_seen) = setting.sides();
        let mut conv = Vec::new();
        let mut recon = Vec::new();
        for src in manifest.speakers.iter().filter(|s| s.seen == src_seen) {
            for trg in manifest.speakers.iter().filter(|s| s.seen == trg_seen) {
                if src.speaker_id == trg.speaker_id {
                    continue;
                }
                let pair = ConditioningPair::new(embedding(&src.speaker_id)?, embedding(&trg.speaker_id)?);
                for utt in &src.test {
                    let stem = stem_of(utt);
                    let Some(target_utt) = matching_utterance(trg, &stem) else {
                        log::warn!("{} has no rendition of {stem}; skipping", trg.speaker_id);
                        continue;
                    };
                    let x = read_mel(mel_path(cfg, utt))?;
                    let y = read_mel(mel_path(cfg, target_utt))?;
                    let converted = generator.generate_padded(&x, &pair)?;
                    let m = compare(encoder, &converted, &y)?;
                    conv.push(PairRecord::new(&src.speaker_id, &trg.speaker_id, &stem, m));
                    if req.reconstruction {
                        let r = cyclic_reconstruction_eval(&generator, encoder, &x, &pair)?;
                        recon.push(PairRecord::new(&src.speaker_id, &trg.speaker_id, &stem, r));
                    }
                }
            }
        }
        if conv.is_empty() {
            return Err(Error::Evaluation(format!(
                "{setting}: no test utterance has a matching target rendition"
            )));
        }
        reports.push(MetricsReport {
            setting: setting.to_string(),
            conversion: MetricsBlock::new(conv)?,
            reconstruction: if recon.is_empty() { None } else { Some(MetricsBlock::new(recon)?) },
            speed_ms_per_s: speed,
            seed: cfg.seed,
            config_hash: cfg.hash(),
        });
    }
    Ok(reports)
}

fn evaluate_linear(cfg: &RunConfig, manifest: &DatasetManifest, encoder: &SpeakerEncoder) -> Result<MetricsReport> {
    let path = require(cfg.paths.checkpoints().join(BASELINE_FILE), "run train-baseline first")?;
    let model = LinearBaseline::load(path, DType::F32)?;
    let test = parallel_corpus(cfg, manifest, Split::Test)?;
    if test.is_empty() {
        return Err(Error::Evaluation("no held-out parallel pairs to evaluate the baseline on".into()));
    }
    let speaker = |p: &str| p.split('/').next().unwrap_or_default().to_string();
    let entry = manifest.parallel_pairs.iter().find(|p| p.split == Split::Test).expect("non-empty test split");
    let (src, trg) = (speaker(&entry.source), speaker(&entry.target));
    let mut records = Vec::with_capacity(test.len());
    for pair in &test.pairs {
        let converted = linear_convert(&model, &pair.source)?;
        records.push(PairRecord::new(&src, &trg, &pair.id, compare(encoder, &converted, &pair.target)?));
    }
    Ok(MetricsReport {
        setting: "parallel".into(),
        conversion: MetricsBlock::new(records)?,
        reconstruction: None,
        speed_ms_per_s: None,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    })
}

/// Times each requested stage on a synthetic utterance using the trained
/// checkpoints and writes `bench.json` to the reports directory.
pub fn bench_command(cfg: &RunConfig, stages: &[PipelineStage], seconds: f64, vocoder: bool) -> Result<Vec<SpeedResult>> {
    let generator = load_generator(cfg)?;
    let encoder = load_encoder(cfg)?;
    let gl = GriffinLim {
        iterations: cfg.evaluation.vocoder_iterations,
        seed: 0,
    };
    let models = BenchModels {
        generator: &generator,
        encoder: &encoder,
        vocoder: vocoder.then_some(&gl as &dyn crate::audio::Vocoder),
    };
    let results = stages
        .iter()
        .map(|&s| speed_benchmark(&models, s, seconds, 2, 5))
        .collect::<Result<Vec<_>>>()?;
    let dir = cfg.paths.reports();
    fs::create_dir_all(&dir)?;
    let doc = serde_json::json!({ "seed": cfg.seed, "config_hash": cfg.hash(), "results": results });
    fs::write(dir.join("bench.json"), serde_json::to_vec_pretty(&doc)?)?;
    Ok(results)
}
