use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{cycle_from_fake, identity_from_output, loss_d_adv, loss_g_adv, total_generator_loss};
use super::sampler::{sample_training_crop, CropPolicy};
use super::TrainingConfig;
use crate::discriminator::{Critic, Discriminator, DiscriminatorConfig, DroppedInput};
use crate::encoder::{SpeakerEmbedding, SpeakerEncoder, SpeakerUtterances};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::nn::{clip_grad_norm, load_checkpoint, scalar, save_checkpoint, Adam, AdamConfig, CheckpointHeader, Params};
use crate::{derive_seed, MelSpectrogram, N_MELS};

/// One speaker of a non-parallel training set: its utterances and the
/// embedding the generator is conditioned on.
#[derive(Debug, Clone)]
pub struct SpeakerData {
    pub speaker_id: String,
    pub embedding: SpeakerEmbedding,
    pub utterances: Vec<MelSpectrogram>,
}

/// Training data for the conversion GAN. It holds no source/target pairs,
/// so no loss can ever see a parallel target utterance.
#[derive(Debug, Clone)]
pub struct NonParallelDataset {
    speakers: Vec<SpeakerData>,
}

/// Utterances averaged into each speaker's conditioning embedding.
pub const EMBEDDING_UTTERANCES: usize = 4;

impl NonParallelDataset {
    pub fn new(speakers: Vec<SpeakerData>) -> Result<Self> {
        if speakers.len() < 2 {
            return Err(Error::Dataset(format!(
                "conversion training needs at least 2 speakers, got {}",
                speakers.len()
            )));
        }
        for s in &speakers {
            if s.utterances.is_empty() {
                return Err(Error::Dataset(format!("speaker {} has no utterances", s.speaker_id)));
            }
            for u in &s.utterances {
                u.ensure_finite()?;
            }
        }
        Ok(Self { speakers })
    }

    /// Computes each speaker's embedding as the normalised mean over its
    /// first four utterances.
    pub fn with_encoder(encoder: &SpeakerEncoder, speakers: Vec<SpeakerUtterances>) -> Result<Self> {
        let data = speakers
            .into_iter()
            .map(|s| {
                let n = s.utterances.len().min(EMBEDDING_UTTERANCES);
                let embedding = encoder
                    .speaker_embedding(&s.utterances[..n])
                    .map_err(|e| match e {
                        Error::Parameter(m) => Error::Dataset(format!("speaker {}: {m}", s.speaker_id)),
                        other => other,
                    })?
                    .with_speaker(s.speaker_id.clone());
                Ok(SpeakerData {
                    speaker_id: s.speaker_id,
                    embedding,
                    utterances: s.utterances,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(data)
    }

    pub fn speakers(&self) -> &[SpeakerData] {
        &self.speakers
    }
}

/// Per-step training log entry, written as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub l_id: f64,
    pub l_cyc: f64,
    pub l_g_adv: f64,
    pub l_d_adv: f64,
    pub lambda_id: f64,
    pub lambda_cyc: f64,
    pub weighted_id: f64,
    pub g_total: f64,
    pub g_lr: f64,
    pub d_lr: f64,
    pub g_grad_norm: f64,
    pub g_grad_norm_clipped: f64,
    pub d_grad_norm: f64,
    pub d_grad_norm_clipped: f64,
    pub d_steps: usize,
    pub dropout_active: bool,
    pub crop_frames: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct BalanceWindow {
    d_sum: f64,
    g_adv_sum: f64,
    count: usize,
}

/// Everything needed to continue training: both networks, both optimisers,
/// counters, random streams and the recent loss history.
pub struct TrainingState {
    pub generator: Generator,
    pub discriminator: Discriminator,
    g_opt: Adam,
    d_opt: Adam,
    pub epoch: usize,
    pub step: usize,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    rng: ChaCha8Rng,
    dropout_rng: RefCell<ChaCha8Rng>,
    window: BalanceWindow,
    pub history: VecDeque<StepRecord>,
}

struct Batch {
    x: Tensor,
    s_src: Tensor,
    s_trg: Tensor,
}

const STATE_KIND: &str = "training-state";

impl TrainingState {
    pub fn new(gen: GeneratorConfig, disc: DiscriminatorConfig, config: &TrainingConfig) -> Result<Self> {
        config.validate()?;
        if disc.crop_frames != config.fixed_crop_k {
            return Err(Error::Config(format!(
                "discriminator crop length {} differs from fixed_crop_k {}",
                disc.crop_frames, config.fixed_crop_k
            )));
        }
        let generator = Generator::new(gen, DType::F32, derive_seed(config.seed, "generator"))?;
        let discriminator = Discriminator::new(disc, DType::F32, derive_seed(config.seed, "discriminator"))?;
        Self::assemble(generator, discriminator, config)
    }

    fn assemble(generator: Generator, discriminator: Discriminator, config: &TrainingConfig) -> Result<Self> {
        let g_opt = Adam::new(
            generator.params(),
            AdamConfig {
                lr: config.g_lr,
                ..Default::default()
            },
        )?;
        let d_opt = Adam::new(
            discriminator.params(),
            AdamConfig {
                lr: config.d_lr(),
                ..Default::default()
            },
        )?;
        Ok(Self {
            generator,
            discriminator,
            g_opt,
            d_opt,
            epoch: 0,
            step: 0,
            d_steps: 1,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "batches")),
            dropout_rng: RefCell::new(ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "dropout"))),
            window: BalanceWindow::default(),
            history: VecDeque::new(),
        })
    }

    pub fn g_lr(&self) -> f64 {
        self.g_opt.lr()
    }

    pub fn d_lr(&self) -> f64 {
        self.d_opt.lr()
    }

    fn sample_batch(&mut self, data: &NonParallelDataset, config: &TrainingConfig) -> Result<Batch> {
        let policy = CropPolicy::Fixed(config.fixed_crop_k);
        let n = data.speakers.len();
        let b = config.batch_size;
        let mut xs = Vec::with_capacity(b * config.fixed_crop_k * N_MELS);
        let mut src = Vec::with_capacity(b * crate::EMBEDDING_DIM);
        let mut trg = Vec::with_capacity(b * crate::EMBEDDING_DIM);
        for _ in 0..b {
            let i = self.rng.random_range(0..n);
            let mut j = self.rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let spk = &data.speakers[i];
            let utt = &spk.utterances[self.rng.random_range(0..spk.utterances.len())];
            xs.extend(sample_training_crop(utt, &policy, &mut self.rng)?.into_vec());
            src.extend_from_slice(spk.embedding.as_slice());
            trg.extend_from_slice(data.speakers[j].embedding.as_slice());
        }
        let dev = Device::Cpu;
        let dtype = self.generator.dtype();
        Ok(Batch {
            x: Tensor::from_vec(xs, (b, config.fixed_crop_k, N_MELS), &dev)?.to_dtype(dtype)?,
            s_src: Tensor::from_vec(src, (b, crate::EMBEDDING_DIM), &dev)?.to_dtype(dtype)?,
            s_trg: Tensor::from_vec(trg, (b, crate::EMBEDDING_DIM), &dev)?.to_dtype(dtype)?,
        })
    }

    /// `d_steps` discriminator updates followed by one generator update.
    fn train_step(&mut self, data: &NonParallelDataset, config: &TrainingConfig) -> Result<StepRecord> {
        let dropout = config.dropout_active(self.epoch);
        let g_lr = config.g_lr;
        let d_lr = config.d_lr();
        self.g_opt.set_lr(g_lr);
        self.d_opt.set_lr(d_lr);
        let (a, b) = (config.lsgan_a, config.lsgan_b);
        let d_vars = self.discriminator.params().vars();
        let g_vars = self.generator.params().vars();

        let mut d_loss_sum = 0.0;
        let mut d_pre_max = 0.0f64;
        let mut d_post_max = 0.0f64;
        for _ in 0..self.d_steps {
            let batch = self.sample_batch(data, config)?;
            let fake = self.generator.forward(&batch.x, &batch.s_src, &batch.s_trg)?.detach();
            let l_d = {
                let critic = self.critic(dropout, config.dropout_p);
                loss_d_adv(critic.as_ref(), &fake, &batch.x, &batch.s_src, &batch.s_trg, a, b)?
            };
            let value = scalar(&l_d)?;
            self.ensure_finite("discriminator loss", value)?;
            let mut grads = l_d.backward()?;
            let (pre, post) = clip_grad_norm(&mut grads, &d_vars, config.clip_norm)?;
            self.ensure_finite("discriminator gradient norm", pre)?;
            self.d_opt.step(&grads)?;
            d_loss_sum += value;
            d_pre_max = d_pre_max.max(pre);
            d_post_max = d_post_max.max(post);
        }
        let l_d_adv = d_loss_sum / self.d_steps as f64;

        let batch = self.sample_batch(data, config)?;
        let fake = self.generator.forward(&batch.x, &batch.s_src, &batch.s_trg)?;
        let same = self.generator.forward(&batch.x, &batch.s_src, &batch.s_src)?;
        let l_id = identity_from_output(&same, &batch.x)?;
        let l_cyc = cycle_from_fake(&self.generator, &fake, &batch.x, &batch.s_src, &batch.s_trg)?;
        let l_adv = {
            let critic = self.critic(dropout, config.dropout_p);
            loss_g_adv(critic.as_ref(), &fake, &batch.s_src, &batch.s_trg, a)?
        };
        let lambda_id = config.lambda_id_at(self.step);
        let total = total_generator_loss(&l_id, &l_cyc, &l_adv, lambda_id, config.lambda_cyc)?;
        let g_total = scalar(&total)?;
        self.ensure_finite("generator loss", g_total)?;
        let mut grads = total.backward()?;
        let (g_pre, g_post) = clip_grad_norm(&mut grads, &g_vars, config.clip_norm)?;
        self.ensure_finite("generator gradient norm", g_pre)?;
        self.g_opt.step(&grads)?;

        let (l_id, l_cyc, l_g_adv) = (scalar(&l_id)?, scalar(&l_cyc)?, scalar(&l_adv)?);
        let record = StepRecord {
            step: self.step,
            epoch: self.epoch,
            l_id,
            l_cyc,
            l_g_adv,
            l_d_adv,
            lambda_id,
            lambda_cyc: config.lambda_cyc,
            weighted_id: lambda_id * l_id,
            g_total,
            g_lr,
            d_lr,
            g_grad_norm: g_pre,
            g_grad_norm_clipped: g_post,
            d_grad_norm: d_pre_max,
            d_grad_norm_clipped: d_post_max,
            d_steps: self.d_steps,
            dropout_active: dropout,
            crop_frames: config.fixed_crop_k,
        };
        self.window.d_sum += l_d_adv;
        self.window.g_adv_sum += l_g_adv;
        self.window.count += 1;
        self.step += 1;
        self.history.push_back(record.clone());
        while self.history.len() > config.history_len.max(1) {
            self.history.pop_front();
        }
        Ok(record)
    }

    fn critic(&self, dropout: bool, p: f64) -> Box<dyn Critic + '_> {
        if dropout {
            Box::new(DroppedInput {
                discriminator: &self.discriminator,
                p,
                rng: &self.dropout_rng,
            })
        } else {
            Box::new(&self.discriminator)
        }
    }

    fn ensure_finite(&self, what: &str, value: f64) -> Result<()> {
        if value.is_finite() {
            return Ok(());
        }
        Err(Error::Divergence {
            step: self.step,
            detail: format!("{what} became {value} at epoch {}", self.epoch),
            dump: None,
        })
    }

    /// Adjusts the D/G step ratio from the losses of the last window.
    fn rebalance(&mut self, config: &TrainingConfig) {
        let w = std::mem::take(&mut self.window);
        if w.count == 0 {
            return;
        }
        let d = w.d_sum / w.count as f64;
        let g = w.g_adv_sum / w.count as f64;
        let ratio = if g > 1e-12 { d / g } else { f64::INFINITY };
        if ratio > config.balance_upper() {
            self.d_steps = (self.d_steps + 1).min(config.max_d_steps);
        } else if ratio < config.balance_lower() {
            self.d_steps = self.d_steps.saturating_sub(1).max(1);
        }
        log::debug!("epoch {}: D/G loss ratio {ratio:.4}, {} D steps", self.epoch, self.d_steps);
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, config_hash: &str) -> Result<()> {
        let mut tensors = BTreeMap::new();
        for (k, t) in self.generator.params().tensors() {
            tensors.insert(format!("g.{k}"), t);
        }
        for (k, t) in self.discriminator.params().tensors() {
            tensors.insert(format!("d.{k}"), t);
        }
        for (k, t) in self.g_opt.state()? {
            tensors.insert(format!("g_opt.{k}"), t);
        }
        for (k, t) in self.d_opt.state()? {
            tensors.insert(format!("d_opt.{k}"), t);
        }
        let mut extra = BTreeMap::new();
        extra.insert("epoch".into(), self.epoch.to_string());
        extra.insert("step".into(), self.step.to_string());
        extra.insert("d_steps".into(), self.d_steps.to_string());
        extra.insert("rng".into(), serde_json::to_string(&self.rng)?);
        extra.insert("dropout_rng".into(), serde_json::to_string(&*self.dropout_rng.borrow())?);
        extra.insert("window".into(), serde_json::to_string(&self.window)?);
        extra.insert("history".into(), serde_json::to_string(&self.history)?);
        let header = CheckpointHeader {
            kind: STATE_KIND.into(),
            arch: state_arch(self.generator.config(), self.discriminator.config()),
            seed,
            config_hash: config_hash.into(),
            extra,
        };
        save_checkpoint(path, &header, &tensors)
    }

    pub fn load(path: impl AsRef<Path>, config: &TrainingConfig) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        if ck.header.kind != STATE_KIND {
            return Err(Error::Checkpoint(format!(
                "expected a {STATE_KIND} checkpoint, found {}",
                ck.header.kind
            )));
        }
        let bad = |m: &str| Error::Checkpoint(format!("training state: {m}"));
        let gen: GeneratorConfig = serde_json::from_value(ck.header.arch["generator"].clone())
            .map_err(|_| bad("unreadable generator architecture"))?;
        let disc: DiscriminatorConfig = serde_json::from_value(ck.header.arch["discriminator"].clone())
            .map_err(|_| bad("unreadable discriminator architecture"))?;
        let generator = Generator::from_params(gen, Params::from_tensors(ck.section("g"), DType::F32)?)?;
        let discriminator = Discriminator::from_params(disc, Params::from_tensors(ck.section("d"), DType::F32)?)?;
        let mut state = Self::assemble(generator, discriminator, config)?;
        let g_opt = ck.section("g_opt");
        let d_opt = ck.section("d_opt");
        state.g_opt.load_state(|k| g_opt.get(k).cloned())?;
        state.d_opt.load_state(|k| d_opt.get(k).cloned())?;
        let extra = &ck.header.extra;
        let field = |k: &str| extra.get(k).ok_or_else(|| bad(&format!("missing {k}")));
        let num = |k: &str| -> Result<usize> { field(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        state.epoch = num("epoch")?;
        state.step = num("step")?;
        state.d_steps = num("d_steps")?;
        state.rng = serde_json::from_str(field("rng")?)?;
        state.dropout_rng = RefCell::new(serde_json::from_str(field("dropout_rng")?)?);
        state.window = serde_json::from_str(field("window")?)?;
        state.history = serde_json::from_str(field("history")?)?;
        Ok(state)
    }
}

fn state_arch(g: &GeneratorConfig, d: &DiscriminatorConfig) -> serde_json::Value {
    serde_json::json!({ "generator": g, "discriminator": d })
}

/// Where a training run writes its artifacts. Unset paths disable output.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    /// Newline-delimited JSON step log (appended to).
    pub log_path: Option<PathBuf>,
    /// Directory for periodic checkpoints and divergence dumps.
    pub checkpoint_dir: Option<PathBuf>,
    pub config_hash: String,
}

/// Name of the rolling checkpoint inside the checkpoint directory.
pub const STATE_FILE: &str = "training-state.safetensors";
/// Name of the generator-only checkpoint written alongside it.
pub const GENERATOR_FILE: &str = "generator.safetensors";

/// Trains from `state.epoch` until `config.epochs` and returns the step
/// records of this call. On a non-finite loss the current (still finite)
/// parameters are dumped next to the checkpoints and a divergence error
/// naming the dump is returned.
pub fn train_stargan_zsvc(
    state: &mut TrainingState,
    data: &NonParallelDataset,
    config: &TrainingConfig,
    out: &RunOutputs,
) -> Result<Vec<StepRecord>> {
    config.validate()?;
    if state.discriminator.config().crop_frames != config.fixed_crop_k {
        return Err(Error::Config(format!(
            "discriminator crop length {} differs from fixed_crop_k {}",
            state.discriminator.config().crop_frames,
            config.fixed_crop_k
        )));
    }
    let mut writer = match &out.log_path {
        Some(p) => Some(open_log(p)?),
        None => None,
    };
    let mut records = Vec::new();
    while state.epoch < config.epochs {
        for _ in 0..config.steps_per_epoch {
            match state.train_step(data, config) {
                Ok(rec) => {
                    if let Some(w) = writer.as_mut() {
                        serde_json::to_writer(&mut *w, &rec)?;
                        w.write_all(b"\n")?;
                    }
                    records.push(rec);
                }
                Err(Error::Divergence { step, detail, .. }) => {
                    if let Some(w) = writer.as_mut() {
                        w.flush()?;
                    }
                    let dump = match &out.checkpoint_dir {
                        Some(dir) => Some(dump_divergence(state, dir, config, out, step, &detail)?),
                        None => None,
                    };
                    log::error!("training diverged at step {step}: {detail}");
                    return Err(Error::Divergence { step, detail, dump });
                }
                Err(e) => return Err(e),
            }
        }
        state.epoch += 1;
        if state.epoch % config.balance_interval == 0 {
            state.rebalance(config);
        }
        if let Some(dir) = &out.checkpoint_dir {
            if config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0 {
                write_checkpoints(state, dir, config, out)?;
            }
        }
        if state.epoch % 100 == 0 {
            if let Some(r) = records.last() {
                log::info!(
                    "epoch {} step {}: id {:.4} cyc {:.2} g_adv {:.4} d_adv {:.4}",
                    state.epoch,
                    r.step,
                    r.l_id,
                    r.l_cyc,
                    r.l_g_adv,
                    r.l_d_adv
                );
            }
        }
    }
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }
    if let Some(dir) = &out.checkpoint_dir {
        write_checkpoints(state, dir, config, out)?;
    }
    Ok(records)
}

fn open_log(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_checkpoints(state: &TrainingState, dir: &Path, config: &TrainingConfig, out: &RunOutputs) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!("{STATE_FILE}.tmp"));
    state.save(&tmp, config.seed, &out.config_hash)?;
    fs::rename(&tmp, dir.join(STATE_FILE))?;
    state
        .generator
        .save(dir.join(GENERATOR_FILE), config.seed, &out.config_hash)
}

fn dump_divergence(
    state: &TrainingState,
    dir: &Path,
    config: &TrainingConfig,
    out: &RunOutputs,
    step: usize,
    detail: &str,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("diverged-step{step}.safetensors"));
    state.save(&path, config.seed, &out.config_hash)?;
    let report = serde_json::json!({
        "step": step,
        "epoch": state.epoch,
        "detail": detail,
        "last_records": state.history.iter().rev().take(10).collect::<Vec<_>>(),
    });
    fs::write(path.with_extension("json"), serde_json::to_string_pretty(&report)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::SyntheticSpeaker;

    fn toy_data(speakers: usize) -> NonParallelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        NonParallelDataset::new(
            (0..speakers)
                .map(|i| SpeakerData {
                    speaker_id: format!("s{i}"),
                    embedding: SpeakerEmbedding::random(&mut rng),
                    utterances: SyntheticSpeaker::from_seed(i as u64).utterances(3, 120, 0),
                })
                .collect(),
        )
        .unwrap()
    }

    fn toy_config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            fixed_crop_k: 96,
            batch_size: 1,
            epochs,
            g_lr: 1e-3,
            balance_interval: 2,
            seed: 4,
            ..Default::default()
        }
    }

    fn toy_state(cfg: &TrainingConfig) -> TrainingState {
        TrainingState::new(GeneratorConfig::tiny(), DiscriminatorConfig::tiny(cfg.fixed_crop_k), cfg).unwrap()
    }

    #[test]
    fn dataset_needs_two_speakers() {
        let one = toy_data(2).speakers()[..1].to_vec();
        assert!(matches!(NonParallelDataset::new(one), Err(Error::Dataset(_))));
    }

    #[test]
    fn crop_mismatch_is_a_config_error() {
        let cfg = toy_config(1);
        let r = TrainingState::new(GeneratorConfig::tiny(), DiscriminatorConfig::tiny(128), &cfg);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn contracts_hold_on_a_short_run() {
        let cfg = toy_config(6);
        let mut state = toy_state(&cfg);
        let log = train_stargan_zsvc(&mut state, &toy_data(3), &cfg, &RunOutputs::default()).unwrap();
        assert_eq!(log.len(), 6);
        for r in &log {
            assert!(r.g_grad_norm_clipped <= cfg.clip_norm);
            assert!(r.d_grad_norm_clipped <= cfg.clip_norm);
            assert_eq!(r.d_lr / r.g_lr, 0.5);
            assert!(!r.dropout_active);
            assert_eq!(r.crop_frames, 96);
            assert!(r.l_id >= 0.0 && r.l_cyc >= 0.0 && r.l_g_adv >= 0.0 && r.l_d_adv >= 0.0);
        }
        assert_eq!(state.epoch, 6);
    }

    #[test]
    fn identical_seeds_give_identical_logs() {
        let cfg = toy_config(3);
        let data = toy_data(2);
        let a = train_stargan_zsvc(&mut toy_state(&cfg), &data, &cfg, &RunOutputs::default()).unwrap();
        let b = train_stargan_zsvc(&mut toy_state(&cfg), &data, &cfg, &RunOutputs::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resume_continues_the_same_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let data = toy_data(2);
        let full_cfg = toy_config(4);
        let full = train_stargan_zsvc(&mut toy_state(&full_cfg), &data, &full_cfg, &RunOutputs::default()).unwrap();

        let half_cfg = toy_config(2);
        let out = RunOutputs {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            log_path: Some(dir.path().join("log.ndjson")),
            config_hash: "h".into(),
        };
        let mut first = train_stargan_zsvc(&mut toy_state(&half_cfg), &data, &half_cfg, &out).unwrap();
        let mut resumed = TrainingState::load(dir.path().join(STATE_FILE), &full_cfg).unwrap();
        assert_eq!(resumed.epoch, 2);
        first.extend(train_stargan_zsvc(&mut resumed, &data, &full_cfg, &out).unwrap());
        assert_eq!(first, full);

        let lines = fs::read_to_string(dir.path().join("log.ndjson")).unwrap();
        let parsed: Vec<StepRecord> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(parsed, full);
        assert!(dir.path().join(GENERATOR_FILE).exists());
    }

    #[test]
    fn dropout_switches_on_at_its_epoch() {
        let cfg = TrainingConfig {
            dropout_start_epoch: 2,
            ..toy_config(4)
        };
        let log = train_stargan_zsvc(&mut toy_state(&cfg), &toy_data(2), &cfg, &RunOutputs::default()).unwrap();
        let flags: Vec<bool> = log.iter().map(|r| r.dropout_active).collect();
        assert_eq!(flags, vec![false, false, true, true]);
    }

    #[test]
    fn balance_controller_moves_within_bounds() {
        let cfg = TrainingConfig {
            max_d_steps: 2,
            ..toy_config(1)
        };
        let mut state = toy_state(&cfg);
        state.window = BalanceWindow { d_sum: 1.0, g_adv_sum: 1.0, count: 1 };
        state.rebalance(&cfg);
        assert_eq!(state.d_steps, 2);
        state.window = BalanceWindow { d_sum: 1.0, g_adv_sum: 1.0, count: 1 };
        state.rebalance(&cfg);
        assert_eq!(state.d_steps, 2);
        state.window = BalanceWindow { d_sum: 0.01, g_adv_sum: 1.0, count: 1 };
        state.rebalance(&cfg);
        assert_eq!(state.d_steps, 1);
        state.window = BalanceWindow { d_sum: 0.01, g_adv_sum: 1.0, count: 1 };
        state.rebalance(&cfg);
        assert_eq!(state.d_steps, 1);
        state.window = BalanceWindow { d_sum: 0.1, g_adv_sum: 1.0, count: 1 };
        state.rebalance(&cfg);
        assert_eq!(state.d_steps, 1);
    }

    #[test]
    fn divergence_aborts_with_a_dump() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainingConfig {
            g_lr: 1e30,
            ..toy_config(20)
        };
        let out = RunOutputs {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        match train_stargan_zsvc(&mut toy_state(&cfg), &toy_data(2), &cfg, &out) {
            Err(Error::Divergence { dump: Some(p), .. }) => {
                assert!(p.exists());
                assert!(p.with_extension("json").exists());
            }
            other => panic!("expected divergence, got {:?}", other.map(|l| l.len())),
        }
    }

    #[test]
    fn every_generator_parameter_receives_gradient() {
        let cfg = toy_config(1);
        let mut state = toy_state(&cfg);
        let data = toy_data(2);
        let batch = state.sample_batch(&data, &cfg).unwrap();
        let g = &state.generator;
        let fake = g.forward(&batch.x, &batch.s_src, &batch.s_trg).unwrap();
        let same = g.forward(&batch.x, &batch.s_src, &batch.s_src).unwrap();
        let l_id = identity_from_output(&same, &batch.x).unwrap();
        let l_cyc = cycle_from_fake(g, &fake, &batch.x, &batch.s_src, &batch.s_trg).unwrap();
        let l_adv = loss_g_adv(&state.discriminator, &fake, &batch.s_src, &batch.s_trg, 1.0).unwrap();
        let total = total_generator_loss(&l_id, &l_cyc, &l_adv, 5.0, 10.0).unwrap();
        let grads = total.backward().unwrap();
        for (name, var) in g.params().iter() {
            let gr = grads.get(var.as_tensor()).unwrap_or_else(|| panic!("{name} has no gradient"));
            let norm = scalar(&gr.sqr().unwrap().sum_all().unwrap()).unwrap();
            assert!(norm > 0.0, "{name} has a zero gradient");
        }
    }
}
