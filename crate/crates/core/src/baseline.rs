//! One-to-one linear baseline: a stack of 2-D convolutions without
//! activations, trained with an L1 loss on parallel source/target pairs.
//! It takes no speaker information, so one model covers one speaker pair.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{
    load_checkpoint, save_checkpoint, scalar, Adam, AdamConfig, CheckpointHeader, Conv2d, ParamBuilder, Params,
};
use crate::training::{lr_range_probe, sample_paired_crop, CropPolicy, ProbeTarget};

const CHECKPOINT_KIND: &str = "linear-baseline";
const NORM_KEY: &str = "norm";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearBaselineConfig {
    /// `(output channels, square kernel size)` per layer. The last layer
    /// must have one output channel.
    pub layers: Vec<(usize, usize)>,
}

impl Default for LinearBaselineConfig {
    fn default() -> Self {
        Self {
            layers: vec![(200, 5), (200, 5), (100, 3), (1, 3)],
        }
    }
}

impl LinearBaselineConfig {
    fn validate(&self) -> Result<()> {
        match self.layers.last() {
            None => Err(Error::Config("linear baseline needs at least one layer".into())),
            Some(&(c, _)) if c != 1 => Err(Error::Config(format!(
                "last baseline layer must have 1 output channel, got {c}"
            ))),
            _ if self.layers.iter().any(|&(c, k)| c == 0 || k % 2 == 0) => Err(Error::Config(
                "baseline layers need positive widths and odd kernels".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Per-bin standardisation applied around the convolution stack:
/// `y = net((x - mean) / std) * std + mean`. Fitted on the training
/// sources; the identity until then.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Default for FeatureNorm {
    fn default() -> Self {
        Self {
            mean: vec![0.0; crate::N_MELS],
            std: vec![1.0; crate::N_MELS],
        }
    }
}

impl FeatureNorm {
    pub fn fit(corpus: &ParallelCorpus) -> Result<Self> {
        let mut sum = vec![0f64; crate::N_MELS];
        let mut sq = vec![0f64; crate::N_MELS];
        let mut n = 0usize;
        for p in &corpus.pairs {
            for frame in p.source.as_slice().chunks_exact(crate::N_MELS) {
                for (j, &v) in frame.iter().enumerate() {
                    sum[j] += v as f64;
                    sq[j] += (v as f64) * (v as f64);
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Dataset("no source frames to fit normalisation on".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| ((q / n as f64 - m * m).max(0.0).sqrt().max(1e-3)) as f32)
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|m| m as f32).collect(),
            std,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != crate::N_MELS || self.std.len() != crate::N_MELS {
            return Err(Error::Checkpoint("baseline normalisation must have 80 bins".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Checkpoint("baseline normalisation is not finite and positive".into()));
        }
        Ok(())
    }

    fn tensors(&self, dtype: DType) -> Result<(Tensor, Tensor)> {
        let shape = (1, 1, crate::N_MELS);
        Ok((
            Tensor::from_slice(&self.mean, shape, &Device::Cpu)?.to_dtype(dtype)?,
            Tensor::from_slice(&self.std, shape, &Device::Cpu)?.to_dtype(dtype)?,
        ))
    }
}

#[derive(Debug)]
pub struct LinearBaseline {
    config: LinearBaselineConfig,
    params: Params,
    layers: Vec<Conv2d>,
    norm: FeatureNorm,
    norm_t: (Tensor, Tensor),
}

impl LinearBaseline {
    pub fn new(config: LinearBaselineConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new(dtype);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = build(&config, &mut ParamBuilder::fresh(&mut params, &mut rng))?;
        let norm = FeatureNorm::default();
        let norm_t = norm.tensors(dtype)?;
        Ok(Self { config, params, layers, norm, norm_t })
    }

    pub fn from_params(config: LinearBaselineConfig, mut params: Params) -> Result<Self> {
        config.validate()?;
        let layers = build(&config, &mut ParamBuilder::existing(&mut params))?;
        if params.len() != 2 * config.layers.len() {
            return Err(Error::Checkpoint(format!(
                "baseline checkpoint holds {} tensors, expected {}",
                params.len(),
                2 * config.layers.len()
            )));
        }
        let norm = FeatureNorm::default();
        let norm_t = norm.tensors(params.dtype())?;
        Ok(Self { config, params, layers, norm, norm_t })
    }

    pub fn norm(&self) -> &FeatureNorm {
        &self.norm
    }

    pub fn set_norm(&mut self, norm: FeatureNorm) -> Result<()> {
        norm.validate()?;
        self.norm_t = norm.tensors(self.params.dtype())?;
        self.norm = norm;
        Ok(())
    }

    pub fn config(&self) -> &LinearBaselineConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn deep_clone(&self) -> Result<Self> {
        let mut copy = Self::from_params(self.config.clone(), self.params.deep_clone()?)?;
        copy.set_norm(self.norm.clone())?;
        Ok(copy)
    }

    /// `(B, T, 80) -> (B, T, 80)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (mean, std) = &self.norm_t;
        let x = x.broadcast_sub(mean)?.broadcast_div(std)?;
        let mut h = x.transpose(1, 2)?.unsqueeze(1)?;
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        let y = h.squeeze(1)?.transpose(1, 2)?;
        Ok(y.broadcast_mul(std)?.broadcast_add(mean)?.contiguous()?)
    }

    /// Zeroes the last layer, which makes every output exactly zero.
    pub fn zero_final_layer(&self) -> Result<()> {
        let i = self.layers.len() - 1;
        for name in [format!("layer.{i}.weight"), format!("layer.{i}.bias")] {
            let v = self.params.get(&name).expect("final layer parameter");
            self.params.assign(&name, &v.as_tensor().zeros_like()?)?;
        }
        Ok(())
    }

    /// Output for an all-zero input away from the borders. For a model
    /// that has learned `x + c` this is `c`.
    pub fn effective_bias(&self) -> Result<f64> {
        let reach: usize = self.config.layers.iter().map(|&(_, k)| k / 2).sum();
        let t = 2 * reach + 1;
        let zeros = Tensor::zeros((1, t, crate::N_MELS), self.params.dtype(), &Device::Cpu)?;
        let y = self.forward(&zeros)?;
        scalar(&y.get(0)?.get(reach)?.get(crate::N_MELS / 2)?)
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, config_hash: &str) -> Result<()> {
        let header = CheckpointHeader {
            kind: CHECKPOINT_KIND.into(),
            arch: serde_json::to_value(&self.config)?,
            seed,
            config_hash: config_hash.into(),
            extra: [(NORM_KEY.to_string(), serde_json::to_string(&self.norm)?)].into(),
        };
        save_checkpoint(path, &header, &self.params.tensors())
    }

    pub fn load(path: impl AsRef<Path>, dtype: DType) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let config: LinearBaselineConfig = serde_json::from_value(ck.header.arch.clone())
            .map_err(|e| Error::Checkpoint(format!("bad baseline header: {e}")))?;
        ck.expect(CHECKPOINT_KIND, &serde_json::to_value(&config)?)?;
        let norm: FeatureNorm = match ck.header.extra.get(NORM_KEY) {
            Some(s) => serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("bad baseline normalisation: {e}")))?,
            None => FeatureNorm::default(),
        };
        let mut model = Self::from_params(config, Params::from_tensors(ck.tensors, dtype)?)?;
        model.set_norm(norm)?;
        Ok(model)
    }
}

fn build(config: &LinearBaselineConfig, pb: &mut ParamBuilder<'_>) -> Result<Vec<Conv2d>> {
    let mut in_ch = 1;
    let mut layers = Vec::with_capacity(config.layers.len());
    for (i, &(out_ch, k)) in config.layers.iter().enumerate() {
        layers.push(Conv2d::same(&mut pb.sub(&format!("layer.{i}")), in_ch, out_ch, (k, k))?);
        in_ch = out_ch;
    }
    Ok(layers)
}

/// Converts one spectrogram; output has the input's shape.
pub fn linear_convert(model: &LinearBaseline, x_src: &MelSpectrogram) -> Result<MelSpectrogram> {
    x_src.ensure_finite()?;
    let x = x_src.to_tensor(model.params.dtype(), &Device::Cpu)?;
    let y = model.forward(&x)?.to_dtype(DType::F32)?;
    let mut out = MelSpectrogram::from_tensor(&y)?;
    out.meta = x_src.meta.clone();
    Ok(out)
}

/// Mean absolute error over every entry.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    Ok((pred - target)?.abs()?.mean_all()?)
}

/// Source and target renditions of the same sentence.
#[derive(Debug, Clone)]
pub struct ParallelPair {
    pub id: String,
    pub source: MelSpectrogram,
    pub target: MelSpectrogram,
}

/// Parallel training data. Only the baseline consumes this type; the
/// many-to-many model is trained from non-parallel speaker pools.
#[derive(Debug, Clone, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<ParallelPair>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<ParallelPair>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineTrainingConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub crops: CropPolicy,
    /// Learning rate used until the first probe (or throughout without one).
    pub lr: f64,
    /// Candidate rates for the periodic range probe; empty disables probing.
    pub lr_grid: Vec<f64>,
    pub probe_every: usize,
    pub probe_budget: usize,
    /// Steps between validation passes; 0 disables early stopping.
    pub validate_every: usize,
    /// Consecutive validation increases tolerated before stopping.
    pub patience: usize,
    /// Scale the current rate down linearly to zero over the run.
    pub anneal: bool,
    /// Fit per-bin standardisation on the training sources before the
    /// first step.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for BaselineTrainingConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 8,
            crops: CropPolicy::Variable((96..=320).step_by(32).collect()),
            lr: 1e-3,
            lr_grid: vec![1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3],
            probe_every: 500,
            probe_budget: 50,
            validate_every: 500,
            patience: 1,
            anneal: true,
            normalize: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub crop_frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_loss: Option<f64>,
}

fn batch<R: Rng + ?Sized>(
    corpus: &ParallelCorpus,
    size: usize,
    crops: &CropPolicy,
    dtype: DType,
    rng: &mut R,
) -> Result<(Tensor, Tensor, usize)> {
    let k = crops.sample_length(rng);
    let mut xs = Vec::with_capacity(size);
    let mut ys = Vec::with_capacity(size);
    for _ in 0..size {
        let pair = &corpus.pairs[rng.random_range(0..corpus.len())];
        let (a, b) = sample_paired_crop(&pair.source, &pair.target, k, rng)?;
        xs.push(a.to_tensor(dtype, &Device::Cpu)?);
        ys.push(b.to_tensor(dtype, &Device::Cpu)?);
    }
    Ok((Tensor::cat(&xs, 0)?, Tensor::cat(&ys, 0)?, k))
}

/// Mean L1 over whole pairs, each trimmed to the shorter of the two.
pub fn validation_loss(model: &LinearBaseline, corpus: &ParallelCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Dataset("validation set is empty".into()));
    }
    let mut total = 0.0;
    for p in &corpus.pairs {
        let t = p.source.n_frames().min(p.target.n_frames());
        let x = p.source.slice(0, t)?.to_tensor(model.params.dtype(), &Device::Cpu)?;
        let y = p.target.slice(0, t)?.to_tensor(model.params.dtype(), &Device::Cpu)?;
        total += scalar(&l1_loss(&model.forward(&x)?, &y)?)?;
    }
    Ok(total / corpus.len() as f64)
}

struct Probe {
    model: LinearBaseline,
    opt: Adam,
    x: Tensor,
    y: Tensor,
}

impl ProbeTarget for Probe {
    fn fork(&self) -> Result<Self> {
        let model = self.model.deep_clone()?;
        Ok(Self {
            opt: clone_adam(&self.opt, &model)?,
            model,
            x: self.x.clone(),
            y: self.y.clone(),
        })
    }

    fn loss(&mut self) -> Result<f64> {
        scalar(&l1_loss(&self.model.forward(&self.x)?, &self.y)?)
    }

    fn step(&mut self, lr: f64) -> Result<()> {
        self.opt.set_lr(lr);
        let loss = l1_loss(&self.model.forward(&self.x)?, &self.y)?;
        self.opt.step(&loss.backward()?)
    }
}

/// Trains `model` in place with Adam and returns the per-step log.
/// Training stops early once the validation loss has risen `patience`
/// times in a row.
pub fn train_linear_baseline(
    model: &mut LinearBaseline,
    corpus: &ParallelCorpus,
    validation: Option<&ParallelCorpus>,
    config: &BaselineTrainingConfig,
) -> Result<Vec<BaselineStepRecord>> {
    if corpus.is_empty() {
        return Err(Error::Dataset("parallel corpus is empty".into()));
    }
    if config.batch_size == 0 || !(config.lr > 0.0) {
        return Err(Error::Config("baseline needs batch_size > 0 and lr > 0".into()));
    }
    if let CropPolicy::Variable(v) = &config.crops {
        if v.is_empty() {
            return Err(Error::Config("crop set is empty".into()));
        }
    }
    if config.normalize {
        model.set_norm(FeatureNorm::fit(corpus)?)?;
    }
    let dtype = model.params.dtype();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(config.seed, "baseline"));
    let mut opt = Adam::new(&model.params, AdamConfig { lr: config.lr, ..Default::default() })?;
    let mut log = Vec::with_capacity(config.steps);
    let mut base_lr = config.lr;
    let mut best_val = f64::INFINITY;
    let mut rises = 0;
    for step in 0..config.steps {
        if !config.lr_grid.is_empty() && config.probe_every > 0 && step % config.probe_every == 0 {
            let (x, y, _) = batch(corpus, config.batch_size, &config.crops, dtype, &mut rng)?;
            let probe = Probe {
                model: model.deep_clone()?,
                opt: clone_adam(&opt, model)?,
                x,
                y,
            };
            let chosen = lr_range_probe(&probe, &config.lr_grid, config.probe_budget)?;
            log::debug!("baseline step {step}: probe chose lr {}", chosen.lr);
            base_lr = chosen.lr;
        }
        let scale = if config.anneal { 1.0 - step as f64 / config.steps as f64 } else { 1.0 };
        opt.set_lr(base_lr * scale);
        let (x, y, k) = batch(corpus, config.batch_size, &config.crops, dtype, &mut rng)?;
        let loss = l1_loss(&model.forward(&x)?, &y)?;
        let value = scalar(&loss)?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("baseline loss became {value}"),
                dump: None,
            });
        }
        opt.step(&loss.backward()?)?;
        let mut record = BaselineStepRecord {
            step,
            loss: value,
            lr: opt.lr(),
            crop_frames: k,
            validation_loss: None,
        };
        let mut stop = false;
        if let Some(val) = validation.filter(|_| config.validate_every > 0 && (step + 1) % config.validate_every == 0) {
            let v = validation_loss(model, val)?;
            record.validation_loss = Some(v);
            if v < best_val {
                best_val = v;
                rises = 0;
            } else {
                rises += 1;
                stop = rises > config.patience.saturating_sub(1);
            }
        }
        log.push(record);
        if stop {
            log::info!("baseline: validation loss rising, stopping at step {step}");
            break;
        }
    }
    Ok(log)
}

/// A fresh optimizer on `model`'s parameters carrying `opt`'s moments.
fn clone_adam(opt: &Adam, model: &LinearBaseline) -> Result<Adam> {
    let mut copy = Adam::new(&model.params, AdamConfig { lr: opt.lr(), ..Default::default() })?;
    let state: BTreeMap<String, Tensor> = opt.state()?.into_iter().collect();
    copy.load_state(|k| state.get(k).cloned())?;
    Ok(copy)
}
