//! Projection discriminator `D(X, s_src, s_trg)`.

use std::cell::RefCell;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{global_sum_pool, glu, selu};
use crate::nn::{load_checkpoint, save_checkpoint, CheckpointHeader, Conv2d, Linear, ParamBuilder, Params};
use crate::{EMBEDDING_DIM, N_MELS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    /// Channels after the input convolution.
    pub base_channels: usize,
    /// Output channels of the stride-2 down-sampling blocks.
    pub down_channels: Vec<usize>,
    /// Pooled feature width.
    pub feature_channels: usize,
    /// Width of the two hidden layers of the projection network.
    pub projection_hidden: usize,
    /// Required crop length in frames.
    pub crop_frames: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_channels: 128,
            down_channels: vec![256, 512, 1024],
            feature_channels: 1024,
            projection_hidden: 256,
            crop_frames: 256,
        }
    }
}

impl DiscriminatorConfig {
    pub fn tiny(crop_frames: usize) -> Self {
        Self {
            base_channels: 4,
            down_channels: vec![8, 8],
            feature_channels: 8,
            projection_hidden: 16,
            crop_frames,
        }
    }

    fn validate(&self) -> Result<()> {
        let factor = 1usize << self.down_channels.len();
        if self.base_channels == 0
            || self.feature_channels == 0
            || self.projection_hidden == 0
            || self.down_channels.contains(&0)
        {
            return Err(Error::Parameter(format!("degenerate discriminator config {self:?}")));
        }
        if self.crop_frames == 0 || self.crop_frames % factor != 0 || N_MELS % factor != 0 {
            return Err(Error::Parameter(format!(
                "crop length {} and {N_MELS} bins must both be multiples of {factor}",
                self.crop_frames
            )));
        }
        Ok(())
    }
}

/// Something that scores `(B, K, 80)` crops against an embedding pair,
/// returning `(B,)` scores.
pub trait Critic {
    fn score(&self, x: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor>;
}

impl<T: Critic + ?Sized> Critic for &T {
    fn score(&self, x: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor> {
        (**self).score(x, s_src, s_trg)
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    params: Params,
    conv_in: Conv2d,
    down: Vec<Conv2d>,
    conv_out: Conv2d,
    head: Linear,
    proj: [Linear; 3],
}

const CHECKPOINT_KIND: &str = "discriminator";

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new(dtype);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pb = ParamBuilder::fresh(&mut params, &mut rng);
        let layers = Layers::build(&config, &mut pb)?;
        Ok(layers.finish(config, params))
    }

    pub fn from_params(config: DiscriminatorConfig, mut params: Params) -> Result<Self> {
        config.validate()?;
        let mut pb = ParamBuilder::existing(&mut params);
        let layers = Layers::build(&config, &mut pb)?;
        let expected = 2 * (3 + config.down_channels.len() + 3);
        if params.len() != expected {
            return Err(Error::Checkpoint(format!(
                "discriminator checkpoint holds {} tensors, architecture uses {expected}",
                params.len()
            )));
        }
        Ok(layers.finish(config, params))
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn deep_clone(&self) -> Result<Self> {
        Self::from_params(self.config.clone(), self.params.deep_clone()?)
    }

    /// Scores `(B, K, 80)` crops. With `dropout = Some((p, rng))` each input
    /// element is zeroed with probability `p` and survivors scaled by
    /// `1 / (1 - p)`.
    pub fn forward(
        &self,
        x: &Tensor,
        s_src: &Tensor,
        s_trg: &Tensor,
        dropout: Option<(f64, &mut ChaCha8Rng)>,
    ) -> Result<Tensor> {
        let (b, k, bins) = x.dims3()?;
        if k != self.config.crop_frames || bins != N_MELS {
            return Err(Error::Shape(format!(
                "discriminator expects ({b}, {}, {N_MELS}) crops, got {:?}",
                self.config.crop_frames,
                x.dims()
            )));
        }
        for (name, s) in [("source", s_src), ("target", s_trg)] {
            if s.dims() != [b, EMBEDDING_DIM] {
                return Err(Error::Parameter(format!(
                    "{name} embedding has shape {:?}, expected ({b}, {EMBEDDING_DIM})",
                    s.dims()
                )));
            }
        }
        let x = match dropout {
            Some((p, rng)) if p > 0.0 => {
                if p >= 1.0 {
                    return Err(Error::Parameter(format!("dropout probability {p} must be below 1")));
                }
                let keep: Vec<f32> = (0..b * k * bins)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { (1.0 / (1.0 - p)) as f32 })
                    .collect();
                let mask = Tensor::from_vec(keep, (b, k, bins), &Device::Cpu)?.to_dtype(x.dtype())?;
                (x * mask)?
            }
            _ => x.clone(),
        };

        let mut h = glu(&self.conv_in.forward(&x.transpose(1, 2)?.unsqueeze(1)?)?)?;
        for d in &self.down {
            h = glu(&d.forward(&h)?)?;
        }
        h = glu(&self.conv_out.forward(&h)?)?;
        let pooled = global_sum_pool(&h)?; // (B, F)

        let cond = Tensor::cat(&[s_src, s_trg], 1)?;
        let p = selu(&self.proj[0].forward(&cond)?)?;
        let p = selu(&self.proj[1].forward(&p)?)?;
        let p = self.proj[2].forward(&p)?;

        let base = self.head.forward(&pooled)?.squeeze(1)?;
        let inner = (pooled * p)?.sum(1)?;
        Ok((base + inner)?)
    }

    /// Sets every projection parameter to zero, leaving the base head as the
    /// only path to the output.
    pub fn zero_projection(&self) -> Result<()> {
        for (name, var) in self.params.iter() {
            if name.starts_with("proj.") {
                self.params.assign(name, &var.zeros_like()?)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, config_hash: &str) -> Result<()> {
        let header = CheckpointHeader {
            kind: CHECKPOINT_KIND.into(),
            arch: serde_json::to_value(&self.config)?,
            seed,
            config_hash: config_hash.into(),
            extra: Default::default(),
        };
        save_checkpoint(path, &header, &self.params.tensors())
    }

    pub fn load(path: impl AsRef<Path>, dtype: DType) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let config: DiscriminatorConfig = serde_json::from_value(ck.header.arch.clone())
            .map_err(|e| Error::Checkpoint(format!("bad discriminator header: {e}")))?;
        ck.expect(CHECKPOINT_KIND, &serde_json::to_value(&config)?)?;
        Self::from_params(config, Params::from_tensors(ck.tensors, dtype)?)
    }
}

impl Critic for Discriminator {
    fn score(&self, x: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor> {
        self.forward(x, s_src, s_trg, None)
    }
}

/// A discriminator with input dropout drawn from a shared seeded stream.
pub struct DroppedInput<'a> {
    pub discriminator: &'a Discriminator,
    pub p: f64,
    pub rng: &'a RefCell<ChaCha8Rng>,
}

impl Critic for DroppedInput<'_> {
    fn score(&self, x: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor> {
        let mut rng = self.rng.borrow_mut();
        self.discriminator.forward(x, s_src, s_trg, Some((self.p, &mut rng)))
    }
}

struct Layers {
    conv_in: Conv2d,
    down: Vec<Conv2d>,
    conv_out: Conv2d,
    head: Linear,
    proj: [Linear; 3],
}

impl Layers {
    fn build(cfg: &DiscriminatorConfig, pb: &mut ParamBuilder) -> Result<Self> {
        let conv_in = Conv2d::same(&mut pb.sub("conv_in"), 1, 2 * cfg.base_channels, (3, 3))?;
        let mut down = Vec::with_capacity(cfg.down_channels.len());
        let mut c = cfg.base_channels;
        for (i, &out) in cfg.down_channels.iter().enumerate() {
            down.push(Conv2d::new(&mut pb.sub(format!("down.{i}")), c, 2 * out, (3, 3), 2, (1, 1))?);
            c = out;
        }
        let conv_out = Conv2d::new(&mut pb.sub("conv_out"), c, 2 * cfg.feature_channels, (1, 5), 1, (0, 2))?;
        let f = cfg.feature_channels;
        let hdim = cfg.projection_hidden;
        let head = Linear::new(&mut pb.sub("head"), f, 1)?;
        let proj = [
            Linear::new(&mut pb.sub("proj.0"), 2 * EMBEDDING_DIM, hdim)?,
            Linear::new(&mut pb.sub("proj.1"), hdim, hdim)?,
            Linear::new(&mut pb.sub("proj.2"), hdim, f)?,
        ];
        Ok(Self {
            conv_in,
            down,
            conv_out,
            head,
            proj,
        })
    }

    fn finish(self, config: DiscriminatorConfig, params: Params) -> Discriminator {
        Discriminator {
            config,
            params,
            conv_in: self.conv_in,
            down: self.down,
            conv_out: self.conv_out,
            head: self.head,
            proj: self.proj,
        }
    }
}
