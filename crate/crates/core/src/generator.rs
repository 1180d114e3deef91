//! The 2-1-2D conversion network `G(X, s_src, s_trg)`.
//!
//! Layout, with the spectrogram viewed as a one-channel `80 x T` image:
//! a gated 2-D input convolution, two stride-2 down-sampling blocks, a
//! reshape to a 1-D sequence of `T/4` steps, a stack of conditional blocks
//! (conv, speaker-conditioned instance norm, GLU), then the mirror image
//! back up with pixel shuffle.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;
use crate::encoder::SpeakerEmbedding;
use crate::error::{Error, Result};
use crate::nn::ops::{cin, glu, instance_norm, pixel_shuffle};
use crate::nn::{
    load_checkpoint, save_checkpoint, CheckpointHeader, Conv1d, Conv2d, Init, Linear, ParamBuilder, Params,
};
use crate::{EMBEDDING_DIM, N_MELS};

/// Time resolution is reduced by this factor inside the generator.
pub const TIME_MULTIPLE: usize = 4;

/// Source and target speaker embeddings for one conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningPair {
    pub s_src: SpeakerEmbedding,
    pub s_trg: SpeakerEmbedding,
}

impl ConditioningPair {
    pub fn new(s_src: SpeakerEmbedding, s_trg: SpeakerEmbedding) -> Self {
        Self { s_src, s_trg }
    }

    pub fn swapped(&self) -> Self {
        Self {
            s_src: self.s_trg.clone(),
            s_trg: self.s_src.clone(),
        }
    }

    /// `(1, 256)` tensors for source and target.
    pub fn tensors(&self, dtype: DType) -> Result<(Tensor, Tensor)> {
        Ok((self.s_src.to_tensor(dtype)?, self.s_trg.to_tensor(dtype)?))
    }
}

/// Anything that maps `(B, T, 80)` spectrograms plus `(B, 256)` source and
/// target embeddings to converted `(B, T, 80)` spectrograms.
pub trait Converter {
    fn convert(&self, x: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityConverter;

impl Converter for IdentityConverter {
    fn convert(&self, x: &Tensor, _s_src: &Tensor, _s_trg: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Channels after the input convolution and after each down block.
    pub channels: [usize; 3],
    /// Width of the 1-D conditional section.
    pub central_channels: usize,
    pub blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            channels: [128, 256, 256],
            central_channels: 256,
            blocks: 6,
        }
    }
}

impl GeneratorConfig {
    pub fn tiny() -> Self {
        Self {
            channels: [4, 8, 8],
            central_channels: 16,
            blocks: 2,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels.contains(&0) || self.central_channels == 0 || self.blocks == 0 {
            return Err(Error::Parameter(format!("degenerate generator config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct GatedConv2d {
    conv: Conv2d,
    norm: bool,
}

impl GatedConv2d {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(x)?;
        let y = if self.norm { instance_norm(&y)? } else { y };
        glu(&y)
    }
}

#[derive(Debug, Clone)]
struct UpBlock {
    conv: Conv2d,
}

impl UpBlock {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = pixel_shuffle(&self.conv.forward(x)?, 2)?;
        glu(&instance_norm(&y)?)
    }
}

#[derive(Debug, Clone)]
struct ConditionalBlock {
    conv: Conv1d,
    gamma: Linear,
    beta: Linear,
}

impl ConditionalBlock {
    fn new(pb: &mut ParamBuilder, channels: usize) -> Result<Self> {
        let bound = 1.0 / ((2 * EMBEDDING_DIM) as f64).sqrt();
        Ok(Self {
            conv: Conv1d::new(&mut pb.sub("conv"), channels, 2 * channels, 5)?,
            gamma: Linear::with_init(
                &mut pb.sub("gamma"),
                2 * EMBEDDING_DIM,
                2 * channels,
                Init::Uniform(bound),
                Init::Const(1.0),
            )?,
            beta: Linear::with_init(
                &mut pb.sub("beta"),
                2 * EMBEDDING_DIM,
                2 * channels,
                Init::Uniform(bound),
                Init::Const(0.0),
            )?,
        })
    }

    /// `x`: `(B, C, L)`, `cond`: `(B, 512)`.
    fn forward(&self, x: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let h = self.conv.forward(x)?;
        let h = cin(&h, &self.gamma.forward(cond)?, &self.beta.forward(cond)?)?;
        glu(&h)
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    params: Params,
    conv_in: GatedConv2d,
    down: Vec<GatedConv2d>,
    to_1d: Conv1d,
    blocks: Vec<ConditionalBlock>,
    from_1d: Conv1d,
    up: Vec<UpBlock>,
    conv_out: Conv2d,
}

const CHECKPOINT_KIND: &str = "generator";
/// Frequency rows after the two down-sampling blocks.
const CENTRAL_HEIGHT: usize = N_MELS / 4;

impl Generator {
    pub fn new(config: GeneratorConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = Params::new(dtype);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pb = ParamBuilder::fresh(&mut params, &mut rng);
        let parts = Parts::build(&config, &mut pb)?;
        Ok(parts.into_generator(config, params))
    }

    pub fn from_params(config: GeneratorConfig, mut params: Params) -> Result<Self> {
        config.validate()?;
        let mut pb = ParamBuilder::existing(&mut params);
        let parts = Parts::build(&config, &mut pb)?;
        if params.len() != parts.expected_params {
            return Err(Error::Checkpoint(format!(
                "generator checkpoint holds {} tensors, architecture uses {}",
                params.len(),
                parts.expected_params
            )));
        }
        Ok(parts.into_generator(config, params))
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    /// `x`: `(B, T, 80)` with `T % 4 == 0`; `s_src`, `s_trg`: `(B, 256)`.
    pub fn forward(&self, x: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor> {
        let (b, t, bins) = x.dims3()?;
        if bins != N_MELS {
            return Err(Error::Shape(format!("generator expects {N_MELS} bins, got {bins}")));
        }
        if t % TIME_MULTIPLE != 0 {
            return Err(Error::Shape(format!(
                "generator input length {t} is not a multiple of {TIME_MULTIPLE}; pad it first"
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
        let cond = Tensor::cat(&[s_src, s_trg], 1)?;

        let mut h = self.conv_in.forward(&x.transpose(1, 2)?.unsqueeze(1)?)?;
        for d in &self.down {
            h = d.forward(&h)?;
        }
        let c2 = self.config.channels[2];
        let steps = t / TIME_MULTIPLE;
        let mut s = h.reshape((b, c2 * CENTRAL_HEIGHT, steps))?;
        s = instance_norm(&self.to_1d.forward(&s)?)?;
        for block in &self.blocks {
            s = block.forward(&s, &cond)?;
        }
        s = instance_norm(&self.from_1d.forward(&s)?)?;
        let mut h = s.reshape((b, c2, CENTRAL_HEIGHT, steps))?;
        for u in &self.up {
            h = u.forward(&h)?;
        }
        let out = self.conv_out.forward(&h)?;
        Ok(out.squeeze(1)?.transpose(1, 2)?.contiguous()?)
    }

    /// Converts one spectrogram. `T` must be a multiple of 4; see
    /// [`Generator::generate_padded`] for arbitrary lengths.
    pub fn generate(&self, x_src: &MelSpectrogram, pair: &ConditioningPair) -> Result<MelSpectrogram> {
        x_src.ensure_finite()?;
        let x = x_src.to_tensor(self.dtype(), &Device::Cpu)?;
        let (s, t) = pair.tensors(self.dtype())?;
        let y = self.forward(&x, &s, &t)?;
        let mut out = MelSpectrogram::from_tensor(&y)?;
        out.meta = x_src.meta.clone();
        out.meta.speaker_id = pair.s_trg.speaker_id.clone();
        out.ensure_finite()?;
        Ok(out)
    }

    /// Pads to a multiple of 4, converts, and trims back to the input length.
    pub fn generate_padded(&self, x_src: &MelSpectrogram, pair: &ConditioningPair) -> Result<MelSpectrogram> {
        let (padded, len) = pad_to_multiple(x_src, TIME_MULTIPLE);
        trim(&self.generate(&padded, pair)?, len)
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

    /// Loads a checkpoint, taking the architecture from its header.
    pub fn load(path: impl AsRef<Path>, dtype: DType) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        let config: GeneratorConfig = serde_json::from_value(ck.header.arch.clone())
            .map_err(|e| Error::Checkpoint(format!("bad generator header: {e}")))?;
        ck.expect(CHECKPOINT_KIND, &serde_json::to_value(&config)?)?;
        Self::from_params(config, Params::from_tensors(ck.tensors, dtype)?)
    }

    /// Loads a checkpoint and refuses it unless it matches `config`.
    pub fn load_expecting(path: impl AsRef<Path>, config: &GeneratorConfig, dtype: DType) -> Result<Self> {
        let ck = load_checkpoint(path)?;
        ck.expect(CHECKPOINT_KIND, &serde_json::to_value(config)?)?;
        Self::from_params(config.clone(), Params::from_tensors(ck.tensors, dtype)?)
    }
}

impl Converter for Generator {
    fn convert(&self, x: &Tensor, s_src: &Tensor, s_trg: &Tensor) -> Result<Tensor> {
        let d = self.dtype();
        self.forward(&x.to_dtype(d)?, &s_src.to_dtype(d)?, &s_trg.to_dtype(d)?)
    }
}

struct Parts {
    conv_in: GatedConv2d,
    down: Vec<GatedConv2d>,
    to_1d: Conv1d,
    blocks: Vec<ConditionalBlock>,
    from_1d: Conv1d,
    up: Vec<UpBlock>,
    conv_out: Conv2d,
    expected_params: usize,
}

impl Parts {
    fn build(cfg: &GeneratorConfig, pb: &mut ParamBuilder) -> Result<Self> {
        let [c0, c1, c2] = cfg.channels;
        let cc = cfg.central_channels;
        let conv_in = GatedConv2d {
            conv: Conv2d::same(&mut pb.sub("conv_in"), 1, 2 * c0, (5, 15))?,
            norm: false,
        };
        let down = [(c0, c1), (c1, c2)]
            .iter()
            .enumerate()
            .map(|(i, &(cin_, cout))| {
                Ok(GatedConv2d {
                    conv: Conv2d::new(&mut pb.sub(format!("down.{i}")), cin_, 2 * cout, (5, 5), 2, (2, 2))?,
                    norm: true,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let to_1d = Conv1d::new(&mut pb.sub("to_1d"), c2 * CENTRAL_HEIGHT, cc, 1)?;
        let blocks = (0..cfg.blocks)
            .map(|i| ConditionalBlock::new(&mut pb.sub(format!("block.{i}")), cc))
            .collect::<Result<Vec<_>>>()?;
        let from_1d = Conv1d::new(&mut pb.sub("from_1d"), cc, c2 * CENTRAL_HEIGHT, 1)?;
        let up = [(c2, c1), (c1, c0)]
            .iter()
            .enumerate()
            .map(|(i, &(cin_, cout))| {
                Ok(UpBlock {
                    conv: Conv2d::same(&mut pb.sub(format!("up.{i}")), cin_, 4 * 2 * cout, (5, 5))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let conv_out = Conv2d::same(&mut pb.sub("conv_out"), c0, 1, (5, 15))?;
        // conv_in, 2 down, to_1d, from_1d, 2 up, conv_out: 2 tensors each;
        // every conditional block holds 6.
        let expected_params = 2 * 8 + 6 * cfg.blocks;
        Ok(Self {
            conv_in,
            down,
            to_1d,
            blocks,
            from_1d,
            up,
            conv_out,
            expected_params,
        })
    }

    fn into_generator(self, config: GeneratorConfig, params: Params) -> Generator {
        Generator {
            config,
            params,
            conv_in: self.conv_in,
            down: self.down,
            to_1d: self.to_1d,
            blocks: self.blocks,
            from_1d: self.from_1d,
            up: self.up,
            conv_out: self.conv_out,
        }
    }
}

/// Runs any [`Converter`] on one spectrogram of arbitrary length, padding to
/// a multiple of 4 frames and trimming the result.
pub fn convert_mel<C: Converter + ?Sized>(
    converter: &C,
    x_src: &MelSpectrogram,
    pair: &ConditioningPair,
) -> Result<MelSpectrogram> {
    x_src.ensure_finite()?;
    let (padded, len) = pad_to_multiple(x_src, TIME_MULTIPLE);
    let x = padded.to_tensor(DType::F32, &Device::Cpu)?;
    let (s, t) = pair.tensors(DType::F32)?;
    let y = converter.convert(&x, &s, &t)?;
    let mut out = trim(&MelSpectrogram::from_tensor(&y.to_dtype(DType::F32)?)?, len)?;
    out.meta = x_src.meta.clone();
    out.meta.speaker_id = pair.s_trg.speaker_id.clone();
    out.ensure_finite()?;
    Ok(out)
}

/// Repeats the last frame until the length is a multiple of `multiple`.
/// Returns the padded spectrogram and the original length.
pub fn pad_to_multiple(mel: &MelSpectrogram, multiple: usize) -> (MelSpectrogram, usize) {
    let t = mel.n_frames();
    let target = t.div_ceil(multiple.max(1)) * multiple.max(1);
    if target == t {
        return (mel.clone(), t);
    }
    let mut data = mel.as_slice().to_vec();
    let last = mel.frame(t - 1).to_vec();
    for _ in t..target {
        data.extend_from_slice(&last);
    }
    let padded = MelSpectrogram::new(data, target)
        .expect("padding keeps the bin count")
        .with_meta(mel.meta.clone());
    (padded, t)
}

/// First `len` frames of `mel`.
pub fn trim(mel: &MelSpectrogram, len: usize) -> Result<MelSpectrogram> {
    if len > mel.n_frames() {
        return Err(Error::Shape(format!(
            "cannot trim {} frames to {len}",
            mel.n_frames()
        )));
    }
    mel.slice(0, len)
}
