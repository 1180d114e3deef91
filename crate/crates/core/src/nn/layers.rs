use candle_core::{Tensor, D};

use super::ops::sigmoid;
use super::{Init, ParamBuilder};
use crate::error::Result;

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Affine map over the last dimension.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, in_dim: usize, out_dim: usize) -> Result<Self> {
        let bound = fan_in_bound(in_dim);
        Ok(Self {
            weight: pb.get("weight", &[out_dim, in_dim], Init::Uniform(bound))?,
            bias: pb.get("bias", &[out_dim], Init::Uniform(bound))?,
        })
    }

    /// Linear layer with explicit initialisation for weight and bias.
    pub fn with_init(
        pb: &mut ParamBuilder,
        in_dim: usize,
        out_dim: usize,
        weight: Init,
        bias: Init,
    ) -> Result<Self> {
        Ok(Self {
            weight: pb.get("weight", &[out_dim, in_dim], weight)?,
            bias: pb.get("bias", &[out_dim], bias)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.broadcast_matmul(&self.weight.t()?)?;
        Ok(y.broadcast_add(&self.bias)?)
    }
}

/// 2-D convolution over `(B, C, H, W)` with independent height/width padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    pad: (usize, usize),
}

impl Conv2d {
    pub fn new(
        pb: &mut ParamBuilder,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: (usize, usize),
    ) -> Result<Self> {
        let bound = fan_in_bound(in_ch * kernel.0 * kernel.1);
        Ok(Self {
            weight: pb.get(
                "weight",
                &[out_ch, in_ch, kernel.0, kernel.1],
                Init::Uniform(bound),
            )?,
            bias: pb.get("bias", &[out_ch], Init::Uniform(bound))?,
            stride,
            pad,
        })
    }

    /// Size-preserving convolution (odd kernels, stride 1).
    pub fn same(
        pb: &mut ParamBuilder,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
    ) -> Result<Self> {
        Self::new(pb, in_ch, out_ch, kernel, 1, (kernel.0 / 2, kernel.1 / 2))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = x
            .pad_with_zeros(2, self.pad.0, self.pad.0)?
            .pad_with_zeros(3, self.pad.1, self.pad.1)?;
        let y = x.conv2d(&self.weight, 0, self.stride, 1, 1)?;
        let b = self.bias.reshape((1, (), 1, 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

/// 1-D convolution over `(B, C, L)`, size preserving for odd kernels.
#[derive(Debug, Clone)]
pub struct Conv1d {
    weight: Tensor,
    bias: Tensor,
    pad: usize,
}

impl Conv1d {
    pub fn new(pb: &mut ParamBuilder, in_ch: usize, out_ch: usize, kernel: usize) -> Result<Self> {
        let bound = fan_in_bound(in_ch * kernel);
        Ok(Self {
            weight: pb.get("weight", &[out_ch, in_ch, kernel], Init::Uniform(bound))?,
            bias: pb.get("bias", &[out_ch], Init::Uniform(bound))?,
            pad: kernel / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = x.pad_with_zeros(2, self.pad, self.pad)?;
        let y = x.conv1d(&self.weight, 0, 1, 1, 1)?;
        let b = self.bias.reshape((1, (), 1))?;
        Ok(y.broadcast_add(&b)?)
    }
}

/// One GRU layer (PyTorch gate layout: reset, update, new).
#[derive(Debug, Clone)]
pub struct GruLayer {
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
    hidden: usize,
}

impl GruLayer {
    pub fn new(pb: &mut ParamBuilder, input: usize, hidden: usize) -> Result<Self> {
        let bound = fan_in_bound(hidden);
        Ok(Self {
            w_ih: pb.get("w_ih", &[3 * hidden, input], Init::Uniform(bound))?,
            w_hh: pb.get("w_hh", &[3 * hidden, hidden], Init::Uniform(bound))?,
            b_ih: pb.get("b_ih", &[3 * hidden], Init::Uniform(bound))?,
            b_hh: pb.get("b_hh", &[3 * hidden], Init::Uniform(bound))?,
            hidden,
        })
    }

    /// `(B, T, input) -> (B, T, hidden)`, starting from a zero state.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let h_dim = self.hidden;
        // Input projections for all steps at once.
        let xp = x
            .broadcast_matmul(&self.w_ih.t()?)?
            .broadcast_add(&self.b_ih)?;
        let w_hh_t = self.w_hh.t()?;
        let mut h = Tensor::zeros((b, h_dim), x.dtype(), x.device())?;
        let mut outputs = Vec::with_capacity(t);
        for step in 0..t {
            let gx = xp.narrow(1, step, 1)?.squeeze(1)?;
            let gh = h.matmul(&w_hh_t)?.broadcast_add(&self.b_hh)?;
            let r = sigmoid(&(gx.narrow(D::Minus1, 0, h_dim)? + gh.narrow(D::Minus1, 0, h_dim)?)?)?;
            let z = sigmoid(
                &(gx.narrow(D::Minus1, h_dim, h_dim)? + gh.narrow(D::Minus1, h_dim, h_dim)?)?,
            )?;
            let n = (gx.narrow(D::Minus1, 2 * h_dim, h_dim)?
                + (r * gh.narrow(D::Minus1, 2 * h_dim, h_dim)?)?)?
                .tanh()?;
            // h' = (1 - z) * n + z * h = n + z * (h - n)
            h = (&n + (z * (&h - &n)?)?)?;
            outputs.push(h.clone());
        }
        Ok(Tensor::stack(&outputs, 1)?)
    }
}

/// Stacked GRU.
#[derive(Debug, Clone)]
pub struct Gru {
    layers: Vec<GruLayer>,
}

impl Gru {
    pub fn new(pb: &mut ParamBuilder, input: usize, hidden: usize, layers: usize) -> Result<Self> {
        let layers = (0..layers)
            .map(|i| GruLayer::new(&mut pb.sub(i), if i == 0 { input } else { hidden }, hidden))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// Output sequence of the top layer, `(B, T, hidden)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }
}
