//! Stateless tensor operations shared by the networks.

use candle_core::Tensor;

use crate::error::{Error, Result};

/// Variance stabiliser used by conditional instance normalisation.
pub const CIN_EPS: f64 = 1e-6;

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
const SELU_SCALE: f64 = 1.050_700_987_355_480_5;

pub fn selu(x: &Tensor) -> Result<Tensor> {
    let pos = x.relu()?;
    // min(x, 0) = -relu(-x)
    let neg = x.neg()?.relu()?.neg()?;
    let neg = ((neg.exp()? - 1.0)? * SELU_ALPHA)?;
    Ok(((pos + neg)? * SELU_SCALE)?)
}

/// Gated linear unit over dim 1: first half times sigmoid of second half.
pub fn glu(x: &Tensor) -> Result<Tensor> {
    let c = x.dim(1)?;
    if c % 2 != 0 {
        return Err(Error::Shape(format!("GLU needs an even channel count, got {c}")));
    }
    let a = x.narrow(1, 0, c / 2)?;
    let b = x.narrow(1, c / 2, c / 2)?;
    Ok((a * sigmoid(&b)?)?)
}

/// Conditional instance normalisation: for every (batch, channel) slice of
/// `x` (shape `(B, C, ...)`), `gamma * (x - mean) / sqrt(var + eps) + beta`
/// with the population variance. `gamma` and `beta` are `(B, C)`.
pub fn cin(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let dims = x.dims().to_vec();
    if dims.len() < 3 {
        return Err(Error::Shape(format!("CIN expects (B, C, ...), got {dims:?}")));
    }
    let (b, c) = (dims[0], dims[1]);
    if gamma.dims() != [b, c] || beta.dims() != [b, c] {
        return Err(Error::Shape(format!(
            "CIN modulation must be ({b}, {c}); got gamma {:?}, beta {:?}",
            gamma.dims(),
            beta.dims()
        )));
    }
    let flat = x.reshape((b, c, ()))?;
    let normed = normalize_last(&flat)?;
    let out = normed
        .broadcast_mul(&gamma.unsqueeze(2)?)?
        .broadcast_add(&beta.unsqueeze(2)?)?;
    Ok(out.reshape(dims)?)
}

/// Instance normalisation without modulation.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let dims = x.dims().to_vec();
    let (b, c) = (dims[0], dims[1]);
    let flat = x.reshape((b, c, ()))?;
    Ok(normalize_last(&flat)?.reshape(dims)?)
}

fn normalize_last(x: &Tensor) -> Result<Tensor> {
    let mean = x.mean_keepdim(2)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(2)?;
    let std = (var + CIN_EPS)?.sqrt()?;
    Ok(centered.broadcast_div(&std)?)
}

/// `(B, C*f*f, H, W) -> (B, C, H*f, W*f)`.
pub fn pixel_shuffle(x: &Tensor, f: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if f == 0 || c % (f * f) != 0 {
        return Err(Error::Parameter(format!(
            "pixel shuffle factor {f} does not divide {c} channels"
        )));
    }
    let oc = c / (f * f);
    Ok(x.reshape((b, oc, f, f, h, w))?
        .permute((0, 1, 4, 2, 5, 3))?
        .contiguous()?
        .reshape((b, oc, h * f, w * f))?)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, f: usize) -> Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    if f == 0 || h % f != 0 || w % f != 0 {
        return Err(Error::Parameter(format!(
            "pixel unshuffle factor {f} does not divide {h}x{w}"
        )));
    }
    Ok(x.reshape((b, c, h / f, f, w / f, f))?
        .permute((0, 1, 3, 5, 2, 4))?
        .contiguous()?
        .reshape((b, c * f * f, h / f, w / f))?)
}

/// `(B, C*f, L) -> (B, C, L*f)`.
pub fn pixel_shuffle_1d(x: &Tensor, f: usize) -> Result<Tensor> {
    let (b, c, l) = x.dims3()?;
    if f == 0 || c % f != 0 {
        return Err(Error::Parameter(format!(
            "pixel shuffle factor {f} does not divide {c} channels"
        )));
    }
    Ok(x.reshape((b, c / f, f, l))?
        .permute((0, 1, 3, 2))?
        .contiguous()?
        .reshape((b, c / f, l * f))?)
}

/// Global sum pooling over every axis after the channel axis: `(B, C, ...) -> (B, C)`.
pub fn global_sum_pool(x: &Tensor) -> Result<Tensor> {
    let (b, c) = (x.dim(0)?, x.dim(1)?);
    Ok(x.reshape((b, c, ()))?.sum(2)?)
}
