//! Generalised end-to-end (softmax variant) speaker loss.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::{Init, ParamBuilder};
#[cfg(test)]
use crate::nn::scalar;

/// Learned similarity scale `w` (kept positive) and bias `b`.
#[derive(Debug, Clone)]
pub struct Ge2eHead {
    pub w: Tensor,
    pub b: Tensor,
}

impl Ge2eHead {
    pub fn new(pb: &mut ParamBuilder, init_w: f64, init_b: f64) -> Result<Self> {
        Ok(Self {
            w: pb.get("w", &[1], Init::Const(init_w))?,
            b: pb.get("b", &[1], Init::Const(init_b))?,
        })
    }

    pub fn loss(&self, embeddings: &Tensor) -> Result<Tensor> {
        ge2e_loss(embeddings, &self.w, &self.b)
    }
}

/// GE2E softmax loss for embeddings shaped `(N speakers, M utterances, D)`.
///
/// Similarities are cosines to speaker centroids, with each utterance
/// excluded from its own speaker's centroid, mapped through `w * cos + b`.
/// The per-utterance loss `-S_own + logsumexp_k S_k` is averaged over all
/// `N * M` utterances. `w` and `b` are one-element tensors.
pub fn ge2e_loss(embeddings: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, m, d) = embeddings.dims3()?;
    if n < 2 {
        return Err(Error::Parameter(format!(
            "GE2E needs at least 2 speakers, got {n}"
        )));
    }
    if m < 2 {
        return Err(Error::Parameter(format!(
            "GE2E needs at least 2 utterances per speaker, got {m}"
        )));
    }
    let dtype = embeddings.dtype();
    let dev = embeddings.device();

    let sums = embeddings.sum_keepdim(1)?; // (N, 1, D)
    let centroids = (sums.squeeze(1)? / m as f64)?; // (N, D)
    let exclusive = (embeddings.broadcast_sub(&sums)?.neg()? / (m - 1) as f64)?; // (N, M, D)

    let e_unit = unit_rows(&embeddings.reshape((n * m, d))?)?;
    let c_unit = unit_rows(&centroids)?;
    let x_unit = unit_rows(&exclusive.reshape((n * m, d))?)?;

    let cos_all = e_unit.matmul(&c_unit.t()?)?.reshape((n, m, n))?;
    let cos_own = (&e_unit * &x_unit)?.sum(1)?.reshape((n, m, 1))?;

    let eye: Vec<f64> = (0..n * n)
        .map(|i| if i / n == i % n { 1.0 } else { 0.0 })
        .collect();
    let own_mask = Tensor::from_vec(eye, (n, 1, n), dev)?.to_dtype(dtype)?;
    let other_mask = (1.0 - &own_mask)?;
    let cos = (cos_all.broadcast_mul(&other_mask)? + cos_own.broadcast_mul(&own_mask)?)?;

    let w_pos = w.maximum(1e-6)?;
    let sim = cos
        .broadcast_mul(&w_pos.reshape((1, 1, 1))?)?
        .broadcast_add(&b.reshape((1, 1, 1))?)?;

    let shift = sim.max_keepdim(2)?.detach();
    let lse = (sim.broadcast_sub(&shift)?.exp()?.sum_keepdim(2)?.log()? + &shift)?; // (N, M, 1)
    let s_own = sim.broadcast_mul(&own_mask)?.sum_keepdim(2)?;
    let per_utt = (lse - s_own)?;
    Ok(per_utt.mean_all()?.to_dtype(dtype)?)
}

fn unit_rows(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)? + 1e-12)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}
