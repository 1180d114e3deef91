//! Small neural-network toolkit on top of candle tensors: seeded parameter
//! stores, layers, normalisation ops, Adam and checkpoint persistence.

mod adam;
mod checkpoint;
mod layers;
pub mod ops;
mod params;

pub use adam::{clip_grad_norm, grad_norm, Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader};
pub use layers::{Conv1d, Conv2d, Gru, GruLayer, Linear};
pub use params::{Init, ParamBuilder, Params};

/// Value of a one-element tensor as `f64`.
pub fn scalar(t: &candle_core::Tensor) -> crate::Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.flatten_all()?.to_vec1::<f64>()?[0])
}
