use serde::{Deserialize, Serialize};

use super::dtw::AlignmentPath;
use crate::audio::{MelSpectrogram, SilenceMask};
use crate::error::{Error, Result};
use crate::N_MELS;

/// Aligned spectral distances. MAE and MSE are means over every bin of
/// every counted frame pair; `cos_theta` is the mean per-pair cosine
/// similarity (1 means identical direction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub mae: f64,
    pub mse: f64,
    pub cos_theta: f64,
    pub frames_evaluated: usize,
}

/// Cosine similarity of two frames. Two all-zero frames count as identical
/// and a zero frame against a non-zero one as orthogonal.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na > 0.0, nb > 0.0) {
        (true, true) => (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Metrics over the path pairs whose target frame is non-silent.
pub fn aligned_metrics(
    converted: &MelSpectrogram,
    target: &MelSpectrogram,
    path: &AlignmentPath,
    target_mask: &SilenceMask,
) -> Result<FrameMetrics> {
    if target_mask.len() != target.n_frames() {
        return Err(Error::Evaluation(format!(
            "mask has {} flags for a {}-frame target",
            target_mask.len(),
            target.n_frames()
        )));
    }
    let (mut abs, mut sq, mut cos, mut count) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for &(i, j) in &path.pairs {
        if i >= converted.n_frames() || j >= target.n_frames() {
            return Err(Error::Evaluation(format!("path pair ({i}, {j}) out of range")));
        }
        if !target_mask.flags[j] {
            continue;
        }
        let (c, t) = (converted.frame(i), target.frame(j));
        for (&x, &y) in c.iter().zip(t) {
            let d = x as f64 - y as f64;
            abs += d.abs();
            sq += d * d;
        }
        cos += cosine_similarity(c, t);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Evaluation(
            "no non-silent target frames on the alignment path".into(),
        ));
    }
    let entries = (count * N_MELS) as f64;
    Ok(FrameMetrics {
        mae: abs / entries,
        mse: sq / entries,
        cos_theta: cos / count as f64,
        frames_evaluated: count,
    })
}
