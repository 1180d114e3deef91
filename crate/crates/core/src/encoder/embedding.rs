use candle_core::{DType, Device, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::EMBEDDING_DIM;

/// Tolerance on the unit-norm invariant.
pub const NORM_TOLERANCE: f64 = 1e-5;

/// A unit-length 256-d vector identifying a (possibly unseen) speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    vector: Vec<f32>,
    pub speaker_id: Option<String>,
}

impl SpeakerEmbedding {
    /// Scales `vector` to unit length.
    pub fn normalized(vector: Vec<f32>) -> Result<Self> {
        check_dim(&vector)?;
        let norm = l2(&vector);
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::Parameter(format!(
                "cannot normalise a vector of norm {norm}"
            )));
        }
        let vector = vector.iter().map(|&v| (v as f64 / norm) as f32).collect();
        Ok(Self {
            vector,
            speaker_id: None,
        })
    }

    /// Accepts a vector that must already have unit norm.
    pub fn from_unit(vector: Vec<f32>) -> Result<Self> {
        check_dim(&vector)?;
        let norm = l2(&vector);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            // Re-normalise vectors that drifted by float rounding only.
            if (norm - 1.0).abs() < 1e-3 {
                return Self::normalized(vector);
            }
            return Err(Error::Parameter(format!(
                "embedding norm {norm} is not 1 within {NORM_TOLERANCE}"
            )));
        }
        Ok(Self {
            vector,
            speaker_id: None,
        })
    }

    /// Uniformly distributed point on the unit sphere, usable as a synthetic
    /// speaker.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: Vec<f32> = (0..EMBEDDING_DIM)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                .collect();
            if let Ok(e) = Self::normalized(v) {
                return e;
            }
        }
    }

    /// Normalised mean of several embeddings.
    pub fn mean_of(items: &[SpeakerEmbedding]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Parameter("cannot average zero embeddings".into()));
        }
        let mut acc = vec![0.0f64; EMBEDDING_DIM];
        for e in items {
            for (a, &v) in acc.iter_mut().zip(&e.vector) {
                *a += v as f64;
            }
        }
        let mean: Vec<f32> = acc.iter().map(|a| (a / items.len() as f64) as f32).collect();
        Self::normalized(mean)
    }

    pub fn with_speaker(mut self, id: impl Into<String>) -> Self {
        self.speaker_id = Some(id.into());
        self
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vector
    }

    pub fn norm(&self) -> f64 {
        l2(&self.vector)
    }

    /// Euclidean distance to another embedding.
    pub fn distance(&self, other: &SpeakerEmbedding) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `(1, 256)` tensor.
    pub fn to_tensor(&self, dtype: DType) -> Result<Tensor> {
        Ok(Tensor::from_slice(&self.vector, (1, EMBEDDING_DIM), &Device::Cpu)?.to_dtype(dtype)?)
    }
}

fn check_dim(v: &[f32]) -> Result<()> {
    if v.len() != EMBEDDING_DIM {
        return Err(Error::Parameter(format!(
            "embedding has {} dimensions, expected {EMBEDDING_DIM}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("embedding contains non-finite values".into()));
    }
    Ok(())
}

fn l2(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}
