use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest and largest crop length, and the step between allowed lengths.
pub const CROP_MIN: usize = 96;
pub const CROP_MAX: usize = 320;
pub const CROP_STEP: usize = 32;

/// Every hyperparameter of the adversarial training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda_id: f64,
    pub lambda_cyc: f64,
    /// Steps over which `lambda_id` decays linearly to zero; 0 keeps it fixed.
    pub lambda_id_decay_steps: usize,
    pub lsgan_a: f64,
    pub lsgan_b: f64,
    pub clip_norm: f64,
    pub g_lr: f64,
    pub d_lr_ratio: f64,
    pub dropout_start_epoch: usize,
    pub dropout_p: f64,
    /// Allowed crop lengths for variable-length sampling.
    pub crop_multiples: Vec<usize>,
    /// Crop length seen by the discriminator.
    pub fixed_crop_k: usize,
    /// Desired ratio of G's adversarial loss to D's loss.
    pub d_g_balance_target: f64,
    /// Epochs between balance-controller decisions.
    pub balance_interval: usize,
    pub max_d_steps: usize,
    pub seed: u64,
    pub epochs: usize,
    /// Generator updates per epoch.
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// Epochs between periodic checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    /// Length of the in-memory loss history.
    pub history_len: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_id: 5.0,
            lambda_cyc: 10.0,
            lambda_id_decay_steps: 10_000,
            lsgan_a: 1.0,
            lsgan_b: 0.0,
            clip_norm: 1.0,
            g_lr: 2e-4,
            d_lr_ratio: 0.5,
            dropout_start_epoch: 3000,
            dropout_p: 0.3,
            crop_multiples: (CROP_MIN..=CROP_MAX).step_by(CROP_STEP).collect(),
            fixed_crop_k: 256,
            d_g_balance_target: 10.0,
            balance_interval: 500,
            max_d_steps: 5,
            seed: 0,
            epochs: 5000,
            steps_per_epoch: 1,
            batch_size: 4,
            checkpoint_every: 500,
            history_len: 1000,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lambda_id >= 0.0 && self.lambda_cyc >= 0.0) {
            return fail(format!(
                "lambda_id ({}) and lambda_cyc ({}) must be non-negative",
                self.lambda_id, self.lambda_cyc
            ));
        }
        if self.lsgan_a == self.lsgan_b || !self.lsgan_a.is_finite() || !self.lsgan_b.is_finite() {
            return fail(format!(
                "LSGAN constants a ({}) and b ({}) must be finite and distinct",
                self.lsgan_a, self.lsgan_b
            ));
        }
        if !(self.clip_norm > 0.0) {
            return fail(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if !(self.g_lr > 0.0 && self.d_lr_ratio > 0.0) {
            return fail("learning rate and D/G ratio must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p));
        }
        if self.crop_multiples.is_empty() {
            return fail("crop_multiples must not be empty".into());
        }
        for &k in self.crop_multiples.iter().chain(std::iter::once(&self.fixed_crop_k)) {
            if !valid_crop(k) {
                return fail(format!(
                    "crop length {k} is not a multiple of {CROP_STEP} within [{CROP_MIN}, {CROP_MAX}]"
                ));
            }
        }
        if !(self.d_g_balance_target > 0.0) {
            return fail("d_g_balance_target must be positive".into());
        }
        if self.max_d_steps == 0 || self.batch_size == 0 || self.steps_per_epoch == 0 {
            return fail("max_d_steps, batch_size and steps_per_epoch must be positive".into());
        }
        if self.balance_interval == 0 {
            return fail("balance_interval must be positive".into());
        }
        Ok(())
    }

    pub fn d_lr(&self) -> f64 {
        self.g_lr * self.d_lr_ratio
    }

    /// Identity weight after `step` generator updates.
    pub fn lambda_id_at(&self, step: usize) -> f64 {
        if self.lambda_id_decay_steps == 0 {
            return self.lambda_id;
        }
        let frac = (step as f64 / self.lambda_id_decay_steps as f64).min(1.0);
        self.lambda_id * (1.0 - frac)
    }

    /// D loss to G adversarial loss ratio above which D gets more steps.
    pub fn balance_upper(&self) -> f64 {
        1.5 / self.d_g_balance_target
    }

    /// Ratio below which D gets fewer steps.
    pub fn balance_lower(&self) -> f64 {
        0.5 / self.d_g_balance_target
    }

    pub fn dropout_active(&self, epoch: usize) -> bool {
        self.dropout_p > 0.0 && epoch >= self.dropout_start_epoch
    }
}

pub fn valid_crop(k: usize) -> bool {
    (CROP_MIN..=CROP_MAX).contains(&k) && k % CROP_STEP == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TrainingConfig::default();
        c.validate().unwrap();
        assert_eq!(c.crop_multiples, vec![96, 128, 160, 192, 224, 256, 288, 320]);
        assert_eq!(c.d_lr(), 0.5 * c.g_lr);
        assert!((c.balance_upper() - 0.15).abs() < 1e-12);
        assert!((c.balance_lower() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn invariants_are_enforced() {
        let bad = [
            TrainingConfig { lambda_id: -1.0, ..Default::default() },
            TrainingConfig { lsgan_a: 0.0, ..Default::default() },
            TrainingConfig { clip_norm: 0.0, ..Default::default() },
            TrainingConfig { crop_multiples: vec![100], ..Default::default() },
            TrainingConfig { fixed_crop_k: 352, ..Default::default() },
            TrainingConfig { dropout_p: 1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn lambda_id_decays_linearly_to_zero() {
        let c = TrainingConfig::default();
        assert_eq!(c.lambda_id_at(0), 5.0);
        assert!((c.lambda_id_at(5000) - 2.5).abs() < 1e-12);
        assert_eq!(c.lambda_id_at(10_000), 0.0);
        assert_eq!(c.lambda_id_at(20_000), 0.0);
        let fixed = TrainingConfig { lambda_id_decay_steps: 0, ..Default::default() };
        assert_eq!(fixed.lambda_id_at(1_000_000), 5.0);
    }

    #[test]
    fn dropout_starts_at_its_epoch() {
        let c = TrainingConfig::default();
        assert!(!c.dropout_active(2999));
        assert!(c.dropout_active(3000));
    }
}
