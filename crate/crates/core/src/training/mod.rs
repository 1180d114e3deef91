//! Adversarial training: loss terms, crop sampling, learning-rate probing
//! and the training engine with its stabilisation schedule.

mod config;
mod engine;
mod losses;
mod lr_probe;
mod sampler;

pub use config::{valid_crop, TrainingConfig, CROP_MAX, CROP_MIN, CROP_STEP};
pub use engine::{
    train_stargan_zsvc, NonParallelDataset, RunOutputs, SpeakerData, StepRecord, TrainingState,
    EMBEDDING_UTTERANCES, GENERATOR_FILE, STATE_FILE,
};
pub use losses::{loss_cycle, loss_d_adv, loss_g_adv, loss_identity, total_generator_loss, total_generator_value};
pub use lr_probe::{lr_range_probe, ProbeResult, ProbeTarget, DEFAULT_PROBE_BUDGET};
pub use sampler::{sample_paired_crop, sample_training_crop, CropPolicy};
