//! Zero-shot voice conversion with a speaker-embedding conditioned GAN.
//!
//! The crate is organised along the processing chain:
//!
//! * [`audio`] turns waveforms into 80-bin log-Mel spectrograms and back.
//! * [`encoder`] maps utterances to unit-norm 256-d speaker embeddings.
//! * [`generator`] and [`discriminator`] are the conditional GAN pair.
//! * [`training`] holds the losses, batch sampling and the training engine.
//! * [`baseline`] is the one-to-one linear convolutional baseline.
//! * [`eval`] implements the DTW-aligned objective metrics and speed timing.
//! * [`data`] and [`pipeline`] cover manifests, configuration, persistence
//!   and the end-to-end commands driven by the CLI.

pub mod audio;
pub mod baseline;
pub mod data;
pub mod discriminator;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod generator;
pub mod mode;
pub mod nn;
pub mod pipeline;
pub mod synthetic;
pub mod training;

pub use audio::{MelSpectrogram, SilenceMask, Waveform};
pub use encoder::SpeakerEmbedding;
pub use error::{Error, Result};

/// Number of Mel bins in every spectrogram.
pub const N_MELS: usize = 80;
/// Dimension of every speaker embedding.
pub const EMBEDDING_DIM: usize = 256;
/// Sample rate all audio is resampled to on load.
pub const SAMPLE_RATE: u32 = 22050;
/// STFT hop length in samples.
pub const HOP_LENGTH: usize = 256;
/// STFT window and FFT length in samples.
pub const WIN_LENGTH: usize = 1024;

/// Sub-seed for one subsystem, derived from the run seed and a namespace
/// label so that subsystems draw independent random streams.
pub fn derive_seed(seed: u64, namespace: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(namespace.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
