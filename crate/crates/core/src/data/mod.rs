//! Dataset manifests and run configuration.

mod config;
mod manifest;

pub use config::{EvaluationConfig, Paths, RunConfig};
pub use manifest::{
    ingest_dataset, split_items, test_count, DatasetManifest, IngestOptions, ParallelEntry, SpeakerEntry, Split,
    MANIFEST_FILE,
};
