//! Objective evaluation: DTW alignment, masked spectral metrics, embedding
//! distance, cyclic reconstruction and throughput timing.

mod dtw;
mod metrics;
mod report;
mod similarity;
mod speed;

pub use dtw::{dtw_align, dtw_align_frames, frame_distance, AlignmentPath};
pub use metrics::{aligned_metrics, cosine_similarity, FrameMetrics};
pub use report::{write_csv, Aggregate, MetricsBlock, MetricsReport, PairRecord};
pub use similarity::{compare, cyclic_reconstruction_eval, speaker_similarity, PairMetrics};
pub use speed::{
    median, speed_benchmark, time_per_audio_second, BenchModels, PipelineStage, SpeedResult,
    MIN_TIMED_RUNS, MIN_WARMUP_RUNS,
};
