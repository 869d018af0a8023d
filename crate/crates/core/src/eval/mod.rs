//! Downstream evaluation: a frame-wise probe and the standard segmentation metrics.

pub mod metrics;
pub mod probe;
pub mod report;

pub use metrics::{edit_score, f1_at, frame_accuracy, F1_THRESHOLDS};
pub use probe::{median_smooth, probe_loss, read_probe, train_probe, write_probe, ProbeConfig, ProbeLoss, ProbeModel};
pub use report::{evaluate_report, score_videos, MetricsReport, SegmentationScores, F1_MATCHING_RULE};
