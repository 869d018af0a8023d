use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{edit_score, f1_at, frame_accuracy, F1_THRESHOLDS};
use super::probe::ProbeModel;
use crate::error::{Error, Result};
use crate::io::{Corpus, StorageReport};

/// Describes the segment matching used for F1, so reports stay comparable.
pub const F1_MATCHING_RULE: &str =
    "greedy in predicted temporal order; same-class unmatched ground truth of max IoU; TP iff IoU >= tau";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub accuracy: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
}

impl SegmentationScores {
    pub fn of(pred: &[usize], gt: &[usize]) -> Result<Self> {
        Ok(Self {
            accuracy: frame_accuracy(pred, gt)?,
            edit: edit_score(pred, gt)?,
            f1_10: f1_at(pred, gt, F1_THRESHOLDS[0])?,
            f1_25: f1_at(pred, gt, F1_THRESHOLDS[1])?,
            f1_50: f1_at(pred, gt, F1_THRESHOLDS[2])?,
        })
    }

    /// Unweighted mean over videos.
    pub fn mean(scores: &[Self]) -> Self {
        let n = scores.len().max(1) as f64;
        let sum = |f: fn(&Self) -> f64| scores.iter().map(f).sum::<f64>() / n;
        Self {
            accuracy: sum(|s| s.accuracy),
            edit: sum(|s| s.edit),
            f1_10: sum(|s| s.f1_10),
            f1_25: sum(|s| s.f1_25),
            f1_50: sum(|s| s.f1_50),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: SegmentationScores,
    pub videos: usize,
    pub f1_matching: String,
    pub smoothing_width: usize,
    pub storage: Option<StorageReport>,
    /// Every configuration and seed that produced the evaluated model.
    pub config: serde_json::Value,
}

/// Scores each labelled sequence pair and averages across videos.
pub fn score_videos(pairs: &[(Vec<usize>, Vec<usize>)]) -> Result<SegmentationScores> {
    if pairs.is_empty() {
        return Err(Error::Config("cannot evaluate an empty test set".into()));
    }
    let per_video = pairs
        .par_iter()
        .map(|(p, g)| SegmentationScores::of(p, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentationScores::mean(&per_video))
}

pub fn evaluate_report(
    probe: &ProbeModel,
    test: &Corpus,
    storage: Option<StorageReport>,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    if test.videos.is_empty() {
        return Err(Error::Config("cannot evaluate an empty test set".into()));
    }
    if probe.params.in_dim() != test.feature_dim() || probe.num_classes() != test.num_actions() {
        return Err(Error::Shape(format!(
            "probe maps {} -> {}, test corpus has D={} A={}",
            probe.params.in_dim(),
            probe.num_classes(),
            test.feature_dim(),
            test.num_actions()
        )));
    }
    let pairs = test
        .videos
        .par_iter()
        .map(|v| Ok((probe.predict(&v.features, true)?, v.frame_labels())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport {
        metrics: score_videos(&pairs)?,
        videos: test.videos.len(),
        f1_matching: F1_MATCHING_RULE.into(),
        smoothing_width: probe.config.median_width,
        storage,
        config,
    })
}
