//! Frame- and segment-level segmentation metrics, all in percent.

use crate::error::{Error, Result};
use crate::io::{segments_from_framewise, Segment};
use crate::sampler::edit_distance_norm;

fn check(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.is_empty() || pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predicted labels for {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

pub fn frame_accuracy(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check(pred, gt)?;
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / gt.len() as f64)
}

fn check_nonempty(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Shape("segmental metrics need non-empty label sequences".into()));
    }
    Ok(())
}

fn transcript(labels: &[usize]) -> Result<Vec<usize>> {
    Ok(segments_from_framewise(labels)?.iter().map(|s| s.action).collect())
}

/// `100 · (1 − normalized edit distance)` between segment transcripts. The two
/// sequences may differ in length.
pub fn edit_score(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_nonempty(pred, gt)?;
    Ok(100.0 * (1.0 - edit_distance_norm(&transcript(pred)?, &transcript(gt)?)))
}

fn iou(a: &Segment, b: &Segment) -> f64 {
    let (a0, a1) = (a.start, a.start + a.length);
    let (b0, b1) = (b.start, b.start + b.length);
    let inter = a1.min(b1).saturating_sub(a0.max(b0));
    let union = a1.max(b1) - a0.min(b0);
    inter as f64 / union as f64
}

/// Segmental F1 at overlap threshold `tau`.
///
/// Predicted segments are scanned in temporal order; each is paired with the
/// unmatched same-class ground-truth segment of highest IoU (earliest on ties)
/// and counts as a true positive iff that IoU is at least `tau`, which consumes
/// the ground-truth segment. Segments are compared by frame index, so the two
/// sequences may differ in length.
pub fn f1_at(pred: &[usize], gt: &[usize], tau: f64) -> Result<f64> {
    check_nonempty(pred, gt)?;
    let ps = segments_from_framewise(pred)?;
    let gs = segments_from_framewise(gt)?;
    let mut used = vec![false; gs.len()];
    let mut tp = 0usize;
    for p in &ps {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gs.iter().enumerate() {
            if used[j] || g.action != p.action {
                continue;
            }
            let o = iou(p, g);
            if best.map_or(true, |(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, o)) = best {
            if o >= tau {
                used[j] = true;
                tp += 1;
            }
        }
    }
    let precision = tp as f64 / ps.len() as f64;
    let recall = tp as f64 / gs.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(200.0 * precision * recall / (precision + recall))
}

pub const F1_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];
