//! Frame-wise segmentation probe trained with cross-entropy plus a truncated
//! temporal smoothing penalty.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::archive::{decode_container, decode_mlp, encode_container, encode_mlp};
use crate::io::{read_file, write_atomic, Corpus};
use crate::tensor::{mlp_backward_traced, mlp_forward, mlp_forward_traced, Activation, AdamConfig, AdamState, Matrix, MlpParams, SeededRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weight of the smoothing term.
    pub smooth_weight: f64,
    /// Per-element clamp of the smoothing term, before squaring.
    pub smooth_clamp: f64,
    /// Mode-filter width applied at prediction time; `1` disables it.
    pub median_width: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 60,
            learning_rate: 5e-4,
            smooth_weight: 0.15,
            smooth_clamp: 4.0,
            median_width: 15,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.median_width == 0 {
            return Err(Error::Config("probe hidden, epochs and median width must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.smooth_weight >= 0.0) || !(self.smooth_clamp > 0.0) {
            return Err(Error::Config("probe learning rate and clamp must be positive, smoothing weight >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    pub params: MlpParams,
    pub config: ProbeConfig,
}

/// Loss terms of one video.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeLoss {
    pub total: f64,
    pub cls: f64,
    pub smooth: f64,
}

fn log_softmax_rows(logits: &Matrix) -> Vec<Vec<f64>> {
    logits
        .iter_rows()
        .map(|row| {
            let max = row.iter().fold(f32::NEG_INFINITY, |m, v| m.max(*v)) as f64;
            let lse = row.iter().map(|v| (*v as f64 - max).exp()).sum::<f64>().ln() + max;
            row.iter().map(|v| *v as f64 - lse).collect()
        })
        .collect()
}

/// Loss of one video's logits and, optionally, its gradient with respect to them.
///
/// The classification term is the frame-mean cross-entropy. The smoothing term
/// is the mean over `(T−1)·A` entries of `min(Δ², τ²)`, `Δ` being the change in
/// log-probability between consecutive frames with the earlier frame treated
/// as a constant.
pub fn probe_loss(logits: &Matrix, labels: &[usize], lambda: f64, clamp: f64, want_grad: bool) -> Result<(ProbeLoss, Option<Matrix>)> {
    let (t, a) = logits.shape();
    if labels.len() != t || t == 0 {
        return Err(Error::Shape(format!("{} labels for {t} frames", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= a) {
        return Err(Error::Domain(format!("label {bad} outside {a} classes")));
    }
    let lp = log_softmax_rows(logits);
    let cls = -labels.iter().enumerate().map(|(i, &y)| lp[i][y]).sum::<f64>() / t as f64;

    let mut g_lp = vec![vec![0.0f64; a]; t];
    let mut smooth = 0.0;
    if t > 1 {
        let n = ((t - 1) * a) as f64;
        let cap = clamp * clamp;
        for i in 1..t {
            for j in 0..a {
                let d = lp[i][j] - lp[i - 1][j];
                if d * d < cap {
                    smooth += d * d;
                    g_lp[i][j] = lambda * 2.0 * d / n;
                } else {
                    smooth += cap;
                }
            }
        }
        smooth /= n;
    }
    let loss = ProbeLoss {
        total: cls + lambda * smooth,
        cls,
        smooth,
    };
    if !want_grad {
        return Ok((loss, None));
    }
    let mut grad = Matrix::zeros(t, a);
    for i in 0..t {
        let p: Vec<f64> = lp[i].iter().map(|v| v.exp()).collect();
        let s: f64 = g_lp[i].iter().sum();
        for j in 0..a {
            let ce = (p[j] - f64::from(u8::from(j == labels[i]))) / t as f64;
            grad.set(i, j, (ce + g_lp[i][j] - p[j] * s) as f32);
        }
    }
    Ok((loss, Some(grad)))
}

/// Trains on whole videos, one optimizer step per video, videos reshuffled
/// every epoch. Returns the model and the per-epoch mean loss.
pub fn train_probe(corpus: &Corpus, config: &ProbeConfig) -> Result<(ProbeModel, Vec<ProbeLoss>)> {
    config.validate()?;
    let root = SeededRng::new(config.seed);
    let mut params = MlpParams::init(
        &[corpus.feature_dim(), config.hidden, corpus.num_actions()],
        Activation::Relu,
        &mut root.split("probe-init"),
    );
    let mut adam = AdamState::for_mlp(AdamConfig::with_lr(config.learning_rate), &params);
    let labels: Vec<Vec<usize>> = corpus.videos.iter().map(|v| v.frame_labels()).collect();
    let mut order: Vec<usize> = (0..corpus.videos.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        root.split_index("probe-epoch", epoch as u64).shuffle(&mut order);
        let mut sum = ProbeLoss::default();
        for &vi in &order {
            let fail = |e: Error| Error::Training {
                epoch,
                message: format!("video {}: {e}", corpus.videos[vi].id),
            };
            let fwd = mlp_forward_traced(&params, &corpus.videos[vi].features).map_err(fail)?;
            let (loss, grad) = probe_loss(fwd.output(), &labels[vi], config.smooth_weight, config.smooth_clamp, true)?;
            if !loss.total.is_finite() {
                return Err(fail(Error::Numeric("probe loss".into())));
            }
            let (grads, _) = mlp_backward_traced(&params, &fwd, &grad.expect("requested")).map_err(fail)?;
            adam.step_mlp(&mut params, &grads).map_err(fail)?;
            sum.total += loss.total;
            sum.cls += loss.cls;
            sum.smooth += loss.smooth;
        }
        let n = order.len() as f64;
        trace.push(ProbeLoss {
            total: sum.total / n,
            cls: sum.cls / n,
            smooth: sum.smooth / n,
        });
    }
    Ok((
        ProbeModel {
            params,
            config: config.clone(),
        },
        trace,
    ))
}

/// Sliding-window mode filter; the window is clipped at the sequence ends.
/// Ties keep the centre label when it is among the most frequent, otherwise
/// the lowest label wins.
pub fn median_smooth(labels: &[usize], width: usize) -> Vec<usize> {
    if width <= 1 || labels.is_empty() {
        return labels.to_vec();
    }
    let (left, right) = ((width - 1) / 2, width / 2);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    let mut out = Vec::with_capacity(labels.len());
    let n = labels.len();
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..n {
        let (want_lo, want_hi) = (i.saturating_sub(left), (i + right + 1).min(n));
        while hi < want_hi {
            counts[labels[hi]] += 1;
            hi += 1;
        }
        while lo < want_lo {
            counts[labels[lo]] -= 1;
            lo += 1;
        }
        let best = *counts.iter().max().expect("non-empty");
        let pick = if counts[labels[i]] == best {
            labels[i]
        } else {
            counts.iter().position(|&c| c == best).expect("max exists")
        };
        out.push(pick);
    }
    out
}

impl ProbeModel {
    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        mlp_forward(&self.params, features)
    }

    /// Per-frame argmax (lowest class on ties), optionally mode-filtered with
    /// the configured width.
    pub fn predict(&self, features: &Matrix, smooth: bool) -> Result<Vec<usize>> {
        let logits = self.logits(features)?;
        let raw: Vec<usize> = logits
            .iter_rows()
            .map(|row| {
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        Ok(if smooth {
            median_smooth(&raw, self.config.median_width)
        } else {
            raw
        })
    }

    pub fn num_classes(&self) -> usize {
        self.params.out_dim()
    }
}

const PROBE_MAGIC: &[u8; 4] = b"PROB";

pub fn write_probe(path: impl AsRef<Path>, probe: &ProbeModel) -> Result<()> {
    let manifest = serde_json::to_vec(&probe.config).map_err(|e| Error::json("probe config", e))?;
    let bytes = encode_container(PROBE_MAGIC, &[(b"MANI", manifest), (b"NETW", encode_mlp(&probe.params))]);
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_probe(path: impl AsRef<Path>) -> Result<ProbeModel> {
    let bytes = read_file(path.as_ref())?;
    let blocks = decode_container(PROBE_MAGIC, &bytes)?;
    let block = |tag: &[u8; 4]| {
        blocks
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::Archive(format!("probe file lacks {} block", String::from_utf8_lossy(tag))))
    };
    let config = serde_json::from_slice(block(b"MANI")?).map_err(|e| Error::json("probe config", e))?;
    let params = decode_mlp(block(b"NETW")?)?;
    Ok(ProbeModel { params, config })
}
