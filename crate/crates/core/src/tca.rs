//! Conditional VAE over single frames, conditioned on the action label and the
//! frame's relative position inside its segment.
//!
//! Encoder: `[x ‖ onehot(a) ‖ c] -> h -> 2d` (first `d` outputs are the mean,
//! the rest the log-variance). Decoder: `[z ‖ onehot(a) ‖ c] -> h -> D`.
//! The prior is a fixed standard normal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Corpus;
use crate::tensor::{
    mlp_backward_traced, mlp_forward, mlp_forward_traced, Activation, AdamConfig,
    AdamState, Matrix, MlpParams, SeededRng,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcaDims {
    pub feature_dim: usize,
    pub num_actions: usize,
    pub latent_dim: usize,
}

impl TcaDims {
    pub fn encoder_in(&self) -> usize {
        self.feature_dim + self.num_actions + 1
    }

    pub fn decoder_in(&self) -> usize {
        self.latent_dim + self.num_actions + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcaConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the KL term.
    pub beta: f64,
    pub seed: u64,
}

impl Default for TcaConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            hidden: 512,
            epochs: 7500,
            learning_rate: 1e-3,
            batch_size: 512,
            beta: 1.0,
            seed: 0,
        }
    }
}

impl TcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "latent_dim, hidden, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.beta >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("beta must be >= 0 and learning_rate > 0".into()));
        }
        Ok(())
    }
}

/// Relative position of each frame inside a segment of `length` frames:
/// `(i - 1) / (length - 1)`, and `[0.0]` for a single frame.
pub fn coherence(length: usize) -> Result<Vec<f32>> {
    match length {
        0 => Err(Error::Domain("coherence of an empty segment".into())),
        1 => Ok(vec![0.0]),
        _ => {
            let denom = (length - 1) as f64;
            Ok((0..length).map(|i| (i as f64 / denom) as f32).collect())
        }
    }
}

/// Diagonal Gaussian posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorParams {
    pub mean: Vec<f32>,
    pub logvar: Vec<f32>,
}

/// `z = μ + exp(logvar / 2) ⊙ ε` with `ε ~ N(0, I)`.
pub fn reparameterize(post: &PosteriorParams, rng: &mut SeededRng) -> Vec<f32> {
    post.mean
        .iter()
        .zip(&post.logvar)
        .map(|(m, lv)| (*m as f64 + (0.5 * *lv as f64).exp() * rng.normal()) as f32)
        .collect()
}

fn check_condition(num_actions: usize, action: usize, c: f32) -> Result<()> {
    if action >= num_actions {
        return Err(Error::Domain(format!(
            "action {action} outside a vocabulary of {num_actions}"
        )));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Domain(format!("coherence {c} outside [0, 1]")));
    }
    Ok(())
}

/// Writes `[head ‖ onehot(action) ‖ c]` into `row`.
fn conditioned_row(row: &mut [f32], head: &[f32], action: usize, c: f32) {
    let h = head.len();
    row[..h].copy_from_slice(head);
    let end = row.len() - 1;
    row[h..end].iter_mut().for_each(|v| *v = 0.0);
    row[h + action] = 1.0;
    row[row.len() - 1] = c;
}

/// The frozen generator half of the model: everything needed to turn codes back
/// into frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub dims: TcaDims,
    pub params: MlpParams,
}

impl Decoder {
    pub fn new(dims: TcaDims, params: MlpParams) -> Result<Self> {
        if params.in_dim() != dims.decoder_in() || params.out_dim() != dims.feature_dim {
            return Err(Error::Shape(format!(
                "decoder maps {} -> {}, dims require {} -> {}",
                params.in_dim(),
                params.out_dim(),
                dims.decoder_in(),
                dims.feature_dim
            )));
        }
        Ok(Self { dims, params })
    }

    /// Decoder input rows for per-frame codes `codes` (`n x d`).
    pub fn inputs(&self, codes: &Matrix, action: usize, coherence: &[f32]) -> Result<Matrix> {
        if codes.cols() != self.dims.latent_dim || codes.rows() != coherence.len() {
            return Err(Error::Shape(format!(
                "codes {:?} with {} coherence values for latent dim {}",
                codes.shape(),
                coherence.len(),
                self.dims.latent_dim
            )));
        }
        let mut input = Matrix::zeros(codes.rows(), self.dims.decoder_in());
        for (i, &c) in coherence.iter().enumerate() {
            check_condition(self.dims.num_actions, action, c)?;
            conditioned_row(input.row_mut(i), codes.row(i), action, c);
        }
        Ok(input)
    }

    pub fn decode(&self, z: &[f32], action: usize, c: f32) -> Result<Vec<f32>> {
        let codes = Matrix::from_vec(1, z.len(), z.to_vec())?;
        Ok(self.decode_rows(&codes, action, &[c])?.into_vec())
    }

    /// Decodes one frame per row of `codes`, all under the same action.
    pub fn decode_rows(&self, codes: &Matrix, action: usize, coherence: &[f32]) -> Result<Matrix> {
        mlp_forward(&self.params, &self.inputs(codes, action, coherence)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcaModel {
    pub encoder: MlpParams,
    pub decoder: Decoder,
}

/// A batch of training frames with their conditioning.
#[derive(Clone, Debug)]
pub struct TcaBatch {
    pub features: Matrix,
    pub actions: Vec<usize>,
    pub coherence: Vec<f32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcaLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

pub struct TcaGrads {
    pub encoder: crate::tensor::MlpGrads,
    pub decoder: crate::tensor::MlpGrads,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Per-epoch means, weighted by batch size.
    pub epochs: Vec<TcaLoss>,
    /// KL of every optimizer step.
    pub step_kl: Vec<f64>,
}

impl TcaModel {
    pub fn zeros(dims: TcaDims, hidden: usize) -> Self {
        let encoder = MlpParams::zeros(&[dims.encoder_in(), hidden, 2 * dims.latent_dim], Activation::Relu);
        let params = MlpParams::zeros(&[dims.decoder_in(), hidden, dims.feature_dim], Activation::Relu);
        Self {
            encoder,
            decoder: Decoder { dims, params },
        }
    }

    pub fn init(dims: TcaDims, hidden: usize, rng: &SeededRng) -> Self {
        let encoder = MlpParams::init(
            &[dims.encoder_in(), hidden, 2 * dims.latent_dim],
            Activation::Relu,
            &mut rng.split("encoder-init"),
        );
        let params = MlpParams::init(
            &[dims.decoder_in(), hidden, dims.feature_dim],
            Activation::Relu,
            &mut rng.split("decoder-init"),
        );
        Self {
            encoder,
            decoder: Decoder { dims, params },
        }
    }

    pub fn from_parts(encoder: MlpParams, decoder: Decoder) -> Result<Self> {
        let dims = decoder.dims;
        if encoder.in_dim() != dims.encoder_in() || encoder.out_dim() != 2 * dims.latent_dim {
            return Err(Error::Shape(format!(
                "encoder maps {} -> {}, dims require {} -> {}",
                encoder.in_dim(),
                encoder.out_dim(),
                dims.encoder_in(),
                2 * dims.latent_dim
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn dims(&self) -> TcaDims {
        self.decoder.dims
    }

    fn encoder_inputs(&self, features: &Matrix, actions: &[usize], coherence: &[f32]) -> Result<Matrix> {
        let dims = self.dims();
        if features.cols() != dims.feature_dim || features.rows() != actions.len() || actions.len() != coherence.len() {
            return Err(Error::Shape(format!(
                "encoder batch {:?} with {} actions and {} coherence values",
                features.shape(),
                actions.len(),
                coherence.len()
            )));
        }
        let mut input = Matrix::zeros(features.rows(), dims.encoder_in());
        for i in 0..features.rows() {
            check_condition(dims.num_actions, actions[i], coherence[i])?;
            conditioned_row(input.row_mut(i), features.row(i), actions[i], coherence[i]);
        }
        Ok(input)
    }

    pub fn encode(&self, x: &[f32], action: usize, c: f32) -> Result<PosteriorParams> {
        let features = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let (mean, logvar) = self.encode_rows(&features, &[action], &[c])?;
        Ok(PosteriorParams {
            mean: mean.into_vec(),
            logvar: logvar.into_vec(),
        })
    }

    /// Posterior means and log-variances, one row per frame.
    pub fn encode_rows(&self, features: &Matrix, actions: &[usize], coherence: &[f32]) -> Result<(Matrix, Matrix)> {
        let out = mlp_forward(&self.encoder, &self.encoder_inputs(features, actions, coherence)?)?;
        let d = self.dims().latent_dim;
        Ok((out.slice_cols(0, d), out.slice_cols(d, d)))
    }

    pub fn decode(&self, z: &[f32], action: usize, c: f32) -> Result<Vec<f32>> {
        self.decoder.decode(z, action, c)
    }

    /// Loss with one reparameterized sample per frame, noise drawn from `rng`.
    pub fn loss(&self, batch: &TcaBatch, beta: f64, rng: &mut SeededRng) -> Result<TcaLoss> {
        let noise = rng.gaussian_draw(batch.features.rows(), self.dims().latent_dim);
        Ok(self.loss_and_grads(batch, &noise, beta, false)?.0)
    }

    /// Loss for explicit reparameterization noise, plus gradients when asked.
    ///
    /// `recon` is the squared error averaged over frames and feature dims; `kl`
    /// is the batch mean of `½ Σ (μ² + exp(lv) − lv − 1)`; `total = recon + β·kl`.
    pub fn loss_and_grads(
        &self,
        batch: &TcaBatch,
        noise: &Matrix,
        beta: f64,
        want_grads: bool,
    ) -> Result<(TcaLoss, Option<TcaGrads>)> {
        let dims = self.dims();
        let (b, d, f) = (batch.features.rows(), dims.latent_dim, dims.feature_dim);
        if b == 0 {
            return Err(Error::Domain("empty batch".into()));
        }
        if noise.shape() != (b, d) {
            return Err(Error::Shape(format!("noise {:?}, expected ({b}, {d})", noise.shape())));
        }
        let enc_in = self.encoder_inputs(&batch.features, &batch.actions, &batch.coherence)?;
        let enc = mlp_forward_traced(&self.encoder, &enc_in)?;
        let stats = enc.output();

        let mut dec_in = Matrix::zeros(b, dims.decoder_in());
        let mut sigma = Matrix::zeros(b, d);
        let mut kl = 0.0f64;
        let mut z = vec![0f32; d];
        for i in 0..b {
            let row = stats.row(i);
            for j in 0..d {
                let (m, lv) = (row[j] as f64, row[d + j] as f64);
                let s = (0.5 * lv).exp();
                sigma.set(i, j, s as f32);
                z[j] = (m + s * noise.get(i, j) as f64) as f32;
                kl += 0.5 * (m * m + lv.exp() - lv - 1.0);
            }
            conditioned_row(dec_in.row_mut(i), &z, batch.actions[i], batch.coherence[i]);
        }
        kl /= b as f64;

        let dec = mlp_forward_traced(&self.decoder.params, &dec_in)?;
        let recon_out = dec.output();
        let scale = (b * f) as f64;
        let mut recon = 0.0f64;
        let mut g_out = Matrix::zeros(b, f);
        for i in 0..b {
            for j in 0..f {
                let diff = recon_out.get(i, j) as f64 - batch.features.get(i, j) as f64;
                recon += diff * diff;
                g_out.set(i, j, (2.0 * diff / scale) as f32);
            }
        }
        recon /= scale;
        let loss = TcaLoss {
            total: recon + beta * kl,
            recon,
            kl,
        };
        if !loss.total.is_finite() {
            return Err(Error::Numeric("variational loss".into()));
        }
        if !want_grads {
            return Ok((loss, None));
        }

        let (dec_grads, dec_in_grad) = mlp_backward_traced(&self.decoder.params, &dec, &g_out)?;
        let mut g_stats = Matrix::zeros(b, 2 * d);
        let bf = b as f64;
        for i in 0..b {
            let row = stats.row(i);
            for j in 0..d {
                let dz = dec_in_grad.get(i, j) as f64;
                let (m, lv) = (row[j] as f64, row[d + j] as f64);
                let dm = dz + beta * m / bf;
                let dlv = dz * 0.5 * sigma.get(i, j) as f64 * noise.get(i, j) as f64
                    + beta * 0.5 * (lv.exp() - 1.0) / bf;
                g_stats.set(i, j, dm as f32);
                g_stats.set(i, d + j, dlv as f32);
            }
        }
        let (enc_grads, _) = mlp_backward_traced(&self.encoder, &enc, &g_stats)?;
        Ok((
            loss,
            Some(TcaGrads {
                encoder: enc_grads,
                decoder: dec_grads,
            }),
        ))
    }
}

/// Every frame of the corpus as `(video, frame, action, coherence)`.
fn frame_table(corpus: &Corpus) -> Result<Vec<(usize, usize, usize, f32)>> {
    let mut out = Vec::with_capacity(corpus.total_frames());
    for (vi, v) in corpus.videos.iter().enumerate() {
        for s in &v.segments {
            for (i, c) in coherence(s.length)?.into_iter().enumerate() {
                out.push((vi, s.start + i, s.action, c));
            }
        }
    }
    Ok(out)
}

fn gather(corpus: &Corpus, frames: &[(usize, usize, usize, f32)]) -> TcaBatch {
    let dim = corpus.feature_dim();
    let mut features = Matrix::zeros(frames.len(), dim);
    for (i, &(v, t, _, _)) in frames.iter().enumerate() {
        features.row_mut(i).copy_from_slice(corpus.videos[v].features.row(t));
    }
    TcaBatch {
        features,
        actions: frames.iter().map(|f| f.2).collect(),
        coherence: frames.iter().map(|f| f.3).collect(),
    }
}

/// Fits the model on every frame of `corpus` with Adam, shuffling all frames
/// each epoch. Deterministic for a fixed seed.
pub fn train_tca(corpus: &Corpus, config: &TcaConfig) -> Result<(TcaModel, TrainTrace)> {
    train_tca_with(corpus, config, |_, _| {})
}

/// As [`train_tca`], calling `on_epoch(epoch, loss)` after each epoch.
pub fn train_tca_with(
    corpus: &Corpus,
    config: &TcaConfig,
    mut on_epoch: impl FnMut(usize, &TcaLoss),
) -> Result<(TcaModel, TrainTrace)> {
    config.validate()?;
    corpus.validate()?;
    let dims = TcaDims {
        feature_dim: corpus.feature_dim(),
        num_actions: corpus.num_actions(),
        latent_dim: config.latent_dim,
    };
    let root = SeededRng::new(config.seed);
    let mut model = TcaModel::init(dims, config.hidden, &root.split("tca"));
    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut enc_opt = AdamState::for_mlp(adam, &model.encoder);
    let mut dec_opt = AdamState::for_mlp(adam, &model.decoder.params);
    let mut frames = frame_table(corpus)?;
    let mut trace = TrainTrace::default();

    for epoch in 0..config.epochs {
        let mut rng = root.split_index("tca-epoch", epoch as u64);
        rng.shuffle(&mut frames);
        let mut sums = TcaLoss {
            total: 0.0,
            recon: 0.0,
            kl: 0.0,
        };
        for chunk in frames.chunks(config.batch_size) {
            let batch = gather(corpus, chunk);
            let noise = rng.gaussian_draw(chunk.len(), dims.latent_dim);
            let diverged = |e: Error| Error::Training {
                epoch,
                message: e.to_string(),
            };
            let (loss, grads) = model
                .loss_and_grads(&batch, &noise, config.beta, true)
                .map_err(diverged)?;
            let grads = grads.expect("requested");
            enc_opt.step_mlp(&mut model.encoder, &grads.encoder).map_err(diverged)?;
            dec_opt.step_mlp(&mut model.decoder.params, &grads.decoder).map_err(diverged)?;
            let w = chunk.len() as f64;
            sums.total += loss.total * w;
            sums.recon += loss.recon * w;
            sums.kl += loss.kl * w;
            trace.step_kl.push(loss.kl);
        }
        let n = frames.len() as f64;
        let mean = TcaLoss {
            total: sums.total / n,
            recon: sums.recon / n,
            kl: sums.kl / n,
        };
        if !model.encoder.is_finite() || !model.decoder.params.is_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite parameters".into(),
            });
        }
        on_epoch(epoch, &mean);
        trace.epochs.push(mean);
    }
    Ok((model, trace))
}
