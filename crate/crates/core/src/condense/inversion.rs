//! Latent-code inversion of a frozen decoder, one segment at a time.

use serde::{Deserialize, Serialize};

use super::instances::{instance_of_frame, split_instances};
use super::CondensedSegment;
use crate::error::{Error, Result};
use crate::tca::{coherence, Decoder};
use crate::tensor::{
    accumulate_row, mlp_forward_traced, mlp_input_grad, Activation, AdamConfig, AdamState, Matrix, MlpParams,
    SeededRng,
};

/// Number of codes per segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Instances {
    /// `K` codes, clamped to the segment length.
    Fixed(usize),
    /// One code per frame (`K = ℓ`).
    PerFrame,
}

impl Instances {
    pub fn for_length(self, length: usize) -> usize {
        match self {
            Instances::Fixed(k) => k.min(length),
            Instances::PerFrame => length,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// Codes drawn from the standard normal prior.
    PriorSample,
    /// Codes start at the mean encoder posterior over each instance.
    EncodedWarmStart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub instances: Instances,
    pub init: InitPolicy,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            learning_rate: 1e-2,
            instances: Instances::Fixed(8),
            init: InitPolicy::PriorSample,
            seed: 0,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("inversion needs at least one iteration".into()));
        }
        if matches!(self.instances, Instances::Fixed(0)) {
            return Err(Error::Config("instances per segment must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("inversion learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Decoder evaluation specialised to inflated codes.
///
/// The first layer is split into a per-instance code term and a per-frame
/// condition term. Both are summed in exactly the order the generic forward pass
/// uses, so outputs are bit-identical to decoding the inflated codes directly.
struct SegmentProblem<'a> {
    decoder: &'a Decoder,
    target: &'a Matrix,
    action: usize,
    coherence: Vec<f32>,
    instance: Vec<usize>,
    lengths: Vec<usize>,
    /// Code rows of the first-layer weight, `d x h`.
    code_weight: Matrix,
    tail: Option<MlpParams>,
}

struct Evaluation {
    loss: f64,
    grad: Option<Matrix>,
}

impl<'a> SegmentProblem<'a> {
    fn new(decoder: &'a Decoder, target: &'a Matrix, action: usize, k: usize) -> Result<Self> {
        let dims = decoder.dims;
        if target.cols() != dims.feature_dim {
            return Err(Error::Shape(format!(
                "segment has {} features, decoder emits {}",
                target.cols(),
                dims.feature_dim
            )));
        }
        if action >= dims.num_actions {
            return Err(Error::Domain(format!("action {action} outside vocabulary")));
        }
        let lengths = split_instances(target.rows(), k)?;
        let first = &decoder.params.layers[0];
        let tail = (decoder.params.layers.len() > 1)
            .then(|| MlpParams::new(decoder.params.layers[1..].to_vec()))
            .transpose()?;
        Ok(Self {
            decoder,
            target,
            action,
            coherence: coherence(target.rows())?,
            instance: instance_of_frame(&lengths),
            code_weight: first.weight.slice_rows(0, dims.latent_dim),
            lengths,
            tail,
        })
    }

    fn evaluate(&self, codes: &Matrix, want_grad: bool) -> Result<Evaluation> {
        let dims = self.decoder.dims;
        let first = &self.decoder.params.layers[0];
        let h = first.out_dim();
        let frames = self.target.rows();

        let code_terms = code_projection(codes, &self.code_weight);
        let action_row = first.weight.row(dims.latent_dim + self.action);
        let c_row = first.weight.row(dims.latent_dim + dims.num_actions);
        let mut pre = Matrix::zeros(frames, h);
        let mut hidden = Matrix::zeros(frames, h);
        let mut acc = vec![0.0f64; h];
        for i in 0..frames {
            let base = &code_terms[self.instance[i] * h..(self.instance[i] + 1) * h];
            let c = self.coherence[i];
            for j in 0..h {
                let mut a = base[j] + action_row[j] as f64;
                if c != 0.0 {
                    a += c as f64 * c_row[j] as f64;
                }
                acc[j] = a;
            }
            first.finish_row(&acc, pre.row_mut(i), hidden.row_mut(i));
        }
        let tail_trace = match &self.tail {
            Some(tail) => Some(mlp_forward_traced(tail, &hidden)?),
            None => None,
        };
        let output = tail_trace.as_ref().map_or(&hidden, |t| t.output());

        let scale = (frames * dims.feature_dim) as f64;
        let mut loss = 0.0f64;
        let mut upstream = Matrix::zeros(frames, dims.feature_dim);
        for ((u, o), x) in upstream
            .data_mut()
            .iter_mut()
            .zip(output.data())
            .zip(self.target.data())
        {
            let diff = *o as f64 - *x as f64;
            loss += diff * diff;
            *u = (2.0 * diff / scale) as f32;
        }
        loss /= scale;
        if !want_grad || !loss.is_finite() {
            return Ok(Evaluation { loss, grad: None });
        }

        let mut d_hidden = match (&self.tail, &tail_trace) {
            (Some(tail), Some(trace)) => mlp_input_grad(tail, trace, &upstream)?,
            _ => upstream,
        };
        if first.activation == Activation::Relu {
            for (g, p) in d_hidden.data_mut().iter_mut().zip(pre.data()) {
                if *p <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        // sum per instance, then project back through the code rows of the weight
        let k = self.lengths.len();
        let mut per_instance = vec![0.0f64; k * h];
        for i in 0..frames {
            let dst = &mut per_instance[self.instance[i] * h..(self.instance[i] + 1) * h];
            for (s, g) in dst.iter_mut().zip(d_hidden.row(i)) {
                *s += *g as f64;
            }
        }
        let d = dims.latent_dim;
        let mut grad = Matrix::zeros(k, d);
        for q in 0..k {
            let g = &per_instance[q * h..(q + 1) * h];
            for m in 0..d {
                let w = self.code_weight.row(m);
                let s: f64 = g.iter().zip(w).map(|(a, b)| a * *b as f64).sum();
                grad.set(q, m, s as f32);
            }
        }
        Ok(Evaluation {
            loss,
            grad: Some(grad),
        })
    }
}

/// `codes * weight`, left in `f64`, row-major.
fn code_projection(codes: &Matrix, weight: &Matrix) -> Vec<f64> {
    let w = weight.cols();
    let mut out = vec![0.0f64; codes.rows() * w];
    for i in 0..codes.rows() {
        accumulate_row(codes.row(i), weight, &mut out[i * w..(i + 1) * w]);
    }
    out
}

/// Mean squared reconstruction error of `codes` against `target`.
pub fn inversion_loss(decoder: &Decoder, target: &Matrix, action: usize, codes: &Matrix) -> Result<f64> {
    let problem = SegmentProblem::new(decoder, target, action, codes.rows())?;
    if problem.lengths.len() != codes.rows() {
        return Err(Error::Shape(format!(
            "{} codes for a segment of {} frames",
            codes.rows(),
            target.rows()
        )));
    }
    Ok(problem.evaluate(codes, false)?.loss)
}

/// Inverts one segment starting from codes drawn from the prior.
pub fn invert_segment(
    decoder: &Decoder,
    target: &Matrix,
    action: usize,
    config: &InversionConfig,
    rng: &mut SeededRng,
) -> Result<CondensedSegment> {
    let k = config.instances.for_length(target.rows());
    let init = rng.gaussian_draw(k, decoder.dims.latent_dim);
    invert_segment_from(decoder, target, action, init, config)
}

/// Optimizes `init` (one row per instance) with Adam against the frozen
/// decoder; returns the lowest-loss codes seen, including the initial ones.
pub fn invert_segment_from(
    decoder: &Decoder,
    target: &Matrix,
    action: usize,
    init: Matrix,
    config: &InversionConfig,
) -> Result<CondensedSegment> {
    config.validate()?;
    if init.cols() != decoder.dims.latent_dim {
        return Err(Error::Shape(format!(
            "codes of width {}, decoder expects {}",
            init.cols(),
            decoder.dims.latent_dim
        )));
    }
    let problem = SegmentProblem::new(decoder, target, action, init.rows())?;
    if problem.lengths.len() != init.rows() {
        return Err(Error::Shape(format!(
            "{} initial codes for {} instances",
            init.rows(),
            problem.lengths.len()
        )));
    }
    let fail = |iteration: usize, message: String| Error::Inversion {
        context: format!("action {action}, {} frames", target.rows()),
        iteration,
        message,
    };
    let mut codes = init;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.learning_rate), &[codes.data().len()]);
    let mut best_loss = f64::INFINITY;
    let mut best = codes.clone();
    for it in 0..=config.iterations {
        let last = it == config.iterations;
        let eval = problem.evaluate(&codes, !last)?;
        if !eval.loss.is_finite() {
            return Err(fail(it, "non-finite inversion loss".into()));
        }
        if eval.loss < best_loss {
            best_loss = eval.loss;
            best.data_mut().copy_from_slice(codes.data());
        }
        if let Some(grad) = eval.grad {
            adam.step_matrix(&mut codes, &grad, "codes")
                .map_err(|e| fail(it, e.to_string()))?;
        }
    }
    Ok(CondensedSegment {
        action,
        length: target.rows(),
        codes: best,
        loss: best_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tca::TcaDims;

    fn toy_decoder(seed: u64) -> Decoder {
        let dims = TcaDims {
            feature_dim: 6,
            num_actions: 3,
            latent_dim: 4,
        };
        let params = MlpParams::init(&[dims.decoder_in(), 16, 6], Activation::Relu, &mut SeededRng::new(seed));
        Decoder::new(dims, params).unwrap()
    }

    #[test]
    fn fast_path_matches_generic_decoder_bitwise() {
        let dec = toy_decoder(1);
        let mut rng = SeededRng::new(2);
        let codes = rng.gaussian_draw(3, 4);
        let target = rng.gaussian_draw(7, 6);
        let problem = SegmentProblem::new(&dec, &target, 2, 3).unwrap();
        let lengths = split_instances(7, 3).unwrap();
        let inflated = super::super::instances::inflate_codes(&codes, &lengths).unwrap();
        let generic = dec.decode_rows(&inflated, 2, &coherence(7).unwrap()).unwrap();
        let expected: f64 = generic.squared_distance(&target).unwrap() / (7.0 * 6.0);
        let got = problem.evaluate(&codes, false).unwrap().loss;
        assert_eq!(got.to_bits(), expected.to_bits());
    }

    #[test]
    fn fixed_point_returns_init_unchanged() {
        let dec = toy_decoder(3);
        let z0 = SeededRng::new(4).gaussian_draw(2, 4);
        let lengths = split_instances(6, 2).unwrap();
        let inflated = super::super::instances::inflate_codes(&z0, &lengths).unwrap();
        let target = dec.decode_rows(&inflated, 1, &coherence(6).unwrap()).unwrap();
        let cfg = InversionConfig {
            iterations: 50,
            instances: Instances::Fixed(2),
            ..Default::default()
        };
        let seg = invert_segment_from(&dec, &target, 1, z0.clone(), &cfg).unwrap();
        assert_eq!(seg.codes, z0);
        assert_eq!(seg.loss, 0.0);
    }

    #[test]
    fn best_so_far_never_worse_than_init() {
        let dec = toy_decoder(5);
        let mut rng = SeededRng::new(6);
        let target = rng.gaussian_draw(9, 6);
        let init = rng.gaussian_draw(3, 4);
        let init_loss = inversion_loss(&dec, &target, 0, &init).unwrap();
        let cfg = InversionConfig {
            iterations: 20,
            learning_rate: 5.0,
            instances: Instances::Fixed(3),
            ..Default::default()
        };
        let seg = invert_segment_from(&dec, &target, 0, init, &cfg).unwrap();
        assert!(seg.loss <= init_loss);
        assert_eq!(inversion_loss(&dec, &target, 0, &seg.codes).unwrap(), seg.loss);
    }

    #[test]
    fn code_gradient_matches_finite_differences() {
        let dec = toy_decoder(7);
        let mut rng = SeededRng::new(8);
        let target = rng.gaussian_draw(5, 6);
        let codes = rng.gaussian_draw(2, 4);
        let problem = SegmentProblem::new(&dec, &target, 1, 2).unwrap();
        let grad = problem.evaluate(&codes, true).unwrap().grad.unwrap();
        let h = 1e-2f32;
        for idx in 0..codes.data().len() {
            let mut plus = codes.clone();
            plus.data_mut()[idx] += h;
            let mut minus = codes.clone();
            minus.data_mut()[idx] -= h;
            let fd = (problem.evaluate(&plus, false).unwrap().loss - problem.evaluate(&minus, false).unwrap().loss)
                / (2.0 * h as f64);
            let an = grad.data()[idx] as f64;
            assert!((fd - an).abs() <= 1e-3 * an.abs().max(fd.abs()).max(1e-1), "{idx}: {an} vs {fd}");
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let dec = toy_decoder(9);
        let target = Matrix::zeros(4, 5);
        let cfg = InversionConfig::default();
        assert!(invert_segment(&dec, &target, 0, &cfg, &mut SeededRng::new(0)).is_err());
        let target = Matrix::zeros(4, 6);
        assert!(invert_segment(&dec, &target, 3, &cfg, &mut SeededRng::new(0)).is_err());
        let zero_iters = InversionConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(invert_segment(&dec, &target, 0, &zero_iters, &mut SeededRng::new(0)).is_err());
    }
}
