use serde::{Deserialize, Serialize};

use super::matrix::accumulate_row;
use super::{Matrix, SeededRng};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, v: f32) -> f32 {
        match self {
            Activation::Identity => v,
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
        }
    }
}

/// One dense layer: `act(x W + b)` with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f32>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Writes `act(x W + b)` for one row into `out`. The bias is added after the
    /// input terms so split evaluations can reproduce this sum bit for bit.
    pub(crate) fn forward_row(&self, x: &[f32], acc: &mut [f64], pre: &mut [f32], out: &mut [f32]) {
        acc.iter_mut().for_each(|a| *a = 0.0);
        accumulate_row(x, &self.weight, acc);
        self.finish_row(acc, pre, out);
    }

    pub(crate) fn finish_row(&self, acc: &[f64], pre: &mut [f32], out: &mut [f32]) {
        for j in 0..acc.len() {
            let p = (acc[j] + self.bias[j] as f64) as f32;
            pre[j] = p;
            out[j] = self.activation.apply(p);
        }
    }
}

/// Parameters of a feed-forward perceptron.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Per-layer gradients, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

/// Intermediate values of a forward pass, reused by backprop.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Input to each layer (the first entry is the network input).
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    preacts: Vec<Matrix>,
    output: Matrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a perceptron needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} for {} outputs",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Zero-initialized network over `dims` (e.g. `[in, hidden, out]`), with
    /// `hidden` activation between layers and identity on the output.
    pub fn zeros(dims: &[usize], hidden: Activation) -> Self {
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| Layer {
                weight: Matrix::zeros(dims[i], dims[i + 1]),
                bias: vec![0.0; dims[i + 1]],
                activation: if i + 1 == n { Activation::Identity } else { hidden },
            })
            .collect();
        Self { layers }
    }

    /// He-normal init for rectified layers, `1/in` variance for the output layer,
    /// zero biases.
    pub fn init(dims: &[usize], hidden: Activation, rng: &mut SeededRng) -> Self {
        let mut p = Self::zeros(dims, hidden);
        for layer in &mut p.layers {
            let gain = match layer.activation {
                Activation::Relu => 2.0,
                Activation::Identity => 1.0,
            };
            let std = (gain / layer.in_dim() as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = (rng.normal() * std) as f32;
            }
        }
        p
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

fn check_input(params: &MlpParams, input: &Matrix) -> Result<()> {
    if input.cols() != params.in_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            input.cols(),
            params.in_dim()
        )));
    }
    if !input.is_finite() {
        return Err(Error::Numeric("network input".into()));
    }
    Ok(())
}

/// Forward pass over a batch of rows.
pub fn mlp_forward(params: &MlpParams, input: &Matrix) -> Result<Matrix> {
    Ok(mlp_forward_traced(params, input)?.output)
}

pub fn mlp_forward_traced(params: &MlpParams, input: &Matrix) -> Result<ForwardTrace> {
    check_input(params, input)?;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut preacts = Vec::with_capacity(params.layers.len());
    let mut current = input.clone();
    for layer in &params.layers {
        let mut pre = Matrix::zeros(current.rows(), layer.out_dim());
        let mut out = Matrix::zeros(current.rows(), layer.out_dim());
        let mut acc = vec![0.0f64; layer.out_dim()];
        for i in 0..current.rows() {
            layer.forward_row(current.row(i), &mut acc, pre.row_mut(i), out.row_mut(i));
        }
        inputs.push(current);
        preacts.push(pre);
        current = out;
    }
    if !current.is_finite() {
        return Err(Error::Numeric("network output".into()));
    }
    Ok(ForwardTrace {
        inputs,
        preacts,
        output: current,
    })
}

/// Gradients of the scalar loss whose output-gradient is `upstream`, with respect
/// to every parameter and to the input.
pub fn mlp_backward(
    params: &MlpParams,
    input: &Matrix,
    upstream: &Matrix,
) -> Result<(MlpGrads, Matrix)> {
    let trace = mlp_forward_traced(params, input)?;
    mlp_backward_traced(params, &trace, upstream)
}

pub fn mlp_backward_traced(
    params: &MlpParams,
    trace: &ForwardTrace,
    upstream: &Matrix,
) -> Result<(MlpGrads, Matrix)> {
    backward_impl(params, trace, upstream, true).map(|(g, x)| (g.expect("requested"), x))
}

/// Gradient with respect to the input only; skips the parameter gradients.
pub fn mlp_input_grad(params: &MlpParams, trace: &ForwardTrace, upstream: &Matrix) -> Result<Matrix> {
    backward_impl(params, trace, upstream, false).map(|(_, x)| x)
}

fn backward_impl(
    params: &MlpParams,
    trace: &ForwardTrace,
    upstream: &Matrix,
    want_params: bool,
) -> Result<(Option<MlpGrads>, Matrix)> {
    if upstream.shape() != trace.output.shape() {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output {:?}",
            upstream.shape(),
            trace.output.shape()
        )));
    }
    if !upstream.is_finite() {
        return Err(Error::Numeric("upstream gradient".into()));
    }
    let mut grads = want_params.then(|| params.zero_grads());
    let mut delta = upstream.clone();
    for (li, layer) in params.layers.iter().enumerate().rev() {
        let x = &trace.inputs[li];
        let pre = &trace.preacts[li];
        let (batch, out_dim, in_dim) = (x.rows(), layer.out_dim(), layer.in_dim());
        if layer.activation == Activation::Relu {
            for (d, p) in delta.data_mut().iter_mut().zip(pre.data()) {
                if *p <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        if let Some(grads) = grads.as_mut() {
            let mut wacc = vec![0.0f64; in_dim * out_dim];
            let mut bacc = vec![0.0f64; out_dim];
            for i in 0..batch {
                let d = delta.row(i);
                for (b, v) in bacc.iter_mut().zip(d) {
                    *b += *v as f64;
                }
                for (k, &xk) in x.row(i).iter().enumerate() {
                    if xk == 0.0 {
                        continue;
                    }
                    let xk = xk as f64;
                    for (w, v) in wacc[k * out_dim..(k + 1) * out_dim].iter_mut().zip(d) {
                        *w += xk * *v as f64;
                    }
                }
            }
            let g = &mut grads.layers[li];
            for (o, a) in g.weight.data_mut().iter_mut().zip(&wacc) {
                *o = *a as f32;
            }
            for (o, a) in g.bias.iter_mut().zip(&bacc) {
                *o = *a as f32;
            }
        }
        let mut next = Matrix::zeros(batch, in_dim);
        for i in 0..batch {
            let d = delta.row(i);
            let row = next.row_mut(i);
            for (k, r) in row.iter_mut().enumerate() {
                let w = layer.weight.row(k);
                let mut s = 0.0f64;
                for (dv, wv) in d.iter().zip(w) {
                    s += *dv as f64 * *wv as f64;
                }
                *r = s as f32;
            }
        }
        delta = next;
    }
    Ok((grads, delta))
}
