#![allow(dead_code)]

pub mod oracles;

use segcond_core::tensor::{mlp_backward, Activation, Matrix, MlpParams, SeededRng};

use oracles::{central_difference, relative_error, NaiveNet};

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.iter().map(|v| *v as f64).collect()).collect()
}

/// Compares analytic perceptron gradients against central differences on an f64
/// shadow copy. Returns (max relative error, number of components checked).
pub fn mlp_gradient_check(seed: u64, dims: &[usize], batch: usize) -> (f64, usize) {
    let mut rng = SeededRng::new(seed);
    let mut params = MlpParams::init(dims, Activation::Relu, &mut rng);
    // non-zero biases so the bias gradients are exercised away from zero
    for l in &mut params.layers {
        for b in &mut l.bias {
            *b = (rng.normal() * 0.1) as f32;
        }
    }
    let input = rng.gaussian_draw(batch, dims[0]);
    let upstream = rng.gaussian_draw(batch, *dims.last().unwrap());
    let (grads, input_grad) = mlp_backward(&params, &input, &upstream).unwrap();

    let g = to_rows(&upstream);
    let x = to_rows(&input);
    let net = NaiveNet::from_params(&params);
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut record = |analytic: f64, numeric: Option<f64>| {
        if let Some(n) = numeric {
            worst = worst.max(relative_error(analytic, n));
            checked += 1;
        }
    };

    for li in 0..net.layers.len() {
        let (rows, cols) = (net.layers[li].0.len(), net.layers[li].1.len());
        for k in 0..rows {
            for j in 0..cols {
                let numeric = central_difference(net.layers[li].0[k][j], h, |w| {
                    let mut p = net.clone();
                    p.layers[li].0[k][j] = w;
                    p.linear_loss(&x, &g)
                });
                record(grads.layers[li].weight.get(k, j) as f64, numeric);
            }
        }
        for j in 0..cols {
            let numeric = central_difference(net.layers[li].1[j], h, |b| {
                let mut p = net.clone();
                p.layers[li].1[j] = b;
                p.linear_loss(&x, &g)
            });
            record(grads.layers[li].bias[j] as f64, numeric);
        }
    }
    for i in 0..x.len() {
        for k in 0..x[i].len() {
            let numeric = central_difference(x[i][k], h, |v| {
                let mut xs = x.clone();
                xs[i][k] = v;
                net.linear_loss(&xs, &g)
            });
            record(input_grad.get(i, k) as f64, numeric);
        }
    }
    (worst, checked)
}

/// Lowest mean squared error reachable by `k` codes through a single linear
/// decoder layer, from the normal equations of each instance.
pub fn linear_inversion_optimum(decoder: &segcond_core::tca::Decoder, target: &Matrix, action: usize, k: usize) -> f64 {
    let layer = &decoder.params.layers[0];
    assert_eq!(decoder.params.layers.len(), 1, "oracle covers single-layer decoders");
    let dims = decoder.dims;
    let (d, f, a) = (dims.latent_dim, dims.feature_dim, dims.num_actions);
    let len = target.rows();
    let k = k.min(len);
    let w = |r: usize, j: usize| layer.weight.get(r, j) as f64;
    // A = W_z^T (f x d); constant offset per frame excludes the code term
    let gram: Vec<Vec<f64>> = (0..d)
        .map(|p| (0..d).map(|q| (0..f).map(|j| w(p, j) * w(q, j)).sum()).collect())
        .collect();
    let mut total = 0.0;
    let mut start = 0;
    for inst in 0..k {
        let size = len / k + usize::from(inst < len % k);
        let frames = start..start + size;
        start += size;
        // residual r_i = offset_i - x_i, with the code contribution excluded
        let resid: Vec<Vec<f64>> = frames
            .clone()
            .map(|i| {
                let c = if len == 1 { 0.0 } else { i as f64 / (len - 1) as f64 } as f32 as f64;
                (0..f)
                    .map(|j| w(d + action, j) + c * w(d + a, j) + layer.bias[j] as f64 - target.get(i, j) as f64)
                    .collect()
            })
            .collect();
        let n = size as f64;
        let lhs: Vec<Vec<f64>> = gram.iter().map(|r| r.iter().map(|v| v * n).collect()).collect();
        let rhs: Vec<f64> = (0..d)
            .map(|p| -resid.iter().map(|r| (0..f).map(|j| w(p, j) * r[j]).sum::<f64>()).sum::<f64>())
            .collect();
        let z = oracles::solve_dense(lhs, rhs);
        for r in &resid {
            for j in 0..f {
                let pred: f64 = (0..d).map(|p| z[p] * w(p, j)).sum::<f64>() + r[j];
                total += pred * pred;
            }
        }
    }
    total / (len * f) as f64
}

/// Frame labels from `(label, run length)` pairs.
pub fn runs(spec: &[(usize, usize)]) -> Vec<usize> {
    spec.iter().flat_map(|&(a, n)| std::iter::repeat(a).take(n)).collect()
}

pub struct MetricCase {
    pub name: &'static str,
    pub pred: Vec<usize>,
    pub gt: Vec<usize>,
    pub edit: f64,
    /// F1 at overlap 0.10, 0.25 and 0.50.
    pub f1: [f64; 3],
}

fn f1_of(p: f64, r: f64) -> f64 {
    200.0 * p * r / (p + r)
}

/// Hand-computed segmental scores. IoU values of exactly 0.1, 0.25 and 0.5
/// sit on the thresholds and count as matches.
pub fn metric_table() -> Vec<MetricCase> {
    let (a, b, c, d) = (0, 1, 2, 3);
    vec![
        MetricCase {
            name: "identical single segment",
            pred: runs(&[(a, 10)]),
            gt: runs(&[(a, 10)]),
            edit: 100.0,
            f1: [100.0; 3],
        },
        MetricCase {
            name: "half overlap at IoU 0.5",
            pred: runs(&[(a, 5)]),
            gt: runs(&[(a, 10)]),
            edit: 100.0,
            f1: [100.0; 3],
        },
        MetricCase {
            name: "one frame at IoU 0.1",
            pred: runs(&[(a, 1)]),
            gt: runs(&[(a, 10)]),
            edit: 100.0,
            f1: [100.0, 0.0, 0.0],
        },
        MetricCase {
            name: "IoU 0.25 plus a false positive",
            pred: runs(&[(a, 1), (b, 3)]),
            gt: runs(&[(a, 4)]),
            edit: 50.0,
            f1: [f1_of(0.5, 1.0), f1_of(0.5, 1.0), 0.0],
        },
        MetricCase {
            name: "shifted boundary",
            pred: runs(&[(a, 3), (b, 2)]),
            gt: runs(&[(a, 1), (b, 4)]),
            edit: 100.0,
            f1: [100.0, 100.0, f1_of(0.5, 0.5)],
        },
        MetricCase {
            name: "missed segment",
            pred: runs(&[(a, 4)]),
            gt: runs(&[(a, 2), (b, 2)]),
            edit: 50.0,
            f1: [f1_of(1.0, 0.5); 3],
        },
        MetricCase {
            name: "disjoint classes",
            pred: runs(&[(a, 2), (b, 2)]),
            gt: runs(&[(c, 2), (d, 2)]),
            edit: 0.0,
            f1: [0.0; 3],
        },
        MetricCase {
            name: "inserted segment",
            pred: runs(&[(a, 2), (b, 2), (c, 2)]),
            gt: runs(&[(a, 3), (c, 3)]),
            edit: 100.0 * (1.0 - 1.0 / 3.0),
            f1: [f1_of(2.0 / 3.0, 1.0); 3],
        },
        MetricCase {
            name: "one prediction over a repeated class",
            pred: runs(&[(a, 12)]),
            gt: runs(&[(a, 4), (b, 4), (a, 4)]),
            edit: 100.0 * (1.0 - 2.0 / 3.0),
            f1: [f1_of(1.0, 1.0 / 3.0), f1_of(1.0, 1.0 / 3.0), 0.0],
        },
    ]
}
