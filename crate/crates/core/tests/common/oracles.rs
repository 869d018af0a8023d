//! Independent reference computations used by the integration and acceptance
//! tests. Nothing here calls into the optimized code paths it checks.

#![allow(dead_code)]

use segcond_core::tensor::{Activation, MlpParams};

/// Plain f64 copy of a perceptron.
#[derive(Clone, Debug)]
pub struct NaiveNet {
    /// (weight[in][out], bias[out], relu?)
    pub layers: Vec<(Vec<Vec<f64>>, Vec<f64>, bool)>,
}

impl NaiveNet {
    pub fn from_params(p: &MlpParams) -> Self {
        let layers = p
            .layers
            .iter()
            .map(|l| {
                let w = (0..l.in_dim())
                    .map(|k| (0..l.out_dim()).map(|j| l.weight.get(k, j) as f64).collect())
                    .collect();
                let b = l.bias.iter().map(|v| *v as f64).collect();
                (w, b, l.activation == Activation::Relu)
            })
            .collect();
        Self { layers }
    }

    /// Forward pass; also returns the on/off pattern of every rectifier.
    pub fn forward(&self, input: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut pattern = Vec::new();
        let mut cur: Vec<Vec<f64>> = input.to_vec();
        for (w, b, relu) in &self.layers {
            let mut next = Vec::with_capacity(cur.len());
            for row in &cur {
                let mut out = vec![0.0; b.len()];
                for j in 0..b.len() {
                    let mut s = b[j];
                    for k in 0..row.len() {
                        s += row[k] * w[k][j];
                    }
                    if *relu {
                        pattern.push(s > 0.0);
                        if s < 0.0 {
                            s = 0.0;
                        }
                    }
                    out[j] = s;
                }
                next.push(out);
            }
            cur = next;
        }
        (cur, pattern)
    }

    /// `sum(weights ⊙ output)`.
    pub fn linear_loss(&self, input: &[Vec<f64>], weights: &[Vec<f64>]) -> (f64, Vec<bool>) {
        let (out, pattern) = self.forward(input);
        let loss = out
            .iter()
            .zip(weights)
            .map(|(o, g)| o.iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        (loss, pattern)
    }
}

/// Central difference of `f` around `x`, or `None` when a rectifier flips
/// between the two probes (the function is not differentiable there).
pub fn central_difference<F>(x: f64, h: f64, mut f: F) -> Option<f64>
where
    F: FnMut(f64) -> (f64, Vec<bool>),
{
    let (plus, p1) = f(x + h);
    let (minus, p2) = f(x - h);
    (p1 == p2).then(|| (plus - minus) / (2.0 * h))
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

/// Levenshtein distance evaluated top-down straight from the recurrence with
/// no memoization. Exponential; only for short inputs.
pub fn naive_edit(a: &[usize], b: &[usize], m: usize, n: usize) -> usize {
    if m.min(n) == 0 {
        return m.max(n);
    }
    let sub = usize::from(a[m - 1] != b[n - 1]);
    (naive_edit(a, b, m - 1, n) + 1)
        .min(naive_edit(a, b, m, n - 1) + 1)
        .min(naive_edit(a, b, m - 1, n - 1) + sub)
}

/// All sequences over `0..alphabet` with lengths in `0..=max_len`.
pub fn all_sequences(alphabet: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..alphabet {
                let mut t: Vec<usize> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Solves the dense system `a x = b` with an LU factorization.
pub fn solve_dense(a: Vec<Vec<f64>>, b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let x = m.lu().solve(&nalgebra::DVector::from_vec(b)).expect("non-singular system");
    x.iter().copied().collect()
}

fn relabel(x: &[usize], y: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    let mut f = |s: usize| {
        if map.len() <= s {
            map.resize(s + 1, None);
        }
        *map[s].get_or_insert_with(|| {
            next += 1;
            next - 1
        })
    };
    let a: Vec<usize> = x.iter().map(|&s| f(s)).collect();
    let b: Vec<usize> = y.iter().map(|&s| f(s)).collect();
    (a, b)
}

/// Representative of the class of pairs reachable by relabeling the alphabet,
/// swapping the arguments and reversing both sequences. Levenshtein distance
/// is constant on each class.
pub fn canonical_pair(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let ra: Vec<usize> = a.iter().rev().copied().collect();
    let rb: Vec<usize> = b.iter().rev().copied().collect();
    [relabel(a, b), relabel(b, a), relabel(&ra, &rb), relabel(&rb, &ra)]
        .into_iter()
        .min()
        .unwrap()
}

/// Checks `dp` against the unmemoized recursion on every ordered pair of
/// sequences over `alphabet` with lengths up to `max_len`. The recursion runs
/// once per canonical class; every pair is still compared. Returns the number
/// of pairs compared.
pub fn exhaustive_edit_check(alphabet: usize, max_len: usize, dp: impl Fn(&[usize], &[usize]) -> usize) -> usize {
    let seqs = all_sequences(alphabet, max_len);
    let mut naive: std::collections::HashMap<(Vec<usize>, Vec<usize>), usize> = std::collections::HashMap::new();
    let mut compared = 0;
    for a in &seqs {
        for b in &seqs {
            let key = canonical_pair(a, b);
            let expected = *naive
                .entry(key)
                .or_insert_with_key(|(x, y)| naive_edit(x, y, x.len(), y.len()));
            assert_eq!(dp(a, b), expected, "{a:?} vs {b:?}");
            compared += 1;
        }
    }
    compared
}
