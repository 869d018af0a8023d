use serde::{Deserialize, Serialize};

use super::{Matrix, MlpGrads, MlpParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for a fixed list of tensors.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            second: sizes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    /// Moments for every weight and bias of `params`, in layer order.
    pub fn for_mlp(config: AdamConfig, params: &MlpParams) -> Self {
        let sizes: Vec<usize> = params
            .layers
            .iter()
            .flat_map(|l| [l.weight.data().len(), l.bias.len()])
            .collect();
        Self::new(config, &sizes)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. `names` labels each tensor for error
    /// reporting; no parameter is touched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]], names: &[String]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != p.len() {
                return Err(Error::Shape(format!("tensor {} has mismatched size", names[i])));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("gradient of {}", names[i])));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let correct1 = 1.0 - c.beta1.powi(t);
        let correct2 = 1.0 - c.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for j in 0..p.len() {
                let gj = g[j] as f64;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let update = c.learning_rate * (m[j] / correct1) / ((v[j] / correct2).sqrt() + c.epsilon);
                p[j] = (p[j] as f64 - update) as f32;
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        let names: Vec<String> = (0..params.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect();
        let mut ps: Vec<&mut [f32]> = Vec::new();
        for l in params.layers.iter_mut() {
            ps.push(l.weight.data_mut());
            ps.push(&mut l.bias);
        }
        let gs: Vec<&[f32]> = grads
            .layers
            .iter()
            .flat_map(|g| [g.weight.data(), g.bias.as_slice()])
            .collect();
        self.step(&mut ps, &gs, &names)
    }

    pub fn step_matrix(&mut self, param: &mut Matrix, grad: &Matrix, name: &str) -> Result<()> {
        self.step(&mut [param.data_mut()], &[grad.data()], &[name.to_string()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Activation, SeededRng};

    #[test]
    fn zero_grads_leave_params_bit_identical() {
        let mut rng = SeededRng::new(1);
        let mut p = MlpParams::init(&[4, 5, 3], Activation::Relu, &mut rng);
        let before = p.clone();
        let g = p.zero_grads();
        let mut adam = AdamState::for_mlp(AdamConfig::with_lr(0.1), &p);
        for _ in 0..25 {
            adam.step_mlp(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.steps_taken(), 25);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g and v̂ = g² after bias correction, so the move is lr·g/(|g|+ε).
        let mut p = Matrix::filled(1, 1, 1.0);
        let g = Matrix::filled(1, 1, 1.0);
        let mut adam = AdamState::new(AdamConfig::with_lr(0.1), &[1]);
        adam.step_matrix(&mut p, &g, "w").unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.get(0, 0) as f64 - expected).abs() < 1e-7);
        assert!((p.get(0, 0) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn identical_runs_are_reproducible() {
        let run = || {
            let mut p = SeededRng::new(4).gaussian_draw(3, 3);
            let g = SeededRng::new(5).gaussian_draw(3, 3);
            let mut adam = AdamState::new(AdamConfig::default(), &[9]);
            adam.step_matrix(&mut p, &g, "w").unwrap();
            adam.step_matrix(&mut p, &g, "w").unwrap();
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = Matrix::zeros(1, 2);
        let mut g = Matrix::zeros(1, 2);
        g.data_mut()[1] = f32::INFINITY;
        let mut adam = AdamState::new(AdamConfig::default(), &[2]);
        let err = adam.step_matrix(&mut p, &g, "codes").unwrap_err();
        assert!(err.to_string().contains("codes"), "{err}");
        assert_eq!(adam.steps_taken(), 0);
    }
}
