mod common;

use common::oracles::{central_difference, relative_error, NaiveNet};
use segcond_core::io::Corpus;
use segcond_core::synth::{generate, SynthSpec};
use segcond_core::tca::{coherence, train_tca, TcaBatch, TcaConfig, TcaDims, TcaModel};
use segcond_core::tensor::{Matrix, SeededRng};

/// Variational loss recomputed in f64 from plain-loop networks.
fn oracle_loss(enc: &NaiveNet, dec: &NaiveNet, batch: &TcaBatch, noise: &Matrix, dims: TcaDims, beta: f64) -> (f64, Vec<bool>) {
    let (d, a) = (dims.latent_dim, dims.num_actions);
    let cond = |head: Vec<f64>, i: usize| {
        let mut row = head;
        row.extend((0..a).map(|k| if k == batch.actions[i] { 1.0 } else { 0.0 }));
        row.push(batch.coherence[i] as f64);
        row
    };
    let b = batch.features.rows();
    let enc_in: Vec<Vec<f64>> = (0..b)
        .map(|i| cond(batch.features.row(i).iter().map(|v| *v as f64).collect(), i))
        .collect();
    let (stats, mut pattern) = enc.forward(&enc_in);
    let mut kl = 0.0;
    let mut dec_in = Vec::with_capacity(b);
    for (i, s) in stats.iter().enumerate() {
        let z: Vec<f64> = (0..d)
            .map(|j| {
                let (m, lv) = (s[j], s[d + j]);
                kl += 0.5 * (m * m + lv.exp() - lv - 1.0);
                m + (0.5 * lv).exp() * noise.get(i, j) as f64
            })
            .collect();
        dec_in.push(cond(z, i));
    }
    let (out, p2) = dec.forward(&dec_in);
    pattern.extend(p2);
    let mut recon = 0.0;
    for (i, row) in out.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            recon += (v - batch.features.get(i, j) as f64).powi(2);
        }
    }
    recon /= (b * dims.feature_dim) as f64;
    (recon + beta * kl / b as f64, pattern)
}

fn small_problem(seed: u64) -> (TcaModel, TcaBatch, Matrix) {
    let dims = TcaDims {
        feature_dim: 5,
        num_actions: 3,
        latent_dim: 2,
    };
    let mut rng = SeededRng::new(seed);
    let model = TcaModel::init(dims, 6, &rng.split("init"));
    let b = 4;
    let batch = TcaBatch {
        features: rng.gaussian_draw(b, 5),
        actions: vec![0, 2, 1, 2],
        coherence: vec![0.0, 0.25, 0.8, 1.0],
    };
    let noise = rng.gaussian_draw(b, 2);
    (model, batch, noise)
}

#[test]
fn variational_loss_matches_f64_oracle() {
    for seed in 0..3 {
        let (model, batch, noise) = small_problem(seed);
        let beta = 0.7;
        let (loss, _) = model.loss_and_grads(&batch, &noise, beta, false).unwrap();
        let enc = NaiveNet::from_params(&model.encoder);
        let dec = NaiveNet::from_params(&model.decoder.params);
        let (expected, _) = oracle_loss(&enc, &dec, &batch, &noise, model.dims(), beta);
        assert!(relative_error(loss.total, expected) < 1e-5, "{} vs {expected}", loss.total);
        assert!(loss.kl >= 0.0);
    }
}

#[test]
fn variational_gradients_match_finite_differences() {
    let beta = 0.5;
    let h = 1e-4;
    for seed in 0..3 {
        let (model, batch, noise) = small_problem(10 + seed);
        let dims = model.dims();
        let (_, grads) = model.loss_and_grads(&batch, &noise, beta, true).unwrap();
        let grads = grads.unwrap();
        let enc = NaiveNet::from_params(&model.encoder);
        let dec = NaiveNet::from_params(&model.decoder.params);
        let mut worst = 0.0f64;
        let mut checked = 0;
        for (net_is_enc, analytic) in [(true, &grads.encoder), (false, &grads.decoder)] {
            let base = if net_is_enc { &enc } else { &dec };
            for li in 0..base.layers.len() {
                let (rows, cols) = (base.layers[li].0.len(), base.layers[li].1.len());
                for k in 0..rows {
                    for j in 0..cols {
                        let numeric = central_difference(base.layers[li].0[k][j], h, |w| {
                            let mut p = base.clone();
                            p.layers[li].0[k][j] = w;
                            if net_is_enc {
                                oracle_loss(&p, &dec, &batch, &noise, dims, beta)
                            } else {
                                oracle_loss(&enc, &p, &batch, &noise, dims, beta)
                            }
                        });
                        if let Some(n) = numeric {
                            worst = worst.max(relative_error(analytic.layers[li].weight.get(k, j) as f64, n));
                            checked += 1;
                        }
                    }
                }
            }
        }
        assert!(checked > 50);
        assert!(worst < 1e-3, "seed {seed}: worst relative error {worst}");
    }
}

fn corpus() -> Corpus {
    let spec = SynthSpec {
        videos_per_activity: 4,
        feature_dim: 16,
        ..SynthSpec::default()
    };
    generate(&spec, 3).unwrap()
}

#[test]
fn training_reduces_loss_and_keeps_kl_non_negative() {
    let config = TcaConfig {
        latent_dim: 4,
        hidden: 32,
        epochs: 8,
        learning_rate: 2e-3,
        batch_size: 64,
        beta: 0.01,
        seed: 2,
    };
    let c = corpus();
    let (model, trace) = train_tca(&c, &config).unwrap();
    assert_eq!(trace.epochs.len(), 8);
    assert!(trace.step_kl.iter().all(|kl| *kl >= 0.0));
    assert!(trace.epochs.last().unwrap().total < trace.epochs[0].total);
    let (again, _) = train_tca(&c, &config).unwrap();
    assert_eq!(model, again);
}

#[test]
fn coherence_endpoints() {
    assert_eq!(coherence(1).unwrap(), vec![0.0]);
    let c = coherence(5).unwrap();
    assert_eq!(c.first(), Some(&0.0));
    assert_eq!(c.last(), Some(&1.0));
    assert!(c.windows(2).all(|w| w[1] > w[0]));
    assert!(coherence(0).is_err());
}
