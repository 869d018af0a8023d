mod common;

use common::mlp_gradient_check;
use common::oracles::NaiveNet;
use proptest::prelude::*;
use segcond_core::tensor::{mlp_forward, Activation, MlpParams, SeededRng};

#[test]
fn forward_matches_naive_loops() {
    let mut rng = SeededRng::new(31);
    let p = MlpParams::init(&[4, 5, 2], Activation::Relu, &mut rng);
    let x = rng.gaussian_draw(3, 4);
    let out = mlp_forward(&p, &x).unwrap();
    let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| r.iter().map(|v| *v as f64).collect()).collect();
    let (expected, _) = NaiveNet::from_params(&p).forward(&rows);
    for (i, row) in expected.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let got = out.get(i, j) as f64;
            assert!((got - e).abs() <= 1e-6 * e.abs().max(1.0), "({i},{j}) {got} vs {e}");
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let shapes: [&[usize]; 5] = [&[3, 4, 2], &[5, 8, 3], &[2, 6, 6], &[8, 7, 1], &[4, 3, 5]];
    for (seed, dims) in shapes.iter().enumerate() {
        let (err, checked) = mlp_gradient_check(100 + seed as u64, dims, 4);
        assert!(checked > 0);
        assert!(err <= 1e-4, "dims {dims:?}: max relative error {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), batch in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let p = MlpParams::init(&[3, 6, 2], Activation::Relu, &mut rng);
        let x = rng.gaussian_draw(batch, 3);
        prop_assert_eq!(mlp_forward(&p, &x).unwrap(), mlp_forward(&p, &x).unwrap());
    }
}
