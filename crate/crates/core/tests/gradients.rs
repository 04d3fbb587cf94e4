mod common;

use common::gradsuite::*;
use mrf_fcnn::model::{build_model, ModelConfig};
use mrf_fcnn::nn::{grad_check, mse_loss_with_grad, Mode};

fn assert_all(checks: Vec<Check>, seed: u64) {
    for (what, rep) in checks {
        assert!(rep.passed(), "{what}, seed {seed}: {rep:?}");
    }
}

#[test]
fn depthwise_gradients() {
    (0..SEEDS).for_each(|s| assert_all(depthwise(s), s));
}

#[test]
fn pointwise_gradients() {
    (0..SEEDS).for_each(|s| assert_all(pointwise(s), s));
}

#[test]
fn relu_and_dropout_gradients() {
    (0..SEEDS).for_each(|s| assert_all(relu_and_dropout(s), s));
}

#[test]
fn mse_gradients() {
    (0..SEEDS).for_each(|s| assert_all(mse(s), s));
}

#[test]
fn composed_model_spot_checks() {
    (0..SEEDS).for_each(|s| assert_all(composed_model(s), s));
}

#[test]
fn every_parameter_array_receives_its_gradient() {
    // Each named array of a small model, checked on a few coordinates.
    let cfg = ModelConfig {
        block_channels: vec![6, 5],
        dropout: 0.1,
        ..ModelConfig::default()
    };
    let mut m = build_model(&cfg, 4).unwrap();
    m.head[1].weights = common::random_vec(9, 9);
    let x = common::random_tensor((2, 10, 6, 7), 1);
    let y = common::random_tensor((2, 3, 6, 7), 2);
    let mask = vec![true; 84];
    let (out, cache) = m.forward_train(&x, Mode::Train, 3).unwrap();
    let (_, g) = mse_loss_with_grad(&out, &y, &mask).unwrap();
    let (grads, _) = m.backward(&cache, &g).unwrap();
    let names: Vec<String> = m.params().iter().map(|p| p.name.clone()).collect();
    let analytic: Vec<Vec<f64>> = grads.params().iter().map(|p| p.values.to_vec()).collect();
    for (k, name) in names.iter().enumerate() {
        let base: Vec<f64> = m.params()[k].values.to_vec();
        let coords: Vec<usize> = (0..base.len()).step_by((base.len() / 6).max(1)).collect();
        let f = |v: &[f64]| {
            let mut mm = m.clone();
            mm.params_mut()[k].copy_from_slice(v);
            model_loss(&mm, &x, &y, &mask, 3)
        };
        let rep = grad_check(f, &base, &analytic[k], H, MODEL_TOL, Some(&coords));
        assert!(rep.passed(), "{name}: {rep:?}");
    }
}
