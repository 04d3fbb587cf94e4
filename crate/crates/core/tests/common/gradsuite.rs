//! Finite-difference checks (h = 1e-5) of every layer and of the composed model.

use super::{random_tensor, random_vec, rng};
use mrf_fcnn::model::{build_model, Model, ModelConfig};
use mrf_fcnn::nn::*;
use rand::Rng;

pub const H: f64 = 1e-5;
pub const LAYER_TOL: f64 = 1e-6;
pub const MODEL_TOL: f64 = 1e-4;
pub const SEEDS: u64 = 20;
const KINK_TOL: f64 = MODEL_TOL;

pub type Check = (&'static str, GradCheckReport);

/// `sum(r * y)` for a fixed random `r`, so that `dL/dy = r`.
fn probe_loss(y: &Tensor4, r: &Tensor4) -> f64 {
    y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
}

pub fn depthwise(seed: u64) -> Vec<Check> {
    let dims = (2, 3, 5, 6);
    let x = random_tensor(dims, seed);
    let r = random_tensor(dims, seed + 100);
    let mut conv = DepthwiseConv::zeros(3);
    conv.kernels = random_vec(27, seed + 200);
    conv.bias = random_vec(3, seed + 300);
    let (gx, gp) = conv.backward(&x, &r).unwrap();

    let f = |v: &[f64]| {
        probe_loss(
            &conv
                .forward(&Tensor4::from_vec(dims, v.to_vec()).unwrap())
                .unwrap(),
            &r,
        )
    };
    let input = grad_check(f, &x.data, &gx.data, H, LAYER_TOL, None);
    let f = |k: &[f64]| {
        let c = DepthwiseConv {
            kernels: k.to_vec(),
            bias: conv.bias.clone(),
        };
        probe_loss(&c.forward(&x).unwrap(), &r)
    };
    let kernels = grad_check(f, &conv.kernels, &gp.kernels, H, LAYER_TOL, None);
    let f = |b: &[f64]| {
        let c = DepthwiseConv {
            kernels: conv.kernels.clone(),
            bias: b.to_vec(),
        };
        probe_loss(&c.forward(&x).unwrap(), &r)
    };
    let bias = grad_check(f, &conv.bias, &gp.bias, H, LAYER_TOL, None);
    vec![
        ("depthwise input", input),
        ("depthwise kernels", kernels),
        ("depthwise bias", bias),
    ]
}

pub fn pointwise(seed: u64) -> Vec<Check> {
    let dims = (2, 4, 3, 5);
    let x = random_tensor(dims, seed);
    let r = random_tensor((2, 3, 3, 5), seed + 100);
    let mut conv = PointwiseConv::zeros(4, 3);
    conv.weights = random_vec(12, seed + 200);
    conv.bias = random_vec(3, seed + 300);
    let (gx, gp) = conv.backward(&x, &r).unwrap();

    let f = |v: &[f64]| {
        probe_loss(
            &conv
                .forward(&Tensor4::from_vec(dims, v.to_vec()).unwrap())
                .unwrap(),
            &r,
        )
    };
    let input = grad_check(f, &x.data, &gx.data, H, LAYER_TOL, None);
    let f = |wv: &[f64]| {
        let mut c = conv.clone();
        c.weights = wv.to_vec();
        probe_loss(&c.forward(&x).unwrap(), &r)
    };
    let weights = grad_check(f, &conv.weights, &gp.weights, H, LAYER_TOL, None);
    let f = |b: &[f64]| {
        let mut c = conv.clone();
        c.bias = b.to_vec();
        probe_loss(&c.forward(&x).unwrap(), &r)
    };
    let bias = grad_check(f, &conv.bias, &gp.bias, H, LAYER_TOL, None);
    vec![
        ("pointwise input", input),
        ("pointwise weights", weights),
        ("pointwise bias", bias),
    ]
}

pub fn relu_and_dropout(seed: u64) -> Vec<Check> {
    let dims = (1, 3, 4, 4);
    // keep inputs away from the kink
    let mut x = random_tensor(dims, seed);
    x.data.iter_mut().for_each(|v| {
        if v.abs() < 1e-3 {
            *v += 1e-2
        }
    });
    let r = random_tensor(dims, seed + 1);
    let g = relu_backward(&x, &r).unwrap();
    let f = |v: &[f64]| probe_loss(&relu(&Tensor4::from_vec(dims, v.to_vec()).unwrap()), &r);
    let relu_rep = grad_check(f, &x.data, &g.data, H, LAYER_TOL, None);

    let d = Dropout::new(0.3).unwrap();
    let (_, mask) = d.forward(&x, Mode::Train, seed);
    let g = d.backward(&mask, &r).unwrap();
    let f = |v: &[f64]| {
        probe_loss(
            &d.forward(
                &Tensor4::from_vec(dims, v.to_vec()).unwrap(),
                Mode::Train,
                seed,
            )
            .0,
            &r,
        )
    };
    let drop_rep = grad_check(f, &x.data, &g.data, H, LAYER_TOL, None);
    vec![("relu", relu_rep), ("dropout", drop_rep)]
}

pub fn mse(seed: u64) -> Vec<Check> {
    let dims = (2, 3, 4, 5);
    let p = random_tensor(dims, seed);
    let t = random_tensor(dims, seed + 1);
    let mut r = rng(seed + 2);
    let mut mask: Vec<bool> = (0..40).map(|_| r.random_bool(0.6)).collect();
    mask[0] = true;
    let (_, g) = mse_loss_with_grad(&p, &t, &mask).unwrap();
    let f = |v: &[f64]| mse_loss(&Tensor4::from_vec(dims, v.to_vec()).unwrap(), &t, &mask).unwrap();
    vec![("mse", grad_check(f, &p.data, &g.data, H, LAYER_TOL, None))]
}

pub fn all_layers(seed: u64) -> Vec<Check> {
    let mut out = depthwise(seed);
    out.extend(pointwise(seed));
    out.extend(relu_and_dropout(seed));
    out.extend(mse(seed));
    out
}

/// Default architecture with dropout active and a random output layer so
/// that gradients reach the first layer.
pub fn random_model(seed: u64) -> Model {
    let cfg = ModelConfig {
        dropout: 0.1,
        ..ModelConfig::default()
    };
    let mut m = build_model(&cfg, seed).unwrap();
    m.head[1].weights = random_vec(9, seed + 5);
    m
}

pub fn model_loss(m: &Model, x: &Tensor4, y: &Tensor4, mask: &[bool], seed: u64) -> f64 {
    let (out, _) = m.forward_train(x, Mode::Train, seed).unwrap();
    mse_loss(&out, y, mask).unwrap()
}

/// Draws `n` random coordinates at which the one-sided differences of `f`
/// agree, so that no ReLU switches inside the stencil. Uses numeric values only.
pub fn kink_free_coords(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    n: usize,
    r: &mut impl Rng,
) -> Vec<usize> {
    let f0 = f(x);
    let mut probe = x.to_vec();
    let mut out = Vec::new();
    for _ in 0..20 * n {
        let i = r.random_range(0..x.len());
        probe[i] = x[i] + H;
        let up = (f(&probe) - f0) / H;
        probe[i] = x[i] - H;
        let down = (f0 - f(&probe)) / H;
        probe[i] = x[i];
        if (up - down).abs() <= KINK_TOL * up.abs().max(down.abs()).max(1e-8) {
            out.push(i);
            if out.len() == n {
                return out;
            }
        }
    }
    panic!("no kink-free coordinates found");
}

/// Spot checks on the first block's kernels and weights and on the input.
pub fn composed_model(seed: u64) -> Vec<Check> {
    let m = random_model(seed);
    let x = random_tensor((1, 10, 8, 8), seed + 1);
    let y = random_tensor((1, 3, 8, 8), seed + 2);
    let mask = vec![true; 64];
    let (out, cache) = m.forward_train(&x, Mode::Train, seed).unwrap();
    let (_, g) = mse_loss_with_grad(&out, &y, &mask).unwrap();
    let (grads, gx) = m.backward(&cache, &g).unwrap();
    let mut r = rng(seed + 3);

    let f = |k: &[f64]| {
        let mut mm = m.clone();
        mm.blocks[0].depthwise.kernels = k.to_vec();
        model_loss(&mm, &x, &y, &mask, seed)
    };
    let coords = kink_free_coords(f, &m.blocks[0].depthwise.kernels, 5, &mut r);
    let kernels = grad_check(
        f,
        &m.blocks[0].depthwise.kernels,
        &grads.blocks[0].depthwise.kernels,
        H,
        MODEL_TOL,
        Some(&coords),
    );

    let f = |w: &[f64]| {
        let mut mm = m.clone();
        mm.blocks[0].pointwise.weights = w.to_vec();
        model_loss(&mm, &x, &y, &mask, seed)
    };
    let coords = kink_free_coords(f, &m.blocks[0].pointwise.weights, 5, &mut r);
    let weights = grad_check(
        f,
        &m.blocks[0].pointwise.weights,
        &grads.blocks[0].pointwise.weights,
        H,
        MODEL_TOL,
        Some(&coords),
    );

    let f = |v: &[f64]| {
        model_loss(
            &m,
            &Tensor4::from_vec(x.dims(), v.to_vec()).unwrap(),
            &y,
            &mask,
            seed,
        )
    };
    let coords = kink_free_coords(f, &x.data, 5, &mut r);
    let input = grad_check(f, &x.data, &gx.data, H, MODEL_TOL, Some(&coords));
    vec![
        ("model first depthwise kernels", kernels),
        ("model first pointwise weights", weights),
        ("model input", input),
    ]
}
