//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

pub mod gradsuite;

use mrf_fcnn::acquisition::{ParametricMaps, Sample, Tsmi, TsmiKind};
use mrf_fcnn::fingerprint::{build_dictionary, Dictionary, ParameterGrid, SequenceSchedule};
use mrf_fcnn::nn::Tensor4;
use mrf_fcnn::subspace::{fit_subspace, project, SubspaceBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Brute-force Bloch simulation of `spins` isochromats evenly dephased over
/// one cycle per TR. Returns the mean transverse x magnetization at TE.
pub fn isochromat_signal(schedule: &SequenceSchedule, t1: f64, t2: f64, spins: usize) -> Vec<f64> {
    let mut mx = vec![0.0; spins];
    let mut my = vec![0.0; spins];
    let mut mz = vec![1.0; spins];
    let relax = |mx: &mut [f64], my: &mut [f64], mz: &mut [f64], dt: f64| {
        let e1 = (-dt / t1).exp();
        let e2 = (-dt / t2).exp();
        for s in 0..mx.len() {
            mx[s] *= e2;
            my[s] *= e2;
            mz[s] = mz[s] * e1 + 1.0 - e1;
        }
    };
    let rotate_y = |mx: &mut [f64], mz: &mut [f64], alpha_deg: f64| {
        let (s, c) = alpha_deg.to_radians().sin_cos();
        for k in 0..mx.len() {
            let (x, z) = (mx[k], mz[k]);
            mx[k] = x * c + z * s;
            mz[k] = -x * s + z * c;
        }
    };
    if schedule.inversion_delay_ms() > 0.0 {
        mz.iter_mut().for_each(|z| *z = -*z);
        relax(&mut mx, &mut my, &mut mz, schedule.inversion_delay_ms());
    }
    let te = schedule.te_ms();
    let mut out = Vec::new();
    for (&alpha, &tr) in schedule.flip_angles_deg().iter().zip(schedule.tr_ms()) {
        rotate_y(&mut mx, &mut mz, alpha);
        relax(&mut mx, &mut my, &mut mz, te);
        out.push(mx.iter().sum::<f64>() / spins as f64);
        relax(&mut mx, &mut my, &mut mz, tr - te);
        for s in 0..spins {
            let (sn, cs) = (std::f64::consts::TAU * s as f64 / spins as f64).sin_cos();
            let (x, y) = (mx[s], my[s]);
            mx[s] = x * cs - y * sn;
            my[s] = x * sn + y * cs;
        }
    }
    out
}

/// Straight-loop depthwise 3x3 convolution with zero padding.
pub fn naive_depthwise(x: &Tensor4, kernels: &[f64], bias: &[f64]) -> Tensor4 {
    let (n, c, h, w) = x.dims();
    Tensor4::from_fn((n, c, h, w), |b, ch, i, j| {
        let mut acc = bias[ch];
        for di in 0..3 {
            for dj in 0..3 {
                let (si, sj) = (i as i64 + di as i64 - 1, j as i64 + dj as i64 - 1);
                if si >= 0 && sj >= 0 && si < h as i64 && sj < w as i64 {
                    acc += kernels[ch * 9 + di * 3 + dj] * x.get(b, ch, si as usize, sj as usize);
                }
            }
        }
        acc
    })
}

/// Straight-loop 1x1 convolution; `weights` is Cout x Cin.
pub fn naive_pointwise(x: &Tensor4, weights: &[f64], bias: &[f64]) -> Tensor4 {
    let (n, cin, h, w) = x.dims();
    let cout = bias.len();
    Tensor4::from_fn((n, cout, h, w), |b, co, i, j| {
        bias[co]
            + (0..cin)
                .map(|ci| weights[co * cin + ci] * x.get(b, ci, i, j))
                .sum::<f64>()
    })
}

pub fn random_tensor(dims: (usize, usize, usize, usize), seed: u64) -> Tensor4 {
    let mut r = rng(seed);
    Tensor4::from_fn(dims, |_, _, _, _| r.random_range(-1.0..1.0))
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Scalar Adam with bias correction, one parameter at a time.
pub fn adam_reference(p0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
    let mut out = Vec::new();
    for (t, &g) in grads.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32 + 1));
        let vh = v / (1.0 - b2.powi(t as i32 + 1));
        p -= lr * mh / (vh.sqrt() + eps);
        out.push(p);
    }
    out
}

/// Index of the atom with the largest |<q, a>| / |a| (first on ties).
pub fn naive_best_atom(query: &[f64], atoms: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, a) in atoms.iter().enumerate() {
        let dot: f64 = query.iter().zip(a).map(|(x, y)| x * y).sum();
        let n: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = (dot / n).abs();
        if s > best.1 {
            best = (j, s);
        }
    }
    best.0
}

/// Per-channel (MAE, RMSE) over voxels unmasked in both maps.
pub fn naive_metrics(p: &ParametricMaps, g: &ParametricMaps) -> [(f64, f64); 3] {
    let (h, w) = g.dims();
    let mut out = [(0.0, 0.0); 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let (mut n, mut a, mut s) = (0.0, 0.0, 0.0);
        for i in 0..h {
            for j in 0..w {
                if p.mask[(i, j)] && g.mask[(i, j)] {
                    let d = p.channel(c)[(i, j)] - g.channel(c)[(i, j)];
                    n += 1.0;
                    a += d.abs();
                    s += d * d;
                }
            }
        }
        *slot = (a / n, (s / n).sqrt());
    }
    out
}

/// Shortened schedule and coarse grid for fast pipeline tests.
pub fn small_setup(d0: usize, d1: usize) -> (SequenceSchedule, Dictionary, SubspaceBasis) {
    let schedule = SequenceSchedule::sinusoidal(d0, 70.0, 12.0, 2.0, 18.0).unwrap();
    let grid = ParameterGrid::from_ranges((100.0, 4000.0, 100.0), (20.0, 600.0, 20.0)).unwrap();
    let dict = build_dictionary(&schedule, &grid, true).unwrap();
    let basis = fit_subspace(&dict, d1).unwrap();
    (schedule, dict, basis)
}

/// Projects a raw sample onto `basis`.
pub fn compress(sample: &Sample, basis: &SubspaceBasis) -> Sample {
    let (h, w, _) = sample.tsmi.dims();
    let c = project(sample.tsmi.voxels(), basis).unwrap();
    Sample {
        tsmi: Tsmi::from_voxels(h, w, c, TsmiKind::Compressed).unwrap(),
        maps: sample.maps.clone(),
    }
}
