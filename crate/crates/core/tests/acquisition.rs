mod common;

use mrf_fcnn::acquisition::*;
use mrf_fcnn::fingerprint::{simulate_fingerprint, SequenceSchedule, TissueParams};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;

/// Ellipse membership via the quadratic form of the rotated axes.
fn inside(r: &EllipseRegion, row: f64, col: f64) -> bool {
    let t = r.rotation_deg.to_radians();
    let (a, b) = (r.semi_axis_col, r.semi_axis_row);
    let (x, y) = (col - r.center_col, row - r.center_row);
    let q11 = (t.cos() / a).powi(2) + (t.sin() / b).powi(2);
    let q22 = (t.sin() / a).powi(2) + (t.cos() / b).powi(2);
    let q12 = t.sin() * t.cos() * (1.0 / (a * a) - 1.0 / (b * b));
    q11 * x * x + 2.0 * q12 * x * y + q22 * y * y <= 1.0 + 1e-12
}

#[test]
fn phantom_pixels_follow_last_containing_ellipse() {
    let params = BrainPhantomParams::default();
    for seed in 0..5 {
        let spec = params.spec(seed).unwrap();
        let maps = generate_phantom(&spec).unwrap();
        maps.validate().unwrap();
        let mut mismatches = 0;
        for i in 0..spec.height {
            for j in 0..spec.width {
                let last = spec
                    .regions
                    .iter()
                    .rev()
                    .find(|r| inside(r, i as f64, j as f64));
                match last {
                    Some(r) => {
                        if !(maps.mask[(i, j)]
                            && maps.t1_ms[(i, j)] == r.tissue.t1_ms
                            && maps.pd[(i, j)] == r.tissue.pd)
                        {
                            mismatches += 1;
                        }
                    }
                    None => assert!(!maps.mask[(i, j)]),
                }
            }
        }
        // only boundary pixels within rounding of the ellipse edge may differ
        assert!(mismatches <= 2, "seed {seed}: {mismatches} mismatches");
        assert_eq!(params.generate(seed).unwrap(), maps);
    }
}

#[test]
fn quarter_turn_is_a_permutation() {
    let n = 9;
    let mut maps = ParametricMaps::empty(n, n);
    for i in 0..n {
        for j in 0..n {
            if (i * 3 + j) % 4 != 0 {
                maps.set_voxel((i, j), 1000.0 + (i * n + j) as f64, 50.0, 1.0);
            }
        }
    }
    let data = Array3::from_shape_fn((n, n, 3), |(i, j, t)| (i * 100 + j * 10 + t) as f64);
    let sample = Sample {
        tsmi: Tsmi::new(data, TsmiKind::Raw).unwrap(),
        maps,
    };
    let t = Transform {
        rotation_deg: 90.0,
        ..Transform::identity()
    };
    let out = apply_transform(&sample, &t, 0.0, 0).unwrap();
    for i in 0..n {
        for j in 0..n {
            let (si, sj) = (n - 1 - j, i);
            assert_eq!(out.maps.mask[(i, j)], sample.maps.mask[(si, sj)]);
            assert_eq!(out.maps.t1_ms[(i, j)], sample.maps.t1_ms[(si, sj)]);
            for k in 0..3 {
                assert_eq!(out.tsmi.data[(i, j, k)], sample.tsmi.data[(si, sj, k)]);
            }
        }
    }
    let id = apply_transform(&sample, &Transform::identity(), 0.0, 0).unwrap();
    assert_eq!(id, sample);
}

#[test]
fn forward_simulation_is_voxelwise() {
    let schedule = SequenceSchedule::sinusoidal(25, 60.0, 10.0, 2.0, 10.0).unwrap();
    let maps = BrainPhantomParams {
        height: 16,
        width: 12,
        ..BrainPhantomParams::default()
    }
    .generate(3)
    .unwrap();
    let tsmi = forward_simulate(&maps, &schedule).unwrap();
    for i in 0..16 {
        for j in 0..12 {
            let expect = if maps.mask[(i, j)] {
                let tissue =
                    TissueParams::new(maps.t1_ms[(i, j)], maps.t2_ms[(i, j)], maps.pd[(i, j)])
                        .unwrap();
                simulate_fingerprint(&schedule, &tissue).values
            } else {
                vec![0.0; 25]
            };
            for t in 0..25 {
                assert_eq!(tsmi.data[(i, j, t)], expect[t]);
            }
        }
    }
}

/// `Re(IDFT(mask . DFT(x)))` by direct summation, unitary scaling.
fn naive_undersample(x: &Array2<f64>, mask: &Array2<bool>) -> Array2<f64> {
    let (h, w) = x.dim();
    let tau = std::f64::consts::TAU;
    let mut k = Array2::<Complex64>::zeros((h, w));
    for ky in 0..h {
        for kx in 0..w {
            if !mask[((ky + h / 2) % h, (kx + w / 2) % w)] {
                continue;
            }
            let mut acc = Complex64::default();
            for i in 0..h {
                for j in 0..w {
                    let ph = -tau * ((ky * i) as f64 / h as f64 + (kx * j) as f64 / w as f64);
                    acc += Complex64::from_polar(x[(i, j)], ph);
                }
            }
            k[(ky, kx)] = acc;
        }
    }
    let norm = 1.0 / (h * w) as f64;
    Array2::from_shape_fn((h, w), |(i, j)| {
        let mut acc = Complex64::default();
        for ky in 0..h {
            for kx in 0..w {
                let ph = tau * ((ky * i) as f64 / h as f64 + (kx * j) as f64 / w as f64);
                acc += k[(ky, kx)] * Complex64::from_polar(1.0, ph);
            }
        }
        acc.re * norm
    })
}

#[test]
fn undersampling_matches_direct_dft() {
    let (h, w, t) = (6, 7, 3);
    let mut r = common::rng(3);
    let data = Array3::from_shape_fn((h, w, t), |_| r.random_range(-1.0..1.0));
    let masks: Vec<Array2<bool>> = (0..t)
        .map(|_| {
            let mut m = Array2::from_shape_fn((h, w), |_| r.random_bool(0.4));
            m[(h / 2, w / 2)] = true;
            m
        })
        .collect();
    let scheme = UndersamplingScheme::from_masks(masks.clone(), 0.0).unwrap();
    let tsmi = Tsmi::new(data.clone(), TsmiKind::Raw).unwrap();
    let out = undersample(&tsmi, &scheme, 0.0, 0).unwrap();
    for f in 0..t {
        let frame = data.index_axis(ndarray::Axis(2), f).to_owned();
        let expect = naive_undersample(&frame, &masks[f]);
        for i in 0..h {
            for j in 0..w {
                assert!((out.data[(i, j, f)] - expect[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fully_sampled_noise_has_requested_variance() {
    let sigma = 0.005;
    let tsmi = Tsmi::new(Array3::zeros((64, 64, 50)), TsmiKind::Raw).unwrap();
    let scheme = UndersamplingScheme::full(64, 64, 50).unwrap();
    let out = undersample(&tsmi, &scheme, sigma, 77).unwrap();
    let n = out.data.len() as f64;
    let mean = out.data.sum() / n;
    let var = out.data.mapv(|v| (v - mean).powi(2)).sum() / n;
    // 204800 samples: relative std of the variance estimate is about 0.3%
    assert!(
        (var / (sigma * sigma) - 1.0).abs() < 0.02,
        "variance ratio {}",
        var / (sigma * sigma)
    );
    assert!(mean.abs() < 5.0 * sigma / n.sqrt());
}

#[test]
fn spiral_schemes_hit_target_fraction() {
    for (h, w) in [(64, 64), (48, 80), (256, 256)] {
        let s = UndersamplingScheme::spiral(h, w, 12, 1.0 / 16.0, GOLDEN_ANGLE_DEG).unwrap();
        let target = ((h * w) as f64 / 16.0).round() / (h * w) as f64;
        for f in 0..12 {
            assert_eq!(s.measured_fraction(f), target);
            assert!(s.frame_masks[f][(h / 2, w / 2)]);
        }
        assert_ne!(s.frame_masks[0], s.frame_masks[1]);
    }
}

#[test]
fn sample_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let maps = BrainPhantomParams {
        height: 10,
        width: 11,
        ..BrainPhantomParams::default()
    }
    .generate(1)
    .unwrap();
    let schedule = SequenceSchedule::sinusoidal(8, 50.0, 10.0, 2.0, 0.0).unwrap();
    let sample = Sample {
        tsmi: forward_simulate(&maps, &schedule).unwrap(),
        maps,
    };
    save_sample(&sample, dir.path()).unwrap();
    assert_eq!(load_sample(dir.path()).unwrap(), sample);
}
