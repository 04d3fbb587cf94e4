use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::maps::{ParametricMaps, Sample, Tsmi};
use crate::error::{domain, Result};

/// Ranges from which random augmentations are drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentParams {
    pub max_shift: usize,
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    /// Std of additive Gaussian noise on the TSMI.
    pub noise_sigma: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            max_shift: 4,
            max_rotation_deg: 15.0,
            scale_range: (0.9, 1.1),
            noise_sigma: 0.002,
        }
    }
}

/// Rigid-plus-scale resampling applied about the image center, followed by
/// an integer translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub shift_rows: i64,
    pub shift_cols: i64,
    pub rotation_deg: f64,
    pub scale: f64,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            shift_rows: 0,
            shift_cols: 0,
            rotation_deg: 0.0,
            scale: 1.0,
        }
    }

    /// Source voxel feeding output voxel `(i, j)`, nearest neighbour.
    fn source(&self, i: usize, j: usize, h: usize, w: usize) -> Option<(usize, usize)> {
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dy = (i as i64 - self.shift_rows) as f64 - cy;
        let dx = (j as i64 - self.shift_cols) as f64 - cx;
        let sx = cx + (c * dx + s * dy) / self.scale;
        let sy = cy + (-s * dx + c * dy) / self.scale;
        let (ry, rx) = (sy.round(), sx.round());
        if ry < 0.0 || rx < 0.0 || ry >= h as f64 || rx >= w as f64 {
            None
        } else {
            Some((ry as usize, rx as usize))
        }
    }
}

/// Applies `transform` to TSMI and maps alike, then adds noise to the TSMI.
pub fn apply_transform(
    sample: &Sample,
    transform: &Transform,
    noise_sigma: f64,
    seed: u64,
) -> Result<Sample> {
    if !(transform.scale > 0.0) || !transform.scale.is_finite() {
        return domain(format!("scale {} must be > 0", transform.scale));
    }
    if !(noise_sigma >= 0.0) {
        return domain(format!("noise sigma {noise_sigma} must be >= 0"));
    }
    let (h, w, t) = sample.tsmi.dims();
    if sample.maps.dims() != (h, w) {
        return domain("TSMI and maps disagree in spatial size");
    }
    let mut data = Array3::zeros((h, w, t));
    let mut maps = ParametricMaps::empty(h, w);
    for i in 0..h {
        for j in 0..w {
            if let Some((si, sj)) = transform.source(i, j, h, w) {
                data.slice_mut(ndarray::s![i, j, ..])
                    .assign(&sample.tsmi.data.slice(ndarray::s![si, sj, ..]));
                if sample.maps.mask[(si, sj)] {
                    maps.set_voxel(
                        (i, j),
                        sample.maps.t1_ms[(si, sj)],
                        sample.maps.t2_ms[(si, sj)],
                        sample.maps.pd[(si, sj)],
                    );
                }
            }
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    Ok(Sample {
        tsmi: Tsmi::new(data, sample.tsmi.kind)?,
        maps,
    })
}

/// Draws a random transform from `params` and applies it.
pub fn augment(sample: &Sample, params: &AugmentParams, seed: u64) -> Result<Sample> {
    let (lo, hi) = params.scale_range;
    if !(lo > 0.0 && hi >= lo) {
        return domain(format!(
            "scale range ({lo}, {hi}) must be positive and ordered"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = params.max_shift as i64;
    let transform = Transform {
        shift_rows: rng.random_range(-m..=m),
        shift_cols: rng.random_range(-m..=m),
        rotation_deg: rng.random_range(-params.max_rotation_deg..=params.max_rotation_deg),
        scale: rng.random_range(lo..=hi),
    };
    apply_transform(sample, &transform, params.noise_sigma, rng.random())
}
