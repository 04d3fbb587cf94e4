//! On-grid spiral k-space undersampling of TSMI frames.

use std::collections::HashSet;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::maps::{Tsmi, TsmiKind};
use crate::error::{domain, Result};

pub const GOLDEN_ANGLE_DEG: f64 = 111.246;

/// Per-frame binary k-space masks with DC at `(H / 2, W / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UndersamplingScheme {
    pub frame_masks: Vec<Array2<bool>>,
    pub sampling_fraction: f64,
    pub rotation_increment_deg: f64,
}

impl UndersamplingScheme {
    /// Every k-space sample retained in every frame.
    pub fn full(height: usize, width: usize, frames: usize) -> Result<Self> {
        Self::from_masks(vec![Array2::from_elem((height, width), true); frames], 0.0)
    }

    /// Wraps explicit masks; the nominal fraction is the measured mean.
    pub fn from_masks(frame_masks: Vec<Array2<bool>>, rotation_increment_deg: f64) -> Result<Self> {
        let Some(first) = frame_masks.first() else {
            return domain("undersampling scheme needs at least one frame");
        };
        let (h, w) = first.dim();
        if h == 0 || w == 0 {
            return domain("k-space masks must be non-empty");
        }
        let mut total = 0usize;
        for (t, m) in frame_masks.iter().enumerate() {
            if m.dim() != (h, w) {
                return domain(format!(
                    "frame {t} mask is {:?}, expected {:?}",
                    m.dim(),
                    (h, w)
                ));
            }
            if !m[(h / 2, w / 2)] {
                return domain(format!("frame {t} mask does not sample DC"));
            }
            total += m.iter().filter(|&&v| v).count();
        }
        let sampling_fraction = total as f64 / (frame_masks.len() * h * w) as f64;
        Ok(Self {
            frame_masks,
            sampling_fraction,
            rotation_increment_deg,
        })
    }

    /// Archimedean spiral arc rasterized onto the grid, rotated by
    /// `rotation_increment_deg` per frame and cut to `sampling_fraction`.
    pub fn spiral(
        height: usize,
        width: usize,
        frames: usize,
        sampling_fraction: f64,
        rotation_increment_deg: f64,
    ) -> Result<Self> {
        if !(sampling_fraction > 0.0 && sampling_fraction <= 1.0) {
            return domain(format!(
                "sampling fraction {sampling_fraction} outside (0, 1]"
            ));
        }
        if height == 0 || width == 0 || frames == 0 {
            return domain("spiral scheme needs positive dimensions and frame count");
        }
        let target = ((sampling_fraction * (height * width) as f64).round() as usize)
            .clamp(1, height * width);
        let masks = (0..frames)
            .map(|t| {
                spiral_mask(
                    height,
                    width,
                    target,
                    (t as f64 * rotation_increment_deg).to_radians(),
                )
            })
            .collect();
        let mut s = Self::from_masks(masks, rotation_increment_deg)?;
        s.sampling_fraction = sampling_fraction;
        Ok(s)
    }

    pub fn frames(&self) -> usize {
        self.frame_masks.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frame_masks[0].dim()
    }

    pub fn measured_fraction(&self, frame: usize) -> f64 {
        let m = &self.frame_masks[frame];
        m.iter().filter(|&&v| v).count() as f64 / m.len() as f64
    }
}

fn spiral_mask(h: usize, w: usize, target: usize, phase: f64) -> Array2<bool> {
    let mut mask = Array2::from_elem((h, w), false);
    if target >= h * w {
        mask.fill(true);
        return mask;
    }
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let radius = (h.min(w) as f64) / 2.0;
    let r_max = ((h * h + w * w) as f64).sqrt() / 2.0 + 1.0;
    let mut spacing = (std::f64::consts::PI * radius * radius / target as f64).max(1.0);
    loop {
        let b = spacing / std::f64::consts::TAU;
        let mut picked: Vec<(usize, usize)> = Vec::with_capacity(target);
        let mut seen = HashSet::new();
        let mut theta = 0.0f64;
        loop {
            let r = b * theta;
            if r > r_max || picked.len() >= target {
                break;
            }
            let y = (cy + r * (theta + phase).sin()).round();
            let x = (cx + r * (theta + phase).cos()).round();
            if y >= 0.0 && x >= 0.0 && (y as usize) < h && (x as usize) < w {
                let p = (y as usize, x as usize);
                if seen.insert(p) {
                    picked.push(p);
                }
            }
            theta += 0.25 / (r * r + b * b).sqrt();
        }
        if picked.len() >= target || spacing <= 1.0 {
            for p in &picked {
                mask[*p] = true;
            }
            let mut count = picked.len();
            if count < target {
                // top up with the nearest unsampled locations
                let mut rest: Vec<(usize, usize)> = (0..h)
                    .flat_map(|i| (0..w).map(move |j| (i, j)))
                    .filter(|p| !mask[*p])
                    .collect();
                rest.sort_by(|a, b| {
                    let da = (a.0 as f64 - cy).hypot(a.1 as f64 - cx);
                    let db = (b.0 as f64 - cy).hypot(b.1 as f64 - cx);
                    da.total_cmp(&db).then(a.cmp(b))
                });
                for p in rest {
                    if count >= target {
                        break;
                    }
                    mask[p] = true;
                    count += 1;
                }
            }
            return mask;
        }
        spacing = (spacing * 0.85).max(1.0);
    }
}

/// Unitary 2-D DFT helper for one image size.
pub(crate) struct Fft2 {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            col_fwd: planner.plan_fft_forward(h),
            row_inv: planner.plan_fft_inverse(w),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn run(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.h, self.w);
        row.process(buf);
        let mut t = vec![Complex64::default(); h * w];
        for i in 0..h {
            for j in 0..w {
                t[j * h + i] = buf[i * w + j];
            }
        }
        col.process(&mut t);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for i in 0..h {
            for j in 0..w {
                buf[i * w + j] = t[j * h + i] * scale;
            }
        }
    }

    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }
}

/// Per frame: unitary DFT, mask, complex Gaussian noise (real and imaginary
/// parts each with std `noise_sigma`) on retained samples, inverse DFT,
/// real part.
pub fn undersample(
    tsmi: &Tsmi,
    scheme: &UndersamplingScheme,
    noise_sigma: f64,
    seed: u64,
) -> Result<Tsmi> {
    if tsmi.kind != TsmiKind::Raw {
        return domain("undersampling applies to raw TSMI only");
    }
    let (h, w, t) = tsmi.dims();
    if scheme.dims() != (h, w) || scheme.frames() != t {
        return domain(format!(
            "scheme is {} frames of {:?}, TSMI is {t} frames of {:?}",
            scheme.frames(),
            scheme.dims(),
            (h, w)
        ));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return domain(format!("noise sigma {noise_sigma} must be >= 0"));
    }
    let fft = Fft2::new(h, w);
    let normal = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let frames: Vec<Vec<f64>> = (0..t)
        .into_par_iter()
        .map(|f| {
            let mut buf: Vec<Complex64> = (0..h * w)
                .map(|p| Complex64::new(tsmi.data[(p / w, p % w, f)], 0.0))
                .collect();
            fft.forward(&mut buf);
            let mask = &scheme.frame_masks[f];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(f as u64);
            for ky in 0..h {
                for kx in 0..w {
                    let keep = mask[((ky + h / 2) % h, (kx + w / 2) % w)];
                    let v = &mut buf[ky * w + kx];
                    if !keep {
                        *v = Complex64::default();
                    } else if noise_sigma > 0.0 {
                        *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                    }
                }
            }
            fft.inverse(&mut buf);
            buf.into_iter().map(|c| c.re).collect()
        })
        .collect();
    let mut out = Array3::zeros((h, w, t));
    for (f, frame) in frames.iter().enumerate() {
        for (p, &v) in frame.iter().enumerate() {
            out[(p / w, p % w, f)] = v;
        }
    }
    Tsmi::new(out, TsmiKind::Raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_tsmi(h: usize, w: usize, t: usize) -> Tsmi {
        Tsmi::new(
            Array3::from_shape_fn((h, w, t), |(i, j, f)| {
                ((i * 7 + j * 3 + f * 5) % 11) as f64 / 11.0 - 0.3
            }),
            TsmiKind::Raw,
        )
        .unwrap()
    }

    #[test]
    fn full_sampling_without_noise_is_identity() {
        let x = ramp_tsmi(12, 10, 3);
        let s = UndersamplingScheme::full(12, 10, 3).unwrap();
        let y = undersample(&x, &s, 0.0, 1).unwrap();
        for (a, b) in x.data.iter().zip(y.data.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dc_only_gives_spatial_mean() {
        let (h, w) = (8, 6);
        let mut m = Array2::from_elem((h, w), false);
        m[(h / 2, w / 2)] = true;
        let s = UndersamplingScheme::from_masks(vec![m], 0.0).unwrap();
        let x = ramp_tsmi(h, w, 1);
        let mean = x.data.iter().sum::<f64>() / (h * w) as f64;
        let y = undersample(&x, &s, 0.0, 0).unwrap();
        assert!(y.data.iter().all(|v| (v - mean).abs() < 1e-12));
        // a constant image stays constant
        let c = Tsmi::new(Array3::from_elem((h, w, 1), 0.7), TsmiKind::Raw).unwrap();
        let y = undersample(&c, &s, 0.0, 0).unwrap();
        assert!(y.data.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn spiral_masks_hit_fraction_and_dc() {
        for (h, w) in [(64, 64), (32, 48), (256, 256)] {
            let s = UndersamplingScheme::spiral(h, w, 5, 1.0 / 16.0, GOLDEN_ANGLE_DEG).unwrap();
            for f in 0..5 {
                let m = s.measured_fraction(f);
                assert!(
                    (m - 1.0 / 16.0).abs() <= 0.1 / 16.0,
                    "{h}x{w} frame {f}: {m}"
                );
                assert!(s.frame_masks[f][(h / 2, w / 2)]);
            }
            assert_ne!(s.frame_masks[0], s.frame_masks[1]);
        }
    }

    #[test]
    fn masks_must_sample_dc() {
        let m = Array2::from_elem((4, 4), false);
        assert!(UndersamplingScheme::from_masks(vec![m], 0.0).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let x = ramp_tsmi(8, 8, 4);
        let s = UndersamplingScheme::spiral(8, 8, 4, 0.25, GOLDEN_ANGLE_DEG).unwrap();
        let a = undersample(&x, &s, 0.01, 9).unwrap();
        let b = undersample(&x, &s, 0.01, 9).unwrap();
        let c = undersample(&x, &s, 0.01, 10).unwrap();
        assert!(a
            .data
            .iter()
            .zip(b.data.iter())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_ne!(a, c);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = ramp_tsmi(8, 8, 4);
        let s = UndersamplingScheme::full(8, 8, 3).unwrap();
        assert!(undersample(&x, &s, 0.0, 0).is_err());
    }
}
