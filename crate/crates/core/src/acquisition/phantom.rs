use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::maps::ParametricMaps;
use crate::error::{domain, Result};
use crate::fingerprint::{ParameterGrid, TissueParams};

/// A rotated ellipse filled with one tissue. Coordinates are in pixels with
/// the voxel `(i, j)` located at `(row = i, col = j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipseRegion {
    pub center_row: f64,
    pub center_col: f64,
    /// Semi-axis along the (unrotated) column direction.
    pub semi_axis_col: f64,
    /// Semi-axis along the (unrotated) row direction.
    pub semi_axis_row: f64,
    pub rotation_deg: f64,
    pub tissue: TissueParams,
}

impl EllipseRegion {
    pub fn contains(&self, row: f64, col: f64) -> bool {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let dx = col - self.center_col;
        let dy = row - self.center_row;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.semi_axis_col).powi(2) + (v / self.semi_axis_row).powi(2) <= 1.0
    }
}

/// Canvas plus ordered regions; later regions overwrite earlier ones.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub regions: Vec<EllipseRegion>,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<ParametricMaps> {
    if spec.height == 0 || spec.width == 0 {
        return domain(format!(
            "canvas {}x{} has zero area",
            spec.height, spec.width
        ));
    }
    for (k, r) in spec.regions.iter().enumerate() {
        TissueParams::new(r.tissue.t1_ms, r.tissue.t2_ms, r.tissue.pd)
            .map_err(|e| crate::Error::Domain(format!("region {k}: {e}")))?;
        if !(r.semi_axis_col > 0.0 && r.semi_axis_row > 0.0) {
            return domain(format!("region {k} has non-positive semi-axes"));
        }
    }
    let mut maps = ParametricMaps::empty(spec.height, spec.width);
    for r in &spec.regions {
        for i in 0..spec.height {
            for j in 0..spec.width {
                if r.contains(i as f64, j as f64) {
                    maps.set_voxel((i, j), r.tissue.t1_ms, r.tissue.t2_ms, r.tissue.pd);
                }
            }
        }
    }
    Ok(maps)
}

/// Ranges for the procedural brain-like phantom generator.
#[derive(Clone, Debug, PartialEq)]
pub struct BrainPhantomParams {
    pub height: usize,
    pub width: usize,
    pub t1_range_ms: (f64, f64),
    pub t2_range_ms: (f64, f64),
    pub pd_range: (f64, f64),
    pub max_lesions: usize,
    /// Snap drawn relaxation times onto this grid's values.
    pub snap_grid: Option<ParameterGrid>,
}

impl Default for BrainPhantomParams {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            t1_range_ms: (100.0, 4000.0),
            t2_range_ms: (20.0, 600.0),
            pd_range: (0.5, 1.5),
            max_lesions: 4,
            snap_grid: Some(ParameterGrid::default()),
        }
    }
}

fn nearest(values: &[f64], x: f64) -> f64 {
    *values
        .iter()
        .min_by(|a, b| (*a - x).abs().total_cmp(&(*b - x).abs()))
        .expect("non-empty grid axis")
}

impl BrainPhantomParams {
    fn draw_tissue(&self, rng: &mut impl Rng) -> TissueParams {
        let (t1_lo, t1_hi) = self.t1_range_ms;
        let (t2_lo, t2_hi) = self.t2_range_ms;
        let mut t1 = rng.random_range(t1_lo..=t1_hi);
        let mut t2 = rng.random_range(t2_lo..=t2_hi.min(t1).max(t2_lo));
        if let Some(grid) = &self.snap_grid {
            t1 = nearest(grid.t1_values_ms(), t1);
            t2 = nearest(grid.t2_values_ms(), t2);
            if t2 > t1 {
                t2 = grid
                    .t2_values_ms()
                    .iter()
                    .copied()
                    .filter(|&v| v <= t1)
                    .next_back()
                    .unwrap_or(t1);
            }
        }
        let t2 = t2.min(t1);
        let pd = rng.random_range(self.pd_range.0..=self.pd_range.1);
        TissueParams {
            t1_ms: t1,
            t2_ms: t2,
            pd,
        }
    }

    /// Head outline, inner tissue, paired ventricles and random lesions,
    /// each class with independently drawn tissue values.
    pub fn spec(&self, seed: u64) -> Result<PhantomSpec> {
        if self.height == 0 || self.width == 0 {
            return domain("phantom canvas has zero area");
        }
        if !(self.t1_range_ms.0 > 0.0 && self.t1_range_ms.0 <= self.t1_range_ms.1)
            || !(self.t2_range_ms.0 > 0.0 && self.t2_range_ms.0 <= self.t2_range_ms.1)
            || !(self.pd_range.0 >= 0.0 && self.pd_range.0 <= self.pd_range.1)
            || self.t2_range_ms.0 > self.t1_range_ms.1
        {
            return domain("invalid phantom parameter ranges");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (self.height as f64, self.width as f64);
        let cy = (h - 1.0) / 2.0 + rng.random_range(-0.04..=0.04) * h;
        let cx = (w - 1.0) / 2.0 + rng.random_range(-0.04..=0.04) * w;
        let rot = rng.random_range(-12.0..=12.0);
        let ay = h * rng.random_range(0.38..=0.46);
        let ax = w * rng.random_range(0.32..=0.42);
        let mut regions = Vec::new();
        let outer = self.draw_tissue(&mut rng);
        regions.push(EllipseRegion {
            center_row: cy,
            center_col: cx,
            semi_axis_col: ax,
            semi_axis_row: ay,
            rotation_deg: rot,
            tissue: outer,
        });
        let inner_scale = rng.random_range(0.62..=0.8);
        let inner = self.draw_tissue(&mut rng);
        regions.push(EllipseRegion {
            center_row: cy,
            center_col: cx,
            semi_axis_col: ax * inner_scale,
            semi_axis_row: ay * inner_scale,
            rotation_deg: rot,
            tissue: inner,
        });
        let ventricle = self.draw_tissue(&mut rng);
        let offset = ax * rng.random_range(0.12..=0.22);
        let (vax, vay) = (
            ax * rng.random_range(0.08..=0.14),
            ay * rng.random_range(0.2..=0.32),
        );
        for side in [-1.0, 1.0] {
            regions.push(EllipseRegion {
                center_row: cy,
                center_col: cx + side * offset,
                semi_axis_col: vax,
                semi_axis_row: vay,
                rotation_deg: rot + side * rng.random_range(5.0..=20.0),
                tissue: ventricle,
            });
        }
        let lesions = rng.random_range(0..=self.max_lesions);
        for _ in 0..lesions {
            let r = rng.random_range(0.55..=0.9f64).sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            regions.push(EllipseRegion {
                center_row: cy + r * 0.75 * ay * phi.sin(),
                center_col: cx + r * 0.75 * ax * phi.cos(),
                semi_axis_col: w * rng.random_range(0.03..=0.09),
                semi_axis_row: h * rng.random_range(0.03..=0.09),
                rotation_deg: rng.random_range(0.0..180.0),
                tissue: self.draw_tissue(&mut rng),
            });
        }
        Ok(PhantomSpec {
            height: self.height,
            width: self.width,
            regions,
        })
    }

    pub fn generate(&self, seed: u64) -> Result<ParametricMaps> {
        generate_phantom(&self.spec(seed)?)
    }
}
