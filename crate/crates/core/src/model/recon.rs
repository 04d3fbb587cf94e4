use std::time::Instant;

use super::checkpoint::Checkpoint;
use crate::acquisition::{ParametricMaps, Tsmi, TsmiKind};
use crate::error::{domain, Result};
use crate::subspace::project;

/// Smallest T1/T2 written to a reconstructed map, in ms.
pub const MIN_RELAXATION_MS: f64 = 1.0;

/// Default relative coefficient-norm threshold below which a voxel is masked.
pub const DEFAULT_MASK_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub maps: ParametricMaps,
    /// Projection plus inference wall-clock time.
    pub seconds: f64,
}

pub fn reconstruct(tsmi: &Tsmi, checkpoint: &Checkpoint) -> Result<Reconstruction> {
    reconstruct_with_threshold(tsmi, checkpoint, DEFAULT_MASK_THRESHOLD)
}

/// Projects a raw TSMI with the checkpoint basis and runs the network.
/// Voxels whose coefficient norm is at most `mask_threshold` times the
/// largest norm in the slice are masked; outputs are clamped to
/// `MIN_RELAXATION_MS <= T2 <= T1 <= t1_max`, `T2 <= t2_max`, `0 <= PD <= pd_max`.
pub fn reconstruct_with_threshold(
    tsmi: &Tsmi,
    checkpoint: &Checkpoint,
    mask_threshold: f64,
) -> Result<Reconstruction> {
    if tsmi.kind != TsmiKind::Raw {
        return domain("reconstruct expects a raw TSMI");
    }
    if tsmi.frames() != checkpoint.basis.d0() {
        return domain(format!(
            "TSMI has {} frames, basis expects {}",
            tsmi.frames(),
            checkpoint.basis.d0()
        ));
    }
    if !(mask_threshold >= 0.0) {
        return domain(format!("mask threshold {mask_threshold} must be >= 0"));
    }
    let start = Instant::now();
    let (h, w, _) = tsmi.dims();
    let coeffs = project(tsmi.voxels(), &checkpoint.basis)?;
    let norms: Vec<f64> = coeffs
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect();
    let compressed = Tsmi::from_voxels(h, w, coeffs, TsmiKind::Compressed)?;
    let out = checkpoint.model.forward_image(&compressed)?;
    let max_norm = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    let cfg = &checkpoint.model.config;
    let mut maps = ParametricMaps::empty(h, w);
    for i in 0..h {
        for j in 0..w {
            let n = norms[i * w + j];
            if max_norm == 0.0 || n <= mask_threshold * max_norm {
                continue;
            }
            let t1 = out[(i, j, 0)].clamp(MIN_RELAXATION_MS, cfg.t1_max_ms);
            let t2 = out[(i, j, 1)]
                .clamp(MIN_RELAXATION_MS, cfg.t2_max_ms)
                .min(t1);
            let pd = out[(i, j, 2)].clamp(0.0, cfg.pd_max);
            maps.set_voxel((i, j), t1, t2, pd);
        }
    }
    Ok(Reconstruction {
        maps,
        seconds: start.elapsed().as_secs_f64(),
    })
}
