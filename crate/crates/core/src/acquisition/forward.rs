use std::collections::HashMap;

use ndarray::Array3;
use rayon::prelude::*;

use super::maps::{ParametricMaps, Tsmi, TsmiKind};
use crate::error::Result;
use crate::fingerprint::{simulate_unit, SequenceSchedule};

/// Noiseless, fully sampled TSMI: each unmasked voxel is `pd` times the
/// unit-PD fingerprint of its `(t1, t2)`. Each distinct pair is simulated
/// once.
pub fn forward_simulate(maps: &ParametricMaps, schedule: &SequenceSchedule) -> Result<Tsmi> {
    maps.validate()?;
    let (h, w) = maps.dims();
    let d0 = schedule.d0();

    let mut keys: Vec<(u64, u64)> = Vec::new();
    let mut seen = HashMap::new();
    for ((&t1, &t2), &on) in maps
        .t1_ms
        .iter()
        .zip(maps.t2_ms.iter())
        .zip(maps.mask.iter())
    {
        if on {
            let key = (t1.to_bits(), t2.to_bits());
            seen.entry(key).or_insert_with(|| {
                keys.push(key);
                keys.len() - 1
            });
        }
    }
    let signals: Vec<Vec<f64>> = keys
        .par_iter()
        .map(|&(t1, t2)| simulate_unit(schedule, f64::from_bits(t1), f64::from_bits(t2)))
        .collect();

    let mut data = Array3::zeros((h, w, d0));
    for i in 0..h {
        for j in 0..w {
            if !maps.mask[(i, j)] {
                continue;
            }
            let key = (maps.t1_ms[(i, j)].to_bits(), maps.t2_ms[(i, j)].to_bits());
            let fp = &signals[seen[&key]];
            let pd = maps.pd[(i, j)];
            for (dst, &v) in data.slice_mut(ndarray::s![i, j, ..]).iter_mut().zip(fp) {
                *dst = pd * v;
            }
        }
    }
    Tsmi::new(data, TsmiKind::Raw)
}
