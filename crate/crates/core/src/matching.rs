//! Exhaustive dictionary matching, in the full time domain or in the
//! subspace coefficient domain.
//!
//! The winner for a query `x` is the atom maximizing `|<x, a_j>|` over
//! unit-norm atoms `a_j`; ties go to the smallest index. PD is the inner
//! product with the winner (divided by the atom's pre-normalization scale in
//! the compressed domain) and is clamped at zero.

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::acquisition::{ParametricMaps, Tsmi, TsmiKind};
use crate::error::{domain, Result};
use crate::fingerprint::{norm, Dictionary};
use crate::subspace::{project, SubspaceBasis};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchOptions {
    /// Queries per block of the blocked score product.
    pub query_block: usize,
    /// Atoms per block of the blocked score product.
    pub atom_block: usize,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            query_block: 256,
            atom_block: 2048,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    pub atom_index: usize,
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub pd: f64,
    /// Normalized correlation of the query with the winning atom.
    pub score: f64,
    /// Zero query or clamped PD.
    pub flagged: bool,
}

/// Unit-norm search atoms plus the scale that maps an inner product with a
/// unit atom back to PD.
struct SearchSpace<'a> {
    atoms: ArrayView2<'a, f64>,
    scales: &'a [f64],
    lut: &'a [(f64, f64)],
}

/// Dictionary projected into a subspace, rows renormalized.
#[derive(Clone, Debug)]
pub struct CompressedDictionary {
    pub atoms: Array2<f64>,
    /// Norm of each projected unnormalized atom, mapping an inner product
    /// with a unit search atom to PD.
    pub scales: Vec<f64>,
    pub lut: Vec<(f64, f64)>,
}

impl CompressedDictionary {
    pub fn new(dictionary: &Dictionary, basis: &SubspaceBasis) -> Result<Self> {
        if !dictionary.normalized {
            return domain("compressed matching requires a normalized dictionary");
        }
        let mut atoms = project(dictionary.atoms.view(), basis)?;
        let mut scales = Vec::with_capacity(atoms.nrows());
        for (mut row, &raw_norm) in atoms.rows_mut().into_iter().zip(&dictionary.norms) {
            let n = norm(row.view());
            if n > 0.0 {
                row.mapv_inplace(|v| v / n);
                scales.push(n * raw_norm);
            } else {
                scales.push(raw_norm);
            }
        }
        Ok(Self {
            atoms,
            scales,
            lut: dictionary.lut.clone(),
        })
    }

    pub fn d1(&self) -> usize {
        self.atoms.ncols()
    }
}

fn best_atoms(
    queries: ArrayView2<f64>,
    space: &SearchSpace,
    opts: &MatchOptions,
) -> Vec<MatchResult> {
    let m = queries.nrows();
    let n = space.atoms.nrows();
    let qb = opts.query_block.max(1);
    let ab = opts.atom_block.max(1);
    let starts: Vec<usize> = (0..m).step_by(qb).collect();
    let blocks: Vec<Vec<MatchResult>> = starts
        .par_iter()
        .map(|&q0| {
            let q1 = (q0 + qb).min(m);
            let q = queries.slice(s![q0..q1, ..]);
            let rows = q1 - q0;
            let mut best_idx = vec![0usize; rows];
            let mut best_abs = vec![f64::NEG_INFINITY; rows];
            let mut best_val = vec![0.0f64; rows];
            let mut scores = Array2::<f64>::zeros((rows, ab.min(n)));
            let mut a0 = 0;
            while a0 < n {
                let a1 = (a0 + ab).min(n);
                let mut sv = scores.slice_mut(s![.., ..a1 - a0]);
                general_mat_mul(
                    1.0,
                    &q,
                    &space.atoms.slice(s![a0..a1, ..]).t(),
                    0.0,
                    &mut sv,
                );
                for (r, srow) in sv.rows().into_iter().enumerate() {
                    let (mut bi, mut ba, mut bv) = (best_idx[r], best_abs[r], best_val[r]);
                    for (k, &v) in srow.iter().enumerate() {
                        if v.abs() > ba {
                            ba = v.abs();
                            bv = v;
                            bi = a0 + k;
                        }
                    }
                    best_idx[r] = bi;
                    best_abs[r] = ba;
                    best_val[r] = bv;
                }
                a0 = a1;
            }
            (0..rows)
                .map(|r| {
                    let qn = norm(q.row(r));
                    if qn == 0.0 {
                        let (t1, t2) = space.lut[0];
                        return MatchResult {
                            atom_index: 0,
                            t1_ms: t1,
                            t2_ms: t2,
                            pd: 0.0,
                            score: 0.0,
                            flagged: true,
                        };
                    }
                    let j = best_idx[r];
                    let inner = best_val[r];
                    let scale = space.scales[j];
                    let pd = if scale > 0.0 { inner / scale } else { 0.0 };
                    let (t1, t2) = space.lut[j];
                    MatchResult {
                        atom_index: j,
                        t1_ms: t1,
                        t2_ms: t2,
                        pd: pd.max(0.0),
                        score: inner / qn,
                        flagged: pd < 0.0,
                    }
                })
                .collect()
        })
        .collect();
    blocks.into_iter().flatten().collect()
}

/// Matches each row of `voxels` (M x d0) against the full dictionary.
pub fn match_full(
    voxels: ArrayView2<f64>,
    dictionary: &Dictionary,
    opts: &MatchOptions,
) -> Result<Vec<MatchResult>> {
    if !dictionary.normalized {
        return domain("dictionary matching requires a normalized dictionary");
    }
    if dictionary.is_empty() {
        return domain("dictionary is empty");
    }
    if voxels.ncols() != dictionary.d0() {
        return domain(format!(
            "voxel length {} but dictionary d0 = {}",
            voxels.ncols(),
            dictionary.d0()
        ));
    }
    let space = SearchSpace {
        atoms: dictionary.atoms.view(),
        scales: &dictionary.norms,
        lut: &dictionary.lut,
    };
    Ok(best_atoms(voxels, &space, opts))
}

/// Matches subspace coefficients (M x d1) against a compressed dictionary.
pub fn match_compressed_with(
    coeffs: ArrayView2<f64>,
    compressed: &CompressedDictionary,
    opts: &MatchOptions,
) -> Result<Vec<MatchResult>> {
    if compressed.lut.is_empty() {
        return domain("dictionary is empty");
    }
    if coeffs.ncols() != compressed.d1() {
        return domain(format!(
            "coefficient length {} but d1 = {}",
            coeffs.ncols(),
            compressed.d1()
        ));
    }
    let space = SearchSpace {
        atoms: compressed.atoms.view(),
        scales: &compressed.scales,
        lut: &compressed.lut,
    };
    Ok(best_atoms(coeffs, &space, opts))
}

/// Compresses `dictionary` with `basis` and matches `coeffs` against it.
pub fn match_compressed(
    coeffs: ArrayView2<f64>,
    dictionary: &Dictionary,
    basis: &SubspaceBasis,
    opts: &MatchOptions,
) -> Result<Vec<MatchResult>> {
    let compressed = CompressedDictionary::new(dictionary, basis)?;
    match_compressed_with(coeffs, &compressed, opts)
}

/// Image-shaped matching. With a basis, raw TSMI is projected first and
/// compressed TSMI is matched directly; without one the TSMI must be raw.
/// Flagged voxels are masked out.
pub fn match_maps(
    tsmi: &Tsmi,
    dictionary: &Dictionary,
    basis: Option<&SubspaceBasis>,
    opts: &MatchOptions,
) -> Result<ParametricMaps> {
    let (h, w, t) = tsmi.dims();
    let results = match (basis, tsmi.kind) {
        (None, TsmiKind::Raw) => {
            if t != dictionary.d0() {
                return domain(format!(
                    "TSMI has {t} frames, dictionary d0 = {}",
                    dictionary.d0()
                ));
            }
            match_full(tsmi.voxels(), dictionary, opts)?
        }
        (None, TsmiKind::Compressed) => return domain("compressed TSMI needs a subspace basis"),
        (Some(b), kind) => {
            let expected = if kind == TsmiKind::Raw {
                b.d0()
            } else {
                b.d1()
            };
            if t != expected {
                return domain(format!("TSMI has {t} channels, expected {expected}"));
            }
            let coeffs = match kind {
                TsmiKind::Raw => project(tsmi.voxels(), b)?,
                TsmiKind::Compressed => tsmi.voxels().to_owned(),
            };
            match_compressed(coeffs.view(), dictionary, b, opts)?
        }
    };
    Ok(results_to_maps(&results, h, w))
}

pub fn results_to_maps(results: &[MatchResult], height: usize, width: usize) -> ParametricMaps {
    let mut maps = ParametricMaps::empty(height, width);
    for (p, r) in results.iter().enumerate() {
        if !r.flagged {
            maps.set_voxel((p / width, p % width), r.t1_ms, r.t2_ms, r.pd);
        }
    }
    maps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::{build_dictionary, ParameterGrid, SequenceSchedule};
    use crate::subspace::fit_subspace;
    use ndarray::Array3;

    fn small_dict() -> Dictionary {
        let s = SequenceSchedule::sinusoidal(60, 60.0, 12.0, 2.0, 18.0).unwrap();
        let g = ParameterGrid::from_ranges((200.0, 2000.0, 200.0), (20.0, 300.0, 40.0)).unwrap();
        build_dictionary(&s, &g, true).unwrap()
    }

    #[test]
    fn self_match_recovers_scale() {
        let d = small_dict();
        let opts = MatchOptions {
            query_block: 3,
            atom_block: 7,
        };
        for j in [0, 5, d.len() - 1] {
            let q = (&d.atoms.row(j) * 3.5).insert_axis(ndarray::Axis(0));
            let r = match_full(q.view(), &d, &opts).unwrap()[0];
            assert_eq!(r.atom_index, j);
            assert_eq!((r.t1_ms, r.t2_ms), d.lut[j]);
            assert!((r.pd * d.norms[j] - 3.5).abs() < 1e-10);
            assert!((r.score - 1.0).abs() < 1e-10);
            assert!(!r.flagged);
        }
    }

    #[test]
    fn zero_voxel_is_flagged() {
        let d = small_dict();
        let q = Array2::<f64>::zeros((1, d.d0()));
        let r = match_full(q.view(), &d, &MatchOptions::default()).unwrap()[0];
        assert!(r.flagged);
        assert_eq!((r.pd, r.score, r.atom_index), (0.0, 0.0, 0));
        assert_eq!((r.t1_ms, r.t2_ms), d.lut[0]);
    }

    #[test]
    fn negative_scale_clamps_and_flags() {
        let d = small_dict();
        let q = (&d.atoms.row(4) * -2.0).insert_axis(ndarray::Axis(0));
        let r = match_full(q.view(), &d, &MatchOptions::default()).unwrap()[0];
        assert_eq!(r.atom_index, 4);
        assert_eq!(r.pd, 0.0);
        assert!(r.flagged);
        assert!((r.score + 1.0).abs() < 1e-10);
    }

    #[test]
    fn unnormalized_dictionary_rejected() {
        let mut d = small_dict();
        d.normalized = false;
        let q = Array2::<f64>::zeros((1, d.d0()));
        assert!(match_full(q.view(), &d, &MatchOptions::default()).is_err());
    }

    #[test]
    fn compressed_self_match() {
        let d = small_dict();
        let b = fit_subspace(&d, 10).unwrap();
        let coeffs = project(d.atoms.view(), &b).unwrap();
        let res = match_compressed(coeffs.view(), &d, &b, &MatchOptions::default()).unwrap();
        for (j, r) in res.iter().enumerate() {
            assert_eq!(r.atom_index, j);
            assert!((r.pd * d.norms[j] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn compressed_at_full_rank_equals_full() {
        let d = small_dict();
        let b = fit_subspace(&d, d.d0()).unwrap();
        let q = Array2::from_shape_fn((25, d.d0()), |(i, t)| {
            d.atoms[(i * 3 % d.len(), t)] * (1.0 + i as f64 * 0.1)
                + 0.01 * ((i * 31 + t * 17) % 13) as f64 / 13.0
        });
        let full = match_full(q.view(), &d, &MatchOptions::default()).unwrap();
        let comp = match_compressed(
            project(q.view(), &b).unwrap().view(),
            &d,
            &b,
            &MatchOptions::default(),
        )
        .unwrap();
        for (a, c) in full.iter().zip(&comp) {
            assert_eq!(a.atom_index, c.atom_index);
            assert!((a.pd - c.pd).abs() < 1e-10);
        }
    }

    #[test]
    fn maps_from_noiseless_atoms_and_zero_tsmi() {
        let d = small_dict();
        let (h, w) = (3, 4);
        let data = Array3::from_shape_fn((h, w, d.d0()), |(i, j, t)| {
            let k = (i * w + j) * 2 % d.len();
            d.atoms[(k, t)] * 0.8
        });
        let tsmi = Tsmi::new(data, TsmiKind::Raw).unwrap();
        let maps = match_maps(&tsmi, &d, None, &MatchOptions::default()).unwrap();
        for i in 0..h {
            for j in 0..w {
                let k = (i * w + j) * 2 % d.len();
                assert!(maps.mask[(i, j)]);
                assert_eq!((maps.t1_ms[(i, j)], maps.t2_ms[(i, j)]), d.lut[k]);
            }
        }
        let zero = Tsmi::new(Array3::zeros((h, w, d.d0())), TsmiKind::Raw).unwrap();
        let maps = match_maps(&zero, &d, None, &MatchOptions::default()).unwrap();
        assert!(maps.mask.iter().all(|&m| !m));
        let wrong = Tsmi::new(Array3::zeros((h, w, 5)), TsmiKind::Raw).unwrap();
        assert!(match_maps(&wrong, &d, None, &MatchOptions::default()).is_err());
    }
}
