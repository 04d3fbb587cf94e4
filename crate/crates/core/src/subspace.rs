//! Truncated-SVD subspace of a fingerprint dictionary (the linear projector
//! applied ahead of the network).
//!
//! The basis is fit on unit-norm atoms without mean-centering. The SVD is
//! taken of the triangular factor of a QR decomposition of the atom matrix,
//! which has the same singular values and right singular vectors.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SVD};
use ndarray::{Array2, ArrayView2};

use crate::error::{domain, format_err, Result};
use crate::fingerprint::Dictionary;
use crate::mrfa::{read_mrfa, write_mrfa, MrfaArray};

/// Rows per QR panel when reducing a tall atom matrix.
const PANEL_ROWS: usize = 8192;

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    /// d0 x d1, orthonormal columns.
    pub basis: Array2<f64>,
    /// Leading d1 singular values, descending.
    pub singular_values: Vec<f64>,
    /// Sum of all squared singular values of the fitted matrix.
    pub total_energy: f64,
}

impl SubspaceBasis {
    pub fn d0(&self) -> usize {
        self.basis.nrows()
    }

    pub fn d1(&self) -> usize {
        self.basis.ncols()
    }

    pub fn captured_energy(&self) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum()
    }

    pub fn captured_energy_fraction(&self) -> f64 {
        if self.total_energy > 0.0 {
            self.captured_energy() / self.total_energy
        } else {
            1.0
        }
    }

    /// Writes `basis.mrfa` (d0 x d1) and `singular_values.mrfa` (d1 values
    /// followed by the total energy), plus a human-readable `basis.txt`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let (d0, d1) = self.basis.dim();
        write_mrfa(
            &MrfaArray::real(vec![d0, d1], self.basis.iter().copied().collect())?,
            dir.join("basis.mrfa"),
        )?;
        let mut sv = self.singular_values.clone();
        sv.push(self.total_energy);
        write_mrfa(
            &MrfaArray::real(vec![d1 + 1], sv)?,
            dir.join("singular_values.mrfa"),
        )?;
        let mut text = format!(
            "d0 = {d0}\nd1 = {d1}\ncaptured_energy_fraction = {}\n",
            self.captured_energy_fraction()
        );
        for (i, s) in self.singular_values.iter().enumerate() {
            text.push_str(&format!("sigma_{} = {}\n", i + 1, s));
        }
        fs::write(dir.join("basis.txt"), text)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (dims, data) = read_mrfa(dir.join("basis.mrfa"))?.into_real("basis")?;
        if dims.len() != 2 {
            return Err(format_err(
                "basis",
                format!("expected rank 2, found {}", dims.len()),
            ));
        }
        let basis = Array2::from_shape_vec((dims[0], dims[1]), data)
            .map_err(|e| format_err("basis", e.to_string()))?;
        let (sdims, mut sv) =
            read_mrfa(dir.join("singular_values.mrfa"))?.into_real("singular_values")?;
        if sdims != [dims[1] + 1] {
            return Err(format_err(
                "singular_values",
                format!("expected {} values, found {:?}", dims[1] + 1, sdims),
            ));
        }
        let total_energy = sv.pop().unwrap();
        Ok(Self {
            basis,
            singular_values: sv,
            total_energy,
        })
    }
}

/// Fits the top-`d1` right singular subspace of the (normalized) atoms.
pub fn fit_subspace(dictionary: &Dictionary, d1: usize) -> Result<SubspaceBasis> {
    if dictionary.is_empty() {
        return domain("cannot fit a subspace to an empty dictionary");
    }
    let (n, d0) = dictionary.atoms.dim();
    if d1 == 0 || d1 > n.min(d0) {
        return domain(format!("d1 = {d1} must lie in [1, {}]", n.min(d0)));
    }
    let normalized;
    let atoms = if dictionary.normalized {
        &dictionary.atoms
    } else {
        normalized = dictionary.normalized();
        &normalized.atoms
    };

    let reduced = reduce_rows(atoms.view());
    let svd = SVD::new(reduced, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let spectrum: Vec<f64> = svd.singular_values.iter().copied().collect();
    let total_energy = spectrum.iter().map(|s| s * s).sum();

    let mut basis = Array2::zeros((d0, d1));
    for k in 0..d1 {
        let mut col: Vec<f64> = (0..d0).map(|i| v_t[(k, i)]).collect();
        // largest-magnitude entry made positive (first one on ties)
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| {
                if v.abs() > best.1 {
                    (i, v.abs())
                } else {
                    best
                }
            })
            .0;
        if col[pivot] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        for (i, v) in col.into_iter().enumerate() {
            basis[(i, k)] = v;
        }
    }
    Ok(SubspaceBasis {
        basis,
        singular_values: spectrum[..d1].to_vec(),
        total_energy,
    })
}

/// Returns a matrix with at most `d0` rows and the same Gram matrix as
/// `atoms`, via panel-wise QR (tall-skinny reduction).
fn reduce_rows(atoms: ArrayView2<f64>) -> DMatrix<f64> {
    let (n, d0) = atoms.dim();
    let to_dmatrix = |view: ArrayView2<f64>| {
        let (r, c) = view.dim();
        DMatrix::from_fn(r, c, |i, j| view[(i, j)])
    };
    if n <= d0 {
        return to_dmatrix(atoms);
    }
    let mut stacked: Option<DMatrix<f64>> = None;
    let mut start = 0;
    while start < n {
        let end = (start + PANEL_ROWS).min(n);
        let mut panel = to_dmatrix(atoms.slice(ndarray::s![start..end, ..]));
        if let Some(prev) = stacked.take() {
            let rows = prev.nrows() + panel.nrows();
            let mut both = DMatrix::zeros(rows, d0);
            both.rows_mut(0, prev.nrows()).copy_from(&prev);
            both.rows_mut(prev.nrows(), panel.nrows()).copy_from(&panel);
            panel = both;
        }
        stacked = Some(if panel.nrows() > d0 {
            panel.qr().unpack_r()
        } else {
            panel
        });
        start = end;
    }
    stacked.unwrap()
}

fn check_cols(m: &ArrayView2<f64>, expected: usize, what: &str) -> Result<()> {
    if m.ncols() != expected {
        return domain(format!(
            "{what} has {} columns, basis expects {expected}",
            m.ncols()
        ));
    }
    Ok(())
}

/// `signals` (M x d0) times the basis, giving M x d1 coefficients.
pub fn project(signals: ArrayView2<f64>, basis: &SubspaceBasis) -> Result<Array2<f64>> {
    check_cols(&signals, basis.d0(), "signal matrix")?;
    Ok(signals.dot(&basis.basis))
}

/// `coeffs` (M x d1) times the transposed basis, giving M x d0 signals.
pub fn reconstruct(coeffs: ArrayView2<f64>, basis: &SubspaceBasis) -> Result<Array2<f64>> {
    check_cols(&coeffs, basis.d1(), "coefficient matrix")?;
    Ok(coeffs.dot(&basis.basis.t()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn dict_from(atoms: Array2<f64>) -> Dictionary {
        let n = atoms.nrows();
        Dictionary {
            atoms,
            lut: (0..n).map(|i| (100.0 + i as f64, 10.0)).collect(),
            norms: vec![1.0; n],
            normalized: false,
        }
    }

    fn pseudo_random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut s = seed;
        Array2::from_shape_fn((n, d), |_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn rank_one_dictionary() {
        let v = Array1::from_vec(vec![0.3, -1.2, 0.5, 2.0, 0.1]);
        let atoms = Array2::from_shape_fn((12, 5), |(_, j)| v[j]);
        let b = fit_subspace(&dict_from(atoms), 3).unwrap();
        let vn = &v / v.dot(&v).sqrt();
        let dot: f64 = b.basis.column(0).dot(&vn);
        assert!((dot.abs() - 1.0).abs() < 1e-12);
        // sign convention: largest |entry| positive
        assert!(b.basis[(3, 0)] > 0.0);
        assert!(b.singular_values[1].abs() < 1e-10 && b.singular_values[2].abs() < 1e-10);
    }

    #[test]
    fn orthonormal_and_sorted() {
        let atoms = pseudo_random(40, 12, 7);
        let b = fit_subspace(&dict_from(atoms), 6).unwrap();
        let gram = b.basis.t().dot(&b.basis);
        for i in 0..6 {
            for j in 0..6 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - e).abs() < 1e-10);
            }
        }
        assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(b.captured_energy() <= b.total_energy * (1.0 + 1e-12));
    }

    #[test]
    fn panelled_reduction_matches_direct() {
        // more rows than one panel so the stacking path runs
        let atoms = pseudo_random(PANEL_ROWS + 300, 8, 3);
        let d = dict_from(atoms.clone()).normalized();
        let b = fit_subspace(&d, 8).unwrap();
        let direct = SVD::new(
            DMatrix::from_fn(atoms.nrows(), 8, |i, j| d.atoms[(i, j)]),
            false,
            false,
        );
        for (a, e) in b.singular_values.iter().zip(direct.singular_values.iter()) {
            assert!((a - e).abs() < 1e-9 * e.max(1.0), "{a} vs {e}");
        }
    }

    #[test]
    fn full_rank_projection_is_exact() {
        let atoms = pseudo_random(30, 7, 11);
        let d = dict_from(atoms).normalized();
        let b = fit_subspace(&d, 7).unwrap();
        let back = reconstruct(project(d.atoms.view(), &b).unwrap().view(), &b).unwrap();
        let err = (&back - &d.atoms)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-8);
        assert!((b.captured_energy_fraction() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn basis_column_projects_to_unit_vector() {
        let d = dict_from(pseudo_random(25, 9, 5));
        let b = fit_subspace(&d, 4).unwrap();
        let col = b.basis.column(2).to_owned().insert_axis(ndarray::Axis(0));
        let c = project(col.view(), &b).unwrap();
        for k in 0..4 {
            let e = if k == 2 { 1.0 } else { 0.0 };
            assert!((c[(0, k)] - e).abs() < 1e-12);
        }
        let zero = Array2::<f64>::zeros((2, 9));
        assert!(project(zero.view(), &b).unwrap().iter().all(|&v| v == 0.0));
        assert!(reconstruct(Array2::<f64>::zeros((2, 4)).view(), &b)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let d = dict_from(pseudo_random(10, 6, 1));
        assert!(fit_subspace(&d, 0).is_err());
        assert!(fit_subspace(&d, 7).is_err());
        let b = fit_subspace(&d, 3).unwrap();
        assert!(project(Array2::<f64>::zeros((1, 5)).view(), &b).is_err());
        assert!(reconstruct(Array2::<f64>::zeros((1, 4)).view(), &b).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let d = dict_from(pseudo_random(20, 6, 2));
        let b = fit_subspace(&d, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        assert_eq!(SubspaceBasis::load(dir.path()).unwrap(), b);
    }
}
