use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use super::epg::simulate_unit;
use super::schedule::SequenceSchedule;
use crate::error::{domain, format_err, Result};
use crate::mrfa::{read_mrfa, write_mrfa, MrfaArray};

/// Cross product of T1 and T2 values restricted to physically realizable
/// pairs (`t2 <= t1`). Entries are ordered T1-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGrid {
    t1_values_ms: Vec<f64>,
    t2_values_ms: Vec<f64>,
    entries: Vec<(f64, f64)>,
}

impl ParameterGrid {
    pub fn new(t1_values_ms: Vec<f64>, t2_values_ms: Vec<f64>) -> Result<Self> {
        for (name, v) in [("t1", &t1_values_ms), ("t2", &t2_values_ms)] {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return domain(format!("{name} values must be positive and finite"));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return domain(format!("{name} values must be strictly ascending"));
            }
        }
        let entries = t1_values_ms
            .iter()
            .flat_map(|&t1| {
                t2_values_ms
                    .iter()
                    .filter(move |&&t2| t2 <= t1)
                    .map(move |&t2| (t1, t2))
            })
            .collect();
        Ok(Self {
            t1_values_ms,
            t2_values_ms,
            entries,
        })
    }

    /// Grid from inclusive `(start, stop, step)` ranges.
    pub fn from_ranges(t1: (f64, f64, f64), t2: (f64, f64, f64)) -> Result<Self> {
        Self::new(arange(t1)?, arange(t2)?)
    }

    pub fn t1_values_ms(&self) -> &[f64] {
        &self.t1_values_ms
    }

    pub fn t2_values_ms(&self) -> &[f64] {
        &self.t2_values_ms
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for ParameterGrid {
    /// T1 in {100, 120, ..., 4000} ms, T2 in {20, 24, ..., 600} ms.
    fn default() -> Self {
        Self::from_ranges((100.0, 4000.0, 20.0), (20.0, 600.0, 4.0)).expect("default grid is valid")
    }
}

/// Values `start + i * step` up to `stop` inclusive; computed by index so
/// that no accumulated rounding drifts the grid.
fn arange((start, stop, step): (f64, f64, f64)) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return domain(format!("invalid range ({start}, {stop}, {step})"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

/// Simulated fingerprints over a parameter grid with their lookup table.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    /// N x d0, one atom per row.
    pub atoms: Array2<f64>,
    pub lut: Vec<(f64, f64)>,
    /// Euclidean norm of each atom before normalization.
    pub norms: Vec<f64>,
    pub normalized: bool,
}

impl Dictionary {
    pub fn len(&self) -> usize {
        self.lut.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lut.is_empty()
    }

    pub fn d0(&self) -> usize {
        self.atoms.ncols()
    }

    /// Copy of the dictionary with unit-norm rows. Rows with zero norm are
    /// left at zero.
    pub fn normalized(&self) -> Dictionary {
        if self.normalized {
            return self.clone();
        }
        let mut atoms = self.atoms.clone();
        for mut row in atoms.rows_mut() {
            let n = norm(row.view());
            if n > 0.0 {
                row.mapv_inplace(|v| v / n);
            }
        }
        Dictionary {
            atoms,
            lut: self.lut.clone(),
            norms: self.norms.clone(),
            normalized: true,
        }
    }

    /// Writes `atoms.mrfa` (N x d0), `lut.mrfa` (N x 2) and `norms.mrfa` (N)
    /// into `dir`, plus a `normalized` marker file when applicable.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let (n, d0) = self.atoms.dim();
        write_mrfa(
            &MrfaArray::real(vec![n, d0], self.atoms.iter().copied().collect())?,
            dir.join("atoms.mrfa"),
        )?;
        let lut: Vec<f64> = self.lut.iter().flat_map(|&(a, b)| [a, b]).collect();
        write_mrfa(&MrfaArray::real(vec![n, 2], lut)?, dir.join("lut.mrfa"))?;
        write_mrfa(
            &MrfaArray::real(vec![n], self.norms.clone())?,
            dir.join("norms.mrfa"),
        )?;
        fs::write(dir.join("normalized.txt"), format!("{}\n", self.normalized))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (dims, atoms) = read_mrfa(dir.join("atoms.mrfa"))?.into_real("atoms")?;
        if dims.len() != 2 {
            return Err(format_err(
                "atoms",
                format!("expected rank 2, found {}", dims.len()),
            ));
        }
        let n = dims[0];
        let atoms = Array2::from_shape_vec((n, dims[1]), atoms)
            .map_err(|e| format_err("atoms", e.to_string()))?;
        let (ldims, lut) = read_mrfa(dir.join("lut.mrfa"))?.into_real("lut")?;
        if ldims != [n, 2] {
            return Err(format_err(
                "lut",
                format!("expected dims [{n}, 2], found {ldims:?}"),
            ));
        }
        let (ndims, norms) = read_mrfa(dir.join("norms.mrfa"))?.into_real("norms")?;
        if ndims != [n] {
            return Err(format_err(
                "norms",
                format!("expected dims [{n}], found {ndims:?}"),
            ));
        }
        let normalized = match fs::read_to_string(dir.join("normalized.txt")) {
            Ok(s) => s.trim() == "true",
            Err(_) => false,
        };
        Ok(Self {
            atoms,
            lut: lut.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
            norms,
            normalized,
        })
    }
}

pub(crate) fn norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Simulates one unit-PD atom per grid entry.
pub fn build_dictionary(
    schedule: &SequenceSchedule,
    grid: &ParameterGrid,
    normalize: bool,
) -> Result<Dictionary> {
    if grid.is_empty() {
        return domain("cannot build a dictionary from an empty grid");
    }
    let d0 = schedule.d0();
    let rows: Vec<Vec<f64>> = grid
        .entries()
        .par_iter()
        .map(|&(t1, t2)| simulate_unit(schedule, t1, t2))
        .collect();
    let n = rows.len();
    let mut atoms = Array2::zeros((n, d0));
    let mut norms = Vec::with_capacity(n);
    for (mut dst, row) in atoms.rows_mut().into_iter().zip(&rows) {
        let nrm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        norms.push(nrm);
        if normalize && nrm > 0.0 {
            dst.iter_mut().zip(row).for_each(|(d, &v)| *d = v / nrm);
        } else {
            dst.iter_mut().zip(row).for_each(|(d, &v)| *d = v);
        }
    }
    Ok(Dictionary {
        atoms,
        lut: grid.entries().to_vec(),
        norms,
        normalized: normalize,
    })
}
