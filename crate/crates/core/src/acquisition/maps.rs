use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{domain, format_err, Result};
use crate::mrfa::{read_mrfa, write_mrfa, MrfaArray};

/// Channel order used wherever the three maps are stacked.
pub const CHANNELS: [&str; 3] = ["t1", "t2", "pd"];

/// T1 (ms), T2 (ms) and PD images with a validity mask. Voxels with
/// `mask == false` carry zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricMaps {
    pub t1_ms: Array2<f64>,
    pub t2_ms: Array2<f64>,
    pub pd: Array2<f64>,
    pub mask: Array2<bool>,
}

impl ParametricMaps {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            t1_ms: Array2::zeros((height, width)),
            t2_ms: Array2::zeros((height, width)),
            pd: Array2::zeros((height, width)),
            mask: Array2::from_elem((height, width), false),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dim()
    }

    pub fn channel(&self, index: usize) -> &Array2<f64> {
        match index {
            0 => &self.t1_ms,
            1 => &self.t2_ms,
            2 => &self.pd,
            _ => panic!("channel index {index} out of range"),
        }
    }

    pub fn channel_mut(&mut self, index: usize) -> &mut Array2<f64> {
        match index {
            0 => &mut self.t1_ms,
            1 => &mut self.t2_ms,
            2 => &mut self.pd,
            _ => panic!("channel index {index} out of range"),
        }
    }

    pub fn set_voxel(&mut self, (i, j): (usize, usize), t1: f64, t2: f64, pd: f64) {
        self.t1_ms[(i, j)] = t1;
        self.t2_ms[(i, j)] = t2;
        self.pd[(i, j)] = pd;
        self.mask[(i, j)] = true;
    }

    pub fn clear_voxel(&mut self, (i, j): (usize, usize)) {
        self.t1_ms[(i, j)] = 0.0;
        self.t2_ms[(i, j)] = 0.0;
        self.pd[(i, j)] = 0.0;
        self.mask[(i, j)] = false;
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Checks the physical invariants at unmasked voxels and zeros elsewhere.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if self.t1_ms.dim() != d || self.t2_ms.dim() != d || self.pd.dim() != d {
            return domain("map channels disagree in shape");
        }
        for ((idx, &m), ((&t1, &t2), &pd)) in self
            .mask
            .indexed_iter()
            .zip(self.t1_ms.iter().zip(self.t2_ms.iter()).zip(self.pd.iter()))
        {
            if m {
                if !(t1 > 0.0
                    && t2 > 0.0
                    && t2 <= t1
                    && pd >= 0.0
                    && pd.is_finite()
                    && t1.is_finite())
                {
                    return domain(format!(
                        "voxel {idx:?} violates map invariants: t1={t1} t2={t2} pd={pd}"
                    ));
                }
            } else if t1 != 0.0 || t2 != 0.0 || pd != 0.0 {
                return domain(format!("masked voxel {idx:?} carries non-zero values"));
            }
        }
        Ok(())
    }

    /// Writes `maps.mrfa` (3 x H x W, channels t1, t2, pd) and `mask.mrfa` (H x W).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let (h, w) = self.dims();
        let values: Vec<f64> = (0..3)
            .flat_map(|c| self.channel(c).iter().copied().collect::<Vec<_>>())
            .collect();
        write_mrfa(
            &MrfaArray::real(vec![3, h, w], values)?,
            dir.join("maps.mrfa"),
        )?;
        write_mrfa(
            &MrfaArray::boolean(vec![h, w], self.mask.iter().copied().collect())?,
            dir.join("mask.mrfa"),
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (dims, values) = read_mrfa(dir.join("maps.mrfa"))?.into_real("maps")?;
        if dims.len() != 3 || dims[0] != 3 {
            return Err(format_err(
                "maps",
                format!("expected dims [3, H, W], found {dims:?}"),
            ));
        }
        let (h, w) = (dims[1], dims[2]);
        let (mdims, mask) = read_mrfa(dir.join("mask.mrfa"))?.into_bool("mask")?;
        if mdims != [h, w] {
            return Err(format_err(
                "mask",
                format!("expected dims [{h}, {w}], found {mdims:?}"),
            ));
        }
        let stack = Array3::from_shape_vec((3, h, w), values)
            .map_err(|e| format_err("maps", e.to_string()))?;
        Ok(Self {
            t1_ms: stack.index_axis(Axis(0), 0).to_owned(),
            t2_ms: stack.index_axis(Axis(0), 1).to_owned(),
            pd: stack.index_axis(Axis(0), 2).to_owned(),
            mask: Array2::from_shape_vec((h, w), mask)
                .map_err(|e| format_err("mask", e.to_string()))?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsmiKind {
    /// One frame per acquired time point (T = d0).
    Raw,
    /// Subspace coefficients (T = d1).
    Compressed,
}

impl TsmiKind {
    fn file_name(self) -> &'static str {
        match self {
            TsmiKind::Raw => "tsmi_raw.mrfa",
            TsmiKind::Compressed => "tsmi_compressed.mrfa",
        }
    }
}

/// Time-series image stack, H x W x T with the time axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tsmi {
    pub data: Array3<f64>,
    pub kind: TsmiKind,
}

impl Tsmi {
    pub fn new(data: Array3<f64>, kind: TsmiKind) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return domain("TSMI contains non-finite entries");
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().to_owned()
        };
        Ok(Self { data, kind })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn frames(&self) -> usize {
        self.data.dim().2
    }

    /// One row per voxel (row-major voxel order), one column per frame.
    pub fn voxels(&self) -> ArrayView2<'_, f64> {
        let (h, w, t) = self.dims();
        self.data
            .view()
            .into_shape_with_order((h * w, t))
            .expect("TSMI data is kept in standard layout")
    }

    pub fn from_voxels(
        height: usize,
        width: usize,
        voxels: Array2<f64>,
        kind: TsmiKind,
    ) -> Result<Self> {
        let t = voxels.ncols();
        if voxels.nrows() != height * width {
            return domain(format!(
                "{} voxel rows for a {height}x{width} image",
                voxels.nrows()
            ));
        }
        let data = voxels
            .as_standard_layout()
            .to_owned()
            .into_shape_with_order((height, width, t))
            .map_err(|e| crate::error::Error::Domain(e.to_string()))?;
        Tsmi::new(data, kind)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let (h, w, t) = self.dims();
        write_mrfa(
            &MrfaArray::real(vec![h, w, t], self.data.iter().copied().collect())?,
            dir.join(self.kind.file_name()),
        )
    }

    /// Loads whichever TSMI kind is present in `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let kind = [TsmiKind::Raw, TsmiKind::Compressed]
            .into_iter()
            .find(|k| dir.join(k.file_name()).exists())
            .ok_or_else(|| format_err("tsmi", format!("no TSMI file in {}", dir.display())))?;
        let (dims, values) = read_mrfa(dir.join(kind.file_name()))?.into_real("tsmi")?;
        if dims.len() != 3 {
            return Err(format_err(
                "tsmi",
                format!("expected rank 3, found {dims:?}"),
            ));
        }
        let data = Array3::from_shape_vec((dims[0], dims[1], dims[2]), values)
            .map_err(|e| format_err("tsmi", e.to_string()))?;
        Tsmi::new(data, kind).map_err(|e| format_err("tsmi", e.to_string()))
    }
}

/// A training or evaluation pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tsmi: Tsmi,
    pub maps: ParametricMaps,
}

pub fn save_sample(sample: &Sample, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if sample.tsmi.dims().0 != sample.maps.dims().0 || sample.tsmi.dims().1 != sample.maps.dims().1
    {
        return domain("TSMI and maps disagree in spatial size");
    }
    // only one TSMI kind per directory
    for k in [TsmiKind::Raw, TsmiKind::Compressed] {
        let p = dir.join(k.file_name());
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    sample.tsmi.save(dir)?;
    sample.maps.save(dir)
}

pub fn load_sample(dir: impl AsRef<Path>) -> Result<Sample> {
    let dir = dir.as_ref();
    let tsmi = Tsmi::load(dir)?;
    let maps = ParametricMaps::load(dir)?;
    let (h, w, _) = tsmi.dims();
    if maps.dims() != (h, w) {
        return Err(format_err(
            "maps",
            format!("maps are {:?} but TSMI is {h}x{w}", maps.dims()),
        ));
    }
    Ok(Sample { tsmi, maps })
}
