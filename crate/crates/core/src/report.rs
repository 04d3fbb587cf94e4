//! Map comparison metrics, grayscale rendering and the benchmark CSV.

use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::acquisition::ParametricMaps;
use crate::error::{domain, Result};

pub const CHANNEL_NAMES: [&str; 3] = ["t1", "t2", "pd"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// `20 log10(range / rmse)`; infinite for an exact match.
    pub psnr: f64,
    /// Denormalization range used for PSNR and normalized errors.
    pub range: f64,
}

impl ChannelMetrics {
    pub fn normalized_mae(&self) -> f64 {
        self.mae / self.range
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// T1, T2, PD.
    pub channels: [ChannelMetrics; 3],
    pub voxels: usize,
    pub method: String,
    pub seconds: f64,
}

impl EvalReport {
    pub fn t1(&self) -> &ChannelMetrics {
        &self.channels[0]
    }

    pub fn t2(&self) -> &ChannelMetrics {
        &self.channels[1]
    }

    pub fn pd(&self) -> &ChannelMetrics {
        &self.channels[2]
    }

    /// `method,channel,mae,rmse,psnr,normalized_mae,voxels,seconds` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,channel,mae,rmse,psnr,normalized_mae,voxels,seconds\n");
        for (name, m) in CHANNEL_NAMES.iter().zip(&self.channels) {
            let _ = writeln!(
                s,
                "{},{name},{},{},{},{},{},{}",
                self.method,
                m.mae,
                m.rmse,
                m.psnr,
                m.normalized_mae(),
                self.voxels,
                self.seconds
            );
        }
        s
    }
}

/// Per-channel errors over voxels unmasked in both maps. `ranges` gives the
/// T1, T2 and PD denormalization ranges.
pub fn evaluate(
    pred: &ParametricMaps,
    gt: &ParametricMaps,
    ranges: [f64; 3],
) -> Result<EvalReport> {
    if pred.dims() != gt.dims() {
        return domain(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        ));
    }
    if ranges.iter().any(|&r| !(r > 0.0)) {
        return domain(format!("metric ranges {ranges:?} must be positive"));
    }
    let both: Vec<(usize, usize)> = gt
        .mask
        .indexed_iter()
        .filter(|&(idx, &m)| m && pred.mask[idx])
        .map(|(idx, _)| idx)
        .collect();
    if both.is_empty() {
        return domain("prediction and ground-truth masks do not intersect");
    }
    let n = both.len() as f64;
    let channels = std::array::from_fn(|c| {
        let (p, g) = (pred.channel(c), gt.channel(c));
        let (mut abs, mut sq) = (0.0, 0.0);
        for &idx in &both {
            let d = p[idx] - g[idx];
            abs += d.abs();
            sq += d * d;
        }
        let rmse = (sq / n).sqrt();
        ChannelMetrics {
            mae: abs / n,
            rmse,
            psnr: 20.0 * (ranges[c] / rmse).log10(),
            range: ranges[c],
        }
    });
    Ok(EvalReport {
        channels,
        voxels: both.len(),
        method: String::new(),
        seconds: 0.0,
    })
}

/// 8-bit level for `v`: `round(255 clamp((v - min) / (max - min), 0, 1))`,
/// halves rounded up.
pub fn gray_level(v: f64, min: f64, max: f64) -> u8 {
    let t = ((v - min) / (max - min)).clamp(0.0, 1.0);
    let t = if t.is_nan() { 0.0 } else { t };
    (255.0 * t + 0.5).floor() as u8
}

/// Writes one map channel as an 8-bit grayscale PNG plus `<path>.range.csv`.
pub fn write_map_png(
    maps: &ParametricMaps,
    channel: usize,
    range: (f64, f64),
    path: impl AsRef<Path>,
) -> Result<()> {
    let (min, max) = range;
    if !(min < max) || !min.is_finite() || !max.is_finite() {
        return domain(format!("render range ({min}, {max}) needs min < max"));
    }
    if channel > 2 {
        return domain(format!("channel {channel} outside 0..3"));
    }
    let path = path.as_ref();
    let (h, w) = maps.dims();
    let pixels: Vec<u8> = maps
        .channel(channel)
        .iter()
        .map(|&v| gray_level(v, min, max))
        .collect();
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    writer
        .write_image_data(&pixels)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    writer
        .finish()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".range.csv");
    fs::write(
        sidecar,
        format!("channel,min,max\n{},{min},{max}\n", CHANNEL_NAMES[channel]),
    )?;
    Ok(())
}

/// One row of the benchmark CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub height: usize,
    pub width: usize,
    pub d0: usize,
    pub d1: usize,
    pub atoms: usize,
    pub seconds: f64,
}

pub const BENCH_HEADER: &str = "method,H,W,d0,d1,atoms,seconds";

/// Appends rows, writing the header first when the file is new or empty.
pub fn append_bench_rows(path: impl AsRef<Path>, rows: &[BenchRow]) -> Result<()> {
    let path = path.as_ref();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{BENCH_HEADER}")?;
    }
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.method, r.height, r.width, r.d0, r.d1, r.atoms, r.seconds
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maps() -> ParametricMaps {
        let mut m = ParametricMaps::empty(4, 5);
        for i in 0..4 {
            for j in 0..5 {
                if (i + j) % 3 != 0 {
                    m.set_voxel(
                        (i, j),
                        500.0 + 10.0 * (i * 5 + j) as f64,
                        50.0 + j as f64,
                        0.8,
                    );
                }
            }
        }
        m
    }

    #[test]
    fn identical_maps_have_zero_error() {
        let r = evaluate(&maps(), &maps(), [4000.0, 600.0, 2.0]).unwrap();
        for c in &r.channels {
            assert_eq!(c.mae, 0.0);
            assert_eq!(c.rmse, 0.0);
            assert!(c.psnr.is_infinite());
        }
        assert_eq!(r.voxels, maps().masked_count());
    }

    #[test]
    fn constant_t1_offset() {
        let gt = maps();
        let mut p = gt.clone();
        p.t1_ms.iter_mut().for_each(|v| *v += 10.0);
        let r = evaluate(&p, &gt, [4000.0, 600.0, 2.0]).unwrap();
        assert!((r.t1().mae - 10.0).abs() < 1e-12);
        assert!((r.t1().rmse - 10.0).abs() < 1e-12);
        assert_eq!(r.t2().mae, 0.0);
        assert!((r.t1().psnr - 20.0 * 400f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn disjoint_masks_error() {
        let a = maps();
        let mut b = ParametricMaps::empty(4, 5);
        b.set_voxel((0, 0), 900.0, 90.0, 1.0);
        assert!(evaluate(&a, &b, [1.0; 3]).is_err());
        assert!(evaluate(&a, &ParametricMaps::empty(3, 5), [1.0; 3]).is_err());
    }

    #[test]
    fn gray_levels() {
        assert_eq!(gray_level(0.5, 0.0, 1.0), 128);
        assert_eq!(gray_level(-3.0, 0.0, 1.0), 0);
        assert_eq!(gray_level(0.0, 0.0, 1.0), 0);
        assert_eq!(gray_level(1.0, 0.0, 1.0), 255);
        assert_eq!(gray_level(7.0, 0.0, 1.0), 255);
    }

    #[test]
    fn png_roundtrip_and_range_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t1.png");
        let m = maps();
        write_map_png(&m, 0, (0.0, 1000.0), &p).unwrap();
        let dec = png::Decoder::new(std::io::BufReader::new(fs::File::open(&p).unwrap()));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (5, 4));
        for (k, &v) in m.t1_ms.iter().enumerate() {
            assert_eq!(buf[k], gray_level(v, 0.0, 1000.0));
        }
        let side = fs::read_to_string(dir.path().join("t1.png.range.csv")).unwrap();
        assert_eq!(side, "channel,min,max\nt1,0,1000\n");
        assert!(write_map_png(&m, 0, (1.0, 1.0), &p).is_err());
    }

    #[test]
    fn bench_header_written_once() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bench.csv");
        let row = BenchRow {
            method: "dm".into(),
            height: 2,
            width: 3,
            d0: 4,
            d1: 0,
            atoms: 5,
            seconds: 0.5,
        };
        append_bench_rows(&p, std::slice::from_ref(&row)).unwrap();
        append_bench_rows(&p, &[row]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            format!("{BENCH_HEADER}\ndm,2,3,4,0,5,0.5\ndm,2,3,4,0,5,0.5\n")
        );
    }
}
