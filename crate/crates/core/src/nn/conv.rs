//! Depthwise 3x3 and pointwise 1x1 convolutions with "same" zero padding.

use ndarray::{linalg::general_mat_mul, ArrayView2, ArrayViewMut2};

use super::tensor::Tensor4;
use crate::error::{domain, Result};

/// One 3x3 kernel and one bias per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthwiseConv {
    /// C x 3 x 3, row-major.
    pub kernels: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DepthwiseConv {
    pub fn zeros(channels: usize) -> Self {
        Self {
            kernels: vec![0.0; channels * 9],
            bias: vec![0.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.bias.len()
    }

    fn check(&self, x: &Tensor4) -> Result<()> {
        if self.kernels.len() != 9 * self.channels() {
            return domain("depthwise kernel count does not match bias count");
        }
        if x.channels() != self.channels() {
            return domain(format!(
                "depthwise conv has {} kernels, input has {} channels",
                self.channels(),
                x.channels()
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check(x)?;
        let (n, c, h, w) = x.dims();
        let mut out = Tensor4::zeros(n, c, h, w);
        let plane = h * w;
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                let src = &x.data[base..base + plane];
                let dst = &mut out.data[base..base + plane];
                dst.fill(self.bias[ch]);
                let k = &self.kernels[ch * 9..ch * 9 + 9];
                for ky in 0..3 {
                    let (y0, y1) = valid_range(ky, h);
                    for kx in 0..3 {
                        let wgt = k[ky * 3 + kx];
                        if wgt == 0.0 {
                            continue;
                        }
                        let (x0, x1) = valid_range(kx, w);
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                            let d = &mut dst[y * w + x0..y * w + x1];
                            d.iter_mut().zip(s).for_each(|(o, &i)| *o += wgt * i);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Returns the input gradient and the parameter gradients.
    pub fn backward(&self, x: &Tensor4, grad_out: &Tensor4) -> Result<(Tensor4, DepthwiseConv)> {
        self.check(x)?;
        if !x.same_shape(grad_out) {
            return domain("depthwise backward: gradient shape differs from input");
        }
        let (n, c, h, w) = x.dims();
        let plane = h * w;
        let mut gx = Tensor4::zeros(n, c, h, w);
        let mut gp = DepthwiseConv::zeros(c);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                let src = &x.data[base..base + plane];
                let g = &grad_out.data[base..base + plane];
                let gi = &mut gx.data[base..base + plane];
                gp.bias[ch] += g.iter().sum::<f64>();
                let k = &self.kernels[ch * 9..ch * 9 + 9];
                for ky in 0..3 {
                    let (y0, y1) = valid_range(ky, h);
                    for kx in 0..3 {
                        let wgt = k[ky * 3 + kx];
                        let (x0, x1) = valid_range(kx, w);
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let s = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                            let gr = &g[y * w + x0..y * w + x1];
                            acc += s.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                            let d = &mut gi[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                            d.iter_mut().zip(gr).for_each(|(o, &v)| *o += wgt * v);
                        }
                        gp.kernels[ch * 9 + ky * 3 + kx] += acc;
                    }
                }
            }
        }
        Ok((gx, gp))
    }
}

/// Output rows (or columns) `[lo, hi)` whose tap at kernel offset `k`
/// lands inside an axis of length `len`.
#[inline]
fn valid_range(k: usize, len: usize) -> (usize, usize) {
    let lo = if k == 0 { 1 } else { 0 };
    let hi = if k == 2 { len.saturating_sub(1) } else { len };
    (lo.min(hi), hi)
}

/// Per-pixel affine channel map.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseConv {
    /// Cout x Cin, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_channels: usize,
}

impl PointwiseConv {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            weights: vec![0.0; in_channels * out_channels],
            bias: vec![0.0; out_channels],
            in_channels,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.bias.len()
    }

    fn check(&self, x: &Tensor4) -> Result<()> {
        if self.weights.len() != self.in_channels * self.out_channels() {
            return domain("pointwise weight matrix does not match its channel counts");
        }
        if x.channels() != self.in_channels {
            return domain(format!(
                "pointwise conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            ));
        }
        Ok(())
    }

    fn weight_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.out_channels(), self.in_channels), &self.weights)
            .expect("checked shape")
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check(x)?;
        let (n, _, h, w) = x.dims();
        let cout = self.out_channels();
        let plane = h * w;
        let mut out = Tensor4::zeros(n, cout, h, w);
        let wv = self.weight_view();
        for b in 0..n {
            let xs = ArrayView2::from_shape((self.in_channels, plane), x.sample(b))
                .expect("sample block");
            let dst = out.sample_mut(b);
            for (co, chunk) in dst.chunks_mut(plane).enumerate() {
                chunk.fill(self.bias[co]);
            }
            let mut ov = ArrayViewMut2::from_shape((cout, plane), dst).expect("sample block");
            general_mat_mul(1.0, &wv, &xs, 1.0, &mut ov);
        }
        Ok(out)
    }

    pub fn backward(&self, x: &Tensor4, grad_out: &Tensor4) -> Result<(Tensor4, PointwiseConv)> {
        self.check(x)?;
        let (n, _, h, w) = x.dims();
        let cout = self.out_channels();
        if grad_out.dims() != (n, cout, h, w) {
            return domain("pointwise backward: gradient shape mismatch");
        }
        let plane = h * w;
        let mut gx = Tensor4::zeros(n, self.in_channels, h, w);
        let mut gp = PointwiseConv::zeros(self.in_channels, cout);
        let wv = self.weight_view();
        for b in 0..n {
            let xs = ArrayView2::from_shape((self.in_channels, plane), x.sample(b))
                .expect("sample block");
            let gs =
                ArrayView2::from_shape((cout, plane), grad_out.sample(b)).expect("sample block");
            for (co, row) in grad_out.sample(b).chunks(plane).enumerate() {
                gp.bias[co] += row.iter().sum::<f64>();
            }
            let mut gw = ArrayViewMut2::from_shape((cout, self.in_channels), &mut gp.weights[..])
                .expect("weights");
            general_mat_mul(1.0, &gs, &xs.t(), 1.0, &mut gw);
            let mut gxv = ArrayViewMut2::from_shape((self.in_channels, plane), gx.sample_mut(b))
                .expect("sample block");
            general_mat_mul(1.0, &wv.t(), &gs, 0.0, &mut gxv);
        }
        Ok((gx, gp))
    }
}
