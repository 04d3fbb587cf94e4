use crate::error::{domain, Result};

/// Dense 4-D array in N, C, H, W order (W fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: (usize, usize, usize, usize),
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            dims: (n, c, h, w),
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(dims: (usize, usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (n, c, h, w) = dims;
        if n * c * h * w != data.len() {
            return domain(format!(
                "dims {dims:?} need {} values, got {}",
                n * c * h * w,
                data.len()
            ));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(
        dims: (usize, usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let (n, c, h, w) = dims;
        let mut data = Vec::with_capacity(n * c * h * w);
        for a in 0..n {
            for b in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(a, b, y, x));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims.0
    }

    pub fn channels(&self) -> usize {
        self.dims.1
    }

    pub fn plane(&self) -> usize {
        self.dims.2 * self.dims.3
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let (_, cc, h, w) = self.dims;
        ((n * cc + c) * h + y) * w + x
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    /// All channels of batch entry `n`, as a C x (H*W) row-major block.
    pub fn sample(&self, n: usize) -> &[f64] {
        let s = self.dims.1 * self.plane();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.dims.1 * self.plane();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        self.dims == other.dims
    }
}
