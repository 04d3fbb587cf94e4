use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor4;
use crate::error::{domain, Result};

pub fn relu(x: &Tensor4) -> Tensor4 {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(x: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
    if !x.same_shape(grad_out) {
        return domain("relu backward: shape mismatch");
    }
    let mut g = grad_out.clone();
    g.data.iter_mut().zip(&x.data).for_each(|(gv, &xv)| {
        if xv <= 0.0 {
            *gv = 0.0
        }
    });
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: kept entries are scaled by `1 / (1 - rate)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    rate: f64,
}

/// Per-entry multipliers drawn in a training forward pass; `None` means
/// the pass was the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask(Option<Vec<f64>>);

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return domain(format!("dropout rate {rate} outside [0, 1)"));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&self, x: &Tensor4, mode: Mode, seed: u64) -> (Tensor4, DropoutMask) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.clone(), DropoutMask(None));
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                if rng.random::<f64>() < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let mut y = x.clone();
        y.data.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        (y, DropoutMask(Some(mask)))
    }

    pub fn backward(&self, mask: &DropoutMask, grad_out: &Tensor4) -> Result<Tensor4> {
        match &mask.0 {
            None => Ok(grad_out.clone()),
            Some(m) if m.len() == grad_out.len() => {
                let mut g = grad_out.clone();
                g.data.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
                Ok(g)
            }
            Some(_) => domain("dropout backward: mask size mismatch"),
        }
    }
}
