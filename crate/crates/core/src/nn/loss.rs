use super::tensor::Tensor4;
use crate::error::{domain, Result};

/// Mean squared error over unmasked pixels. `pixel_mask` has one entry per
/// `(n, y, x)` and applies to every channel.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4, pixel_mask: &[bool]) -> Result<f64> {
    Ok(mse_loss_with_grad(pred, target, pixel_mask)?.0)
}

/// Loss and its gradient with respect to `pred`: `2 (pred - target) / count`
/// on unmasked entries, zero elsewhere.
pub fn mse_loss_with_grad(
    pred: &Tensor4,
    target: &Tensor4,
    pixel_mask: &[bool],
) -> Result<(f64, Tensor4)> {
    if !pred.same_shape(target) {
        return domain(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        ));
    }
    let (n, c, h, w) = pred.dims();
    if pixel_mask.len() != n * h * w {
        return domain(format!(
            "mask has {} entries, expected {}",
            pixel_mask.len(),
            n * h * w
        ));
    }
    let on = pixel_mask.iter().filter(|&&m| m).count();
    if on == 0 {
        return domain("loss mask selects no pixels");
    }
    let count = (on * c) as f64;
    let plane = h * w;
    let mut grad = Tensor4::zeros(n, c, h, w);
    let mut sum = 0.0;
    for b in 0..n {
        let m = &pixel_mask[b * plane..(b + 1) * plane];
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            for p in 0..plane {
                if m[p] {
                    let d = pred.data[base + p] - target.data[base + p];
                    sum += d * d;
                    grad.data[base + p] = 2.0 * d / count;
                }
            }
        }
    }
    Ok((sum / count, grad))
}
