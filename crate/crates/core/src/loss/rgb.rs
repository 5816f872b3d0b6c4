use crate::error::{Error, Result};
use crate::metrics;
use crate::scene::ImageBuffer;

/// `(1 − w)·mean|I − Î| + w·(1 − SSIM(I, Î))/2`, with its gradient w.r.t. `I`.
/// The SSIM term is skipped entirely when `w = 0`.
pub fn rgb_loss_with_grad(image: &ImageBuffer, reference: &ImageBuffer, ssim_weight: f64) -> Result<(f64, Vec<f64>)> {
    if !image.same_shape(reference) {
        return Err(Error::invalid(format!(
            "rgb loss inputs differ in size: {}x{} vs {}x{}",
            image.width, image.height, reference.width, reference.height
        )));
    }
    let n = image.data.len() as f64;
    let l1_weight = 1.0 - ssim_weight;
    let mut l1 = 0.0;
    let mut grad: Vec<f64> = image
        .data
        .iter()
        .zip(&reference.data)
        .map(|(a, b)| {
            let d = a - b;
            l1 += d.abs();
            l1_weight * if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            } / n
        })
        .collect();
    let l1 = l1 / n;
    if ssim_weight == 0.0 {
        return Ok((l1, grad));
    }
    let (ssim, g_ssim) = metrics::ssim_with_grad(image, reference)?;
    for (g, s) in grad.iter_mut().zip(g_ssim) {
        *g -= 0.5 * ssim_weight * s;
    }
    Ok((l1_weight * l1 + ssim_weight * (1.0 - ssim) / 2.0, grad))
}

pub fn rgb_loss(image: &ImageBuffer, reference: &ImageBuffer, ssim_weight: f64) -> Result<f64> {
    rgb_loss_with_grad(image, reference, ssim_weight).map(|(l, _)| l)
}
