//! Gradient-profile loss on masked depth.
//!
//! Discrete form: forward differences along x and y, averaged over every
//! pixel whose stencil (itself, right and lower neighbour) is unmasked, of
//! `‖∇D̂_m − ∇D_m‖₂`.

use crate::error::{Error, Result};
use crate::scene::DepthMap;

pub fn gpp_loss_with_grad(rendered: &DepthMap, reference: &DepthMap, mask: &[bool]) -> Result<(f64, Vec<f64>)> {
    if !rendered.same_shape(reference) || mask.len() != rendered.data.len() {
        return Err(Error::invalid(format!(
            "gpp inputs differ in size: {}x{}, {}x{}, mask of {}",
            rendered.width,
            rendered.height,
            reference.width,
            reference.height,
            mask.len()
        )));
    }
    let (w, h) = (rendered.width, rendered.height);
    let mut grad = vec![0.0; rendered.data.len()];
    let mut total = 0.0;
    let mut support = 0usize;
    let masked = |d: &DepthMap, i: usize| if mask[i] { d.data[i] } else { 0.0 };
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let i = y * w + x;
            let (right, down) = (i + 1, i + w);
            if !(mask[i] && mask[right] && mask[down]) {
                continue;
            }
            support += 1;
            let ex = (masked(reference, right) - masked(reference, i)) - (masked(rendered, right) - masked(rendered, i));
            let ey = (masked(reference, down) - masked(reference, i)) - (masked(rendered, down) - masked(rendered, i));
            let norm = ex.hypot(ey);
            total += norm;
            if norm > 0.0 {
                let (gx, gy) = (ex / norm, ey / norm);
                grad[right] -= gx;
                grad[i] += gx;
                grad[down] -= gy;
                grad[i] += gy;
            }
        }
    }
    if support == 0 {
        return Ok((0.0, grad));
    }
    let n = support as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((total / n, grad))
}

pub fn gpp_loss(rendered: &DepthMap, reference: &DepthMap, mask: &[bool]) -> Result<f64> {
    gpp_loss_with_grad(rendered, reference, mask).map(|(l, _)| l)
}
