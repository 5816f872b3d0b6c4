//! Analytic gradients of the rendered color and depth w.r.t. every primitive
//! parameter.
//!
//! The backward pass re-runs binning and per-pixel compositing, then walks
//! each pixel's contributions back to front. With `S_k` the color (or depth)
//! composited behind contribution `k`, the compositing derivative is
//! `∂C/∂σ_k = T_k (c_k − S_k)`, which needs no division by `1 − σ_k`.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::forward::{bin, composite_pixel};
use super::project::{perspective_jacobian, ProjectedGaussian};
use super::RenderSettings;
use crate::error::{Error, Result};
use crate::scene::{
    covariance_backward, covariance_from_params, sh, Camera, CloudGradients, GaussianCloud, GaussianPrimitive,
    PrimitiveGradient,
};

/// Gradient of the loss w.r.t. the 2D quantities of one projected primitive.
#[derive(Debug, Clone, Copy, Default)]
struct ScreenGradient {
    mean: Vector2<f64>,
    /// Per-entry gradient of the conic: (xx, xy, yy). The xy entry appears
    /// twice in the symmetric matrix; this is the gradient of one of them.
    conic: [f64; 3],
    color: Vector3<f64>,
    depth: f64,
    opacity: f64,
}

impl ScreenGradient {
    fn add(&mut self, o: &ScreenGradient) {
        self.mean += o.mean;
        self.conic[0] += o.conic[0];
        self.conic[1] += o.conic[1];
        self.conic[2] += o.conic[2];
        self.color += o.color;
        self.depth += o.depth;
        self.opacity += o.opacity;
    }
}

/// Backpropagates upstream gradients on the rendered color (interleaved RGB,
/// `3·W·H`) and depth (`W·H`) to the cloud parameters. Gradients of culled
/// primitives are zero. Color gradients are blocked where the composited
/// color was clamped.
pub fn render_backward(
    cloud: &GaussianCloud,
    camera: &Camera,
    settings: &RenderSettings,
    grad_color: &[f64],
    grad_depth: &[f64],
) -> Result<CloudGradients> {
    let n_pix = camera.pixel_count();
    if grad_color.len() != 3 * n_pix || grad_depth.len() != n_pix {
        return Err(Error::invalid(format!(
            "upstream gradients have {} color and {} depth values for a {}x{} image",
            grad_color.len(),
            grad_depth.len(),
            camera.width,
            camera.height
        )));
    }
    if cloud.is_empty() {
        return Err(Error::EmptyCloud("cannot backpropagate through an empty cloud".into()));
    }
    cloud.validate()?;
    camera.validate()?;
    settings.validate()?;

    let binning = bin(cloud, camera, settings);
    let w = camera.width;

    let tile_grads: Vec<Vec<ScreenGradient>> = binning
        .tiles
        .par_iter()
        .map(|tile| {
            let mut local = vec![ScreenGradient::default(); tile.list.len()];
            let mut contribs: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
            for y in tile.y0..tile.y1 {
                for x in tile.x0..tile.x1 {
                    let i = y * w + x;
                    let gc = Vector3::new(grad_color[3 * i], grad_color[3 * i + 1], grad_color[3 * i + 2]);
                    let gd = grad_depth[i];
                    if gc == Vector3::zeros() && gd == 0.0 {
                        continue;
                    }
                    let (px, py) = (x as f64, y as f64);
                    contribs.clear();
                    let acc = composite_pixel(px, py, &tile.list, &binning.projected, settings, |pos, s, t, g, e| {
                        contribs.push((pos, s, t, g, e))
                    });
                    let gc = Vector3::from_fn(|c, _| {
                        if (0.0..=1.0).contains(&acc.color[c]) {
                            gc[c]
                        } else {
                            0.0
                        }
                    });
                    pixel_backward(px, py, gc, gd, &contribs, &tile.list, &binning.projected, &mut local);
                }
            }
            local
        })
        .collect();

    // Fixed-order reduction over tiles keeps the result independent of threading.
    let mut screen = vec![ScreenGradient::default(); binning.projected.len()];
    for (tile, local) in binning.tiles.iter().zip(&tile_grads) {
        for (&k, g) in tile.list.iter().zip(local) {
            screen[k].add(g);
        }
    }

    let per_projected: Vec<(usize, PrimitiveGradient)> = binning
        .projected
        .par_iter()
        .zip(screen.par_iter())
        .map(|(proj, sg)| {
            let prim = &cloud.primitives[proj.index];
            (proj.index, primitive_backward(prim, proj, sg, camera, settings, cloud.sh_degree))
        })
        .collect();

    let mut grads = CloudGradients::zeros_like(cloud);
    for (index, g) in per_projected {
        grads.primitives[index] = g;
    }
    Ok(grads)
}

#[allow(clippy::too_many_arguments)]
fn pixel_backward(
    px: f64,
    py: f64,
    grad_color: Vector3<f64>,
    grad_depth: f64,
    contribs: &[(usize, f64, f64, f64, f64)],
    list: &[usize],
    projected: &[ProjectedGaussian],
    local: &mut [ScreenGradient],
) {
    let mut behind_color = Vector3::zeros();
    let mut behind_depth = 0.0;
    for &(pos, sigma, t, gv, e) in contribs.iter().rev() {
        let g = &projected[list[pos]];
        let weight = sigma * t;
        let acc = &mut local[pos];
        acc.color += grad_color * weight;
        acc.depth += grad_depth * weight;

        let d_sigma = t * (grad_color.dot(&(g.rgb - behind_color)) + grad_depth * (g.view_depth - behind_depth));
        behind_color = g.rgb * sigma + behind_color * (1.0 - sigma);
        behind_depth = g.view_depth * sigma + behind_depth * (1.0 - sigma);

        acc.opacity += d_sigma * gv;
        let d_q = -0.5 * e * g.opacity * d_sigma;
        let dx = px - g.mean2d.x;
        let dy = py - g.mean2d.y;
        // q = dᵀ Q d with d = p − mean; ∂q/∂mean = −2 Q d.
        acc.mean.x += d_q * -2.0 * (g.conic[0] * dx + g.conic[1] * dy);
        acc.mean.y += d_q * -2.0 * (g.conic[1] * dx + g.conic[2] * dy);
        acc.conic[0] += d_q * dx * dx;
        acc.conic[1] += d_q * dx * dy;
        acc.conic[2] += d_q * dy * dy;
    }
}

fn primitive_backward(
    prim: &GaussianPrimitive,
    proj: &ProjectedGaussian,
    sg: &ScreenGradient,
    camera: &Camera,
    settings: &RenderSettings,
    sh_degree: usize,
) -> PrimitiveGradient {
    let mut out = PrimitiveGradient::zeros(sh_degree);
    let f = camera.focal;
    let wr = &camera.pose.rotation;
    let t = camera.world_to_camera(&prim.position);
    let iz = 1.0 / t.z;

    // Conic → 2D covariance: dL/dΣ₂ = −Q G Q.
    let q = Matrix2::new(proj.conic[0], proj.conic[1], proj.conic[1], proj.conic[2]);
    let g_conic = Matrix2::new(sg.conic[0], sg.conic[1], sg.conic[1], sg.conic[2]);
    let g_cov2d = -(q * g_conic * q);

    // Σ₂ = J W Σ̂ Wᵀ Jᵀ + λI
    let k = settings.smoothing_scale / f;
    let cov = covariance_from_params(&prim.rotation, &prim.log_scales).expect("validated primitive");
    let cov_filtered = cov + Matrix3::identity() * (k * t.z) * (k * t.z);
    let cov_cam = wr * cov_filtered * wr.transpose();
    let j = perspective_jacobian(&t, f);
    let g_j = 2.0 * g_cov2d * j * cov_cam;
    let g_cov_cam = j.transpose() * g_cov2d * j;
    let g_cov_filtered = wr.transpose() * g_cov_cam * wr;

    let mut g_t = Vector3::zeros();
    // Jacobian entries.
    let iz2 = iz * iz;
    g_t.x += g_j[(0, 2)] * (-f * iz2);
    g_t.y += g_j[(1, 2)] * (-f * iz2);
    g_t.z += (g_j[(0, 0)] + g_j[(1, 1)]) * (-f * iz2)
        + g_j[(0, 2)] * (2.0 * f * t.x * iz2 * iz)
        + g_j[(1, 2)] * (2.0 * f * t.y * iz2 * iz);
    // Depth-dependent smoothing filter.
    g_t.z += 2.0 * k * k * t.z * g_cov_filtered.trace();
    // Projected mean.
    g_t.x += sg.mean.x * f * iz;
    g_t.y += sg.mean.y * f * iz;
    g_t.z += -(sg.mean.x * f * t.x + sg.mean.y * f * t.y) * iz2;
    // Composited depth.
    g_t.z += sg.depth;

    out.position = wr.transpose() * g_t;
    let (g_rot, g_ls) = covariance_backward(&prim.rotation, &prim.log_scales, &g_cov_filtered);
    out.rotation = g_rot;
    out.log_scales = g_ls;

    // View-dependent color.
    let v = prim.position - camera.center();
    let vn = v.norm();
    let dir = v / vn;
    let n = prim.sh_coeffs.len();
    let mut basis = [0.0; 16];
    sh::basis(&dir, &mut basis[..n]);
    for (gk, b) in out.sh_coeffs.iter_mut().zip(&basis[..n]) {
        *gk = sg.color * *b;
    }
    if n > 1 {
        let mut dbasis = [Vector3::zeros(); 16];
        sh::basis_gradient(&dir, &mut dbasis[..n]);
        let g_dir = prim
            .sh_coeffs
            .iter()
            .zip(&dbasis[..n])
            .fold(Vector3::zeros(), |acc, (c, db)| acc + db * sg.color.dot(c));
        out.position += (g_dir - dir * g_dir.dot(&dir)) / vn;
    }

    let alpha = proj.opacity;
    out.opacity_logit = sg.opacity * alpha * (1.0 - alpha);
    out
}
