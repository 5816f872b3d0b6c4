//! Image quality metrics: PSNR and single-scale SSIM.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5), K₁ = 0.01, K₂ = 0.03 and a
//! data range of 1. Windows are evaluated over the valid region only (no
//! padding), per channel, and the channel means are averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::ImageBuffer;

pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    /// Set when the images are identical; `db` is then [`PSNR_CAP_DB`].
    pub exact_match: bool,
}

fn check_shapes(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_shapes(a, b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len() as f64)
}

/// `10·log10(1 / MSE)` with a peak value of 1.
pub fn psnr(image: &ImageBuffer, reference: &ImageBuffer) -> Result<Psnr> {
    let m = mse(image, reference)?;
    if m == 0.0 {
        return Ok(Psnr {
            db: PSNR_CAP_DB,
            exact_match: true,
        });
    }
    Ok(Psnr {
        db: (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB),
        exact_match: false,
    })
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-region separable correlation of a `w×h` plane with the window.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| taps[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a valid-region map back to `w×h`.
fn filter_valid_adjoint(map: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut cols = vec![0.0; ow * h];
    for y in 0..oh {
        for k in 0..SSIM_WINDOW {
            for x in 0..ow {
                cols[(y + k) * ow + x] += taps[k] * map[y * ow + x];
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = cols[y * ow + x];
            for k in 0..SSIM_WINDOW {
                out[y * w + x + k] += taps[k] * v;
            }
        }
    }
    out
}

/// Mean SSIM of one plane, and optionally its gradient w.r.t. `a`.
pub(crate) fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let taps = gaussian_window();
    let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, &taps);
    let mu_b = filter_valid(b, w, h, &taps);
    let e_aa = filter_valid(&sq(a), w, h, &taps);
    let e_bb = filter_valid(&sq(b), w, h, &taps);
    let e_ab = filter_valid(&ab, w, h, &taps);
    let count = mu_a.len() as f64;

    let mut total = 0.0;
    let (mut da, mut daa, mut dab) = if want_grad {
        (vec![0.0; mu_a.len()], vec![0.0; mu_a.len()], vec![0.0; mu_a.len()])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for q in 0..mu_a.len() {
        let (ma, mb) = (mu_a[q], mu_b[q]);
        let var_a = e_aa[q] - ma * ma;
        let var_b = e_bb[q] - mb * mb;
        let cov = e_ab[q] - ma * mb;
        let n1 = 2.0 * ma * mb + C1;
        let d1 = ma * ma + mb * mb + C1;
        let n2 = 2.0 * cov + C2;
        let d2 = var_a + var_b + C2;
        let s = n1 * n2 / (d1 * d2);
        total += s;
        if want_grad {
            let dd = d1 * d2;
            da[q] = (2.0 * mb * n2 - 2.0 * mb * n1) / dd - s * 2.0 * ma / d1 + s * 2.0 * ma / d2;
            daa[q] = -s / d2;
            dab[q] = 2.0 * n1 / dd;
            da[q] /= count;
            daa[q] /= count;
            dab[q] /= count;
        }
    }
    let mean = total / count;
    if !want_grad {
        return (mean, None);
    }
    let ga = filter_valid_adjoint(&da, w, h, &taps);
    let gaa = filter_valid_adjoint(&daa, w, h, &taps);
    let gab = filter_valid_adjoint(&dab, w, h, &taps);
    let grad = (0..a.len()).map(|p| ga[p] + 2.0 * a[p] * gaa[p] + b[p] * gab[p]).collect();
    (mean, Some(grad))
}

fn check_ssim_shapes(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    check_shapes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "image {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            a.width, a.height
        )));
    }
    Ok(())
}

pub fn ssim(image: &ImageBuffer, reference: &ImageBuffer) -> Result<f64> {
    check_ssim_shapes(image, reference)?;
    let (w, h) = (image.width, image.height);
    let total: f64 = (0..3)
        .map(|c| ssim_plane(&image.channel(c), &reference.channel(c), w, h, false).0)
        .sum();
    Ok(total / 3.0)
}

/// SSIM and its gradient w.r.t. `image` (interleaved RGB layout).
pub fn ssim_with_grad(image: &ImageBuffer, reference: &ImageBuffer) -> Result<(f64, Vec<f64>)> {
    check_ssim_shapes(image, reference)?;
    let (w, h) = (image.width, image.height);
    let mut grad = vec![0.0; image.data.len()];
    let mut total = 0.0;
    for c in 0..3 {
        let (s, g) = ssim_plane(&image.channel(c), &reference.channel(c), w, h, true);
        total += s;
        for (p, v) in g.expect("gradient requested").into_iter().enumerate() {
            grad[3 * p + c] = v / 3.0;
        }
    }
    Ok((total / 3.0, grad))
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub view: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub exact_match: bool,
}

pub fn score_view(view: impl Into<String>, image: &ImageBuffer, reference: &ImageBuffer) -> Result<ViewScore> {
    let p = psnr(image, reference)?;
    Ok(ViewScore {
        view: view.into(),
        psnr_db: p.db,
        ssim: ssim(image, reference)?,
        exact_match: p.exact_match,
    })
}
