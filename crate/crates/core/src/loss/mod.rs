//! Training objective: photometric loss plus patch-wise depth correlation and
//! a gradient-profile term on adaptively masked depth.
//!
//! ```text
//! L = L_rgb + λ_depth · L_depth + λ_gpp · L_gpp
//! ```
//!
//! The mask keeps reference-depth pixels at or below the quantile level
//! `s_f = q_b + μ/√(μ²+σ²)·Δq` of the reference depth, so distant background
//! is excluded from the gradient-profile term. No gradient flows through the
//! mask or the quantile.

mod depth;
mod gpp;
mod pearson;
mod rgb;

use serde::{Deserialize, Serialize};

pub use depth::{
    depth_correlation_loss, depth_correlation_loss_with_grad, depth_mask, depth_stats, dynamic_threshold, quantile,
    DepthStats,
};
pub use gpp::{gpp_loss, gpp_loss_with_grad};
pub use pearson::{pearson, VARIANCE_EPS};
pub use rgb::{rgb_loss, rgb_loss_with_grad};

use crate::error::{Error, Result};
use crate::scene::{DepthMap, ImageBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_depth: f64,
    pub lambda_gpp: f64,
    pub base_quantile: f64,
    pub quantile_range: f64,
    pub patch_size: usize,
    pub ssim_weight: f64,
    /// When false the gradient-profile term sees every pixel.
    pub use_depth_mask: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_depth: 0.05,
            lambda_gpp: 0.01,
            base_quantile: 0.90,
            quantile_range: 0.09,
            patch_size: 32,
            ssim_weight: 0.2,
            use_depth_mask: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights_ok = self.lambda_depth >= 0.0 && self.lambda_gpp >= 0.0 && (0.0..=1.0).contains(&self.ssim_weight);
        let quantiles_ok = self.base_quantile > 0.0
            && self.base_quantile < 1.0
            && self.quantile_range >= 0.0
            && self.base_quantile + self.quantile_range <= 1.0;
        if !weights_ok || !quantiles_ok || self.patch_size == 0 {
            return Err(Error::Config(format!("invalid loss config: {self:?}")));
        }
        Ok(())
    }
}

/// Loss value, its terms, and gradients w.r.t. the rendered color and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub total: f64,
    pub rgb: f64,
    pub depth: f64,
    pub gpp: f64,
    /// Quantile level used for the depth mask.
    pub mask_level: f64,
    pub mask: Vec<bool>,
    pub grad_color: Vec<f64>,
    pub grad_depth: Vec<f64>,
}

pub fn total_loss(
    image: &ImageBuffer,
    ref_image: &ImageBuffer,
    depth: &DepthMap,
    ref_depth: &DepthMap,
    config: &LossConfig,
) -> Result<TotalLoss> {
    config.validate()?;
    if depth.width != image.width || depth.height != image.height {
        return Err(Error::invalid("rendered depth and color sizes differ"));
    }
    let (rgb, grad_color) = rgb_loss_with_grad(image, ref_image, config.ssim_weight)?;

    let mut grad_depth = vec![0.0; depth.data.len()];
    let depth_term = if config.lambda_depth > 0.0 {
        let (l, g) = depth_correlation_loss_with_grad(depth, ref_depth, config.patch_size)?;
        for (acc, v) in grad_depth.iter_mut().zip(g) {
            *acc += config.lambda_depth * v;
        }
        l
    } else {
        0.0
    };

    let (mask_level, mask) = if config.use_depth_mask {
        let level = dynamic_threshold(&depth_stats(ref_depth)?, config.base_quantile, config.quantile_range);
        (level, depth_mask(ref_depth, level))
    } else {
        (1.0, vec![true; ref_depth.data.len()])
    };
    let gpp_term = if config.lambda_gpp > 0.0 {
        let (l, g) = gpp_loss_with_grad(depth, ref_depth, &mask)?;
        for (acc, v) in grad_depth.iter_mut().zip(g) {
            *acc += config.lambda_gpp * v;
        }
        l
    } else {
        0.0
    };

    Ok(TotalLoss {
        total: rgb + config.lambda_depth * depth_term + config.lambda_gpp * gpp_term,
        rgb,
        depth: depth_term,
        gpp: gpp_term,
        mask_level,
        mask,
        grad_color,
        grad_depth,
    })
}
