//! Differentiable tile-based software rasterizer for Gaussian scenes.
//!
//! Pixels are composited front to back over primitives sorted by camera-frame
//! depth. Color and depth share the same compositing weights, so the depth
//! map is the raw weighted sum of per-primitive view depths (no alpha
//! normalization).

mod backward;
mod forward;
mod project;

use serde::{Deserialize, Serialize};

pub use backward::render_backward;
pub use forward::{render, RenderOutput};
pub use project::{apply_3d_smoothing_filter, project_gaussian, ProjectedGaussian};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    /// Screen-space dilation added to every 2D covariance, in px².
    pub low_pass: f64,
    /// Primitives with camera-frame depth at or below this are culled.
    pub z_near: f64,
    /// Scale of the depth-dependent 3D smoothing filter; 0 disables it.
    pub smoothing_scale: f64,
    /// Footprint cutoff as a Mahalanobis radius in standard deviations. The
    /// footprint is offset by its value at the cutoff so it falls to zero there.
    pub cutoff_sigma: f64,
    /// Compositing stops once transmittance falls below this.
    pub min_transmittance: f64,
    pub tile_size: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            low_pass: 0.3,
            z_near: 0.01,
            smoothing_scale: 0.2,
            cutoff_sigma: 6.0,
            min_transmittance: 1e-4,
            tile_size: 16,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.low_pass >= 0.0
            && self.z_near >= 0.0
            && self.smoothing_scale >= 0.0
            && self.cutoff_sigma > 0.0
            && (0.0..1.0).contains(&self.min_transmittance)
            && self.tile_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid render settings: {self:?}")))
        }
    }
}
