use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::RenderSettings;
use crate::scene::{sh, Camera, GaussianPrimitive};

/// A primitive after perspective projection into one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian {
    /// Index of the source primitive in its cloud.
    pub index: usize,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d` as (xx, xy, yy).
    pub conic: [f64; 3],
    pub view_depth: f64,
    pub rgb: Vector3<f64>,
    pub opacity: f64,
    /// Half-extent in pixels of a square that contains the whole footprint.
    pub radius: f64,
}

impl ProjectedGaussian {
    /// Squared Mahalanobis distance of pixel coordinate `(px, py)` from the mean.
    #[inline]
    pub fn mahalanobis_sq(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean2d.x;
        let dy = py - self.mean2d.y;
        self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy
    }
}

/// `Σ̂ = Σ + (scale · depth / focal)² I`.
pub fn apply_3d_smoothing_filter(cov: &Matrix3<f64>, view_depth: f64, focal: f64, scale: f64) -> Matrix3<f64> {
    let s = scale * view_depth / focal;
    cov + Matrix3::identity() * (s * s)
}

/// Perspective Jacobian of `(f x/z, f y/z)` at camera-frame point `t`.
pub(crate) fn perspective_jacobian(t: &Vector3<f64>, focal: f64) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        focal * iz,
        0.0,
        -focal * t.x * iz * iz,
        0.0,
        focal * iz,
        -focal * t.y * iz * iz,
    )
}

/// EWA projection. Returns `None` when the primitive lies at or behind the near plane.
pub fn project_gaussian(
    index: usize,
    primitive: &GaussianPrimitive,
    camera: &Camera,
    settings: &RenderSettings,
) -> Option<ProjectedGaussian> {
    let t = camera.world_to_camera(&primitive.position);
    if !(t.z > settings.z_near) {
        return None;
    }
    let cov = primitive.covariance().ok()?;
    let cov = apply_3d_smoothing_filter(&cov, t.z, camera.focal, settings.smoothing_scale);
    let w = &camera.pose.rotation;
    let j = perspective_jacobian(&t, camera.focal);
    let cov2d = j * w * cov * w.transpose() * j.transpose() + Matrix2::identity() * settings.low_pass;
    let (a, b, c) = (cov2d[(0, 0)], 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]), cov2d[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let conic = [c / det, -b / det, a / det];
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = settings.cutoff_sigma * lambda_max.sqrt();

    let mean2d = Vector2::new(
        camera.focal * t.x / t.z + camera.principal_point.x,
        camera.focal * t.y / t.z + camera.principal_point.y,
    );
    let dir = (primitive.position - camera.center()).normalize();
    let rgb = sh::eval_unchecked(&primitive.sh_coeffs, &dir);
    Some(ProjectedGaussian {
        index,
        mean2d,
        cov2d: Matrix2::new(a, b, b, c),
        conic,
        view_depth: t.z,
        rgb,
        opacity: primitive.opacity(),
        radius,
    })
}
