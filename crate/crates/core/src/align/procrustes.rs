use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scene::RigidTransform;

/// `x ↦ scale·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Rigid part in target units: `x ↦ R·x + t/scale`.
    pub fn rigid(&self) -> RigidTransform {
        RigidTransform::new(self.rotation, self.translation / self.scale)
    }
}

/// Weighted least-squares similarity taking `src` onto `dst` (Umeyama).
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], weights: &[f64]) -> Result<Similarity> {
    if src.len() != dst.len() || src.len() != weights.len() {
        return Err(Error::invalid("correspondence lists differ in length"));
    }
    let total: f64 = weights.iter().sum();
    if src.len() < 3 || !(total > 0.0) {
        return Err(Error::InsufficientData("need three weighted correspondences".into()));
    }
    let mut mu_s = Vector3::zeros();
    let mut mu_d = Vector3::zeros();
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        mu_s += *w * s;
        mu_d += *w * d;
    }
    mu_s /= total;
    mu_d /= total;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for ((s, d), w) in src.iter().zip(dst).zip(weights) {
        let (cs, cd) = (s - mu_s, d - mu_d);
        cov += *w * cd * cs.transpose();
        var_s += *w * cs.norm_squared();
    }
    cov /= total;
    var_s /= total;
    if !(var_s > 0.0) {
        return Err(Error::EstimationFailed("source points are coincident".into()));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut sign = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let rotation = u * sign * v_t;
    let scale = (Matrix3::from_diagonal(&svd.singular_values) * sign).trace() / var_s;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::EstimationFailed(format!("degenerate similarity scale {scale}")));
    }
    Ok(Similarity {
        scale,
        rotation,
        translation: mu_d - scale * rotation * mu_s,
    })
}
