//! Gaussian primitives and the explicit scene they make up.
//!
//! Covariance is stored factored as a unit quaternion plus per-axis log
//! standard deviations, `Σ = R diag(exp(s))² Rᵀ`, so any unconstrained
//! parameter vector maps to a symmetric positive-definite matrix.

use nalgebra::{Matrix3, Vector3, Vector4};

use super::sh::{self, coeff_count};
use crate::error::{Error, Result};

pub const DEFAULT_OPACITY: f64 = 0.1;
pub const MAX_SH_DEGREE: usize = 3;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// A single anisotropic 3D Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub position: Vector3<f64>,
    /// Quaternion stored as (w, x, y, z).
    pub rotation: Vector4<f64>,
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    /// One RGB triple per SH basis function, in band order.
    pub sh_coeffs: Vec<Vector3<f64>>,
}

impl GaussianPrimitive {
    /// Isotropic primitive with identity rotation and a view-independent color.
    pub fn isotropic(position: Vector3<f64>, scale: f64, opacity: f64, rgb: Vector3<f64>, sh_degree: usize) -> Self {
        let mut sh_coeffs = vec![Vector3::zeros(); coeff_count(sh_degree)];
        sh_coeffs[0] = sh::rgb_to_dc(&rgb);
        Self {
            position,
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            log_scales: Vector3::repeat(scale.ln()),
            opacity_logit: logit(opacity),
            sh_coeffs,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scales(&self) -> Vector3<f64> {
        self.log_scales.map(f64::exp)
    }

    pub fn covariance(&self) -> Result<Matrix3<f64>> {
        covariance_from_params(&self.rotation, &self.log_scales)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.log_scales.iter().all(|v| v.is_finite())
            && self.opacity_logit.is_finite()
            && self.sh_coeffs.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn normalize_rotation(&mut self) {
        let n = self.rotation.norm();
        if n > 0.0 {
            self.rotation /= n;
        } else {
            self.rotation = Vector4::new(1.0, 0.0, 0.0, 0.0);
        }
    }
}

/// The scene: an ordered list of primitives sharing one SH degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub primitives: Vec<GaussianPrimitive>,
    pub sh_degree: usize,
}

impl GaussianCloud {
    pub fn new(primitives: Vec<GaussianPrimitive>, sh_degree: usize) -> Result<Self> {
        let cloud = Self { primitives, sh_degree };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::invalid(format!(
                "sh degree {} exceeds maximum {MAX_SH_DEGREE}",
                self.sh_degree
            )));
        }
        let k = coeff_count(self.sh_degree);
        for (i, p) in self.primitives.iter().enumerate() {
            if p.sh_coeffs.len() != k {
                return Err(Error::invalid(format!(
                    "primitive {i} has {} SH coefficients, degree {} needs {k}",
                    p.sh_coeffs.len(),
                    self.sh_degree
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.primitives.iter().all(GaussianPrimitive::is_finite)
    }
}

/// Rotation matrix of the quaternion (w, x, y, z) after normalization.
pub fn rotation_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let n = q / q.norm();
    unit_rotation_matrix(&n)
}

fn unit_rotation_matrix(n: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (n[0], n[1], n[2], n[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on `rotation_matrix(q)` back to the raw quaternion `q`,
/// including the normalization.
pub fn rotation_matrix_backward(q: &Vector4<f64>, grad_r: &Matrix3<f64>) -> Vector4<f64> {
    let norm = q.norm();
    let n = q / norm;
    let (w, x, y, z) = (n[0], n[1], n[2], n[3]);
    let g = |r: usize, c: usize| grad_r[(r, c)];
    let gw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let gy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let gz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let gn = Vector4::new(gw, gx, gy, gz);
    (gn - n * gn.dot(&n)) / norm
}

/// `Σ = R diag(exp(s))² Rᵀ`.
pub fn covariance_from_params(rotation: &Vector4<f64>, log_scales: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !rotation.iter().chain(log_scales.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite rotation or log-scale"));
    }
    let norm = rotation.norm();
    if norm == 0.0 {
        return Err(Error::invalid("zero quaternion"));
    }
    let r = rotation_matrix(rotation);
    let var = log_scales.map(|s| (2.0 * s).exp());
    Ok(r * Matrix3::from_diagonal(&var) * r.transpose())
}

/// Gradients of `covariance_from_params` w.r.t. (raw quaternion, log-scales),
/// given a gradient on Σ. The gradient is symmetrized first.
pub fn covariance_backward(
    rotation: &Vector4<f64>,
    log_scales: &Vector3<f64>,
    grad_cov: &Matrix3<f64>,
) -> (Vector4<f64>, Vector3<f64>) {
    let g = (grad_cov + grad_cov.transpose()) * 0.5;
    let r = rotation_matrix(rotation);
    let var = log_scales.map(|s| (2.0 * s).exp());
    let m = r.transpose() * g * r;
    let grad_log_scales = Vector3::new(2.0 * var.x * m[(0, 0)], 2.0 * var.y * m[(1, 1)], 2.0 * var.z * m[(2, 2)]);
    let grad_r = 2.0 * g * r * Matrix3::from_diagonal(&var);
    (rotation_matrix_backward(rotation, &grad_r), grad_log_scales)
}

/// `exp(-½ (p-μ)ᵀ Σ⁻¹ (p-μ))`.
pub fn evaluate_gaussian(primitive: &GaussianPrimitive, p: &Vector3<f64>) -> Result<f64> {
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("non-finite evaluation point"));
    }
    let cov = primitive.covariance()?;
    let d = p - primitive.position;
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
    let maha = d.dot(&chol.solve(&d));
    Ok((-0.5 * maha).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_4, LN_2};

    fn z_rotation(angle: f64) -> Vector4<f64> {
        Vector4::new((angle / 2.0).cos(), 0.0, 0.0, (angle / 2.0).sin())
    }

    #[test]
    fn identity_covariance() {
        let cov = covariance_from_params(&Vector4::new(1.0, 0.0, 0.0, 0.0), &Vector3::zeros()).unwrap();
        assert_relative_eq!(cov, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn axis_aligned_scale() {
        let cov = covariance_from_params(&Vector4::new(1.0, 0.0, 0.0, 0.0), &Vector3::new(LN_2, 0.0, 0.0)).unwrap();
        assert_relative_eq!(cov, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)), epsilon = 1e-14);
    }

    #[test]
    fn rotated_scale_matches_general_composition() {
        let q = z_rotation(2.0 * FRAC_PI_4);
        let cov = covariance_from_params(&q, &Vector3::new(LN_2, 0.0, 0.0)).unwrap();
        // R·S·Sᵀ·Rᵀ via nalgebra's own rotation type.
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let s = Matrix3::from_diagonal(&Vector3::new(2.0, 1.0, 1.0));
        let expected = rot.matrix() * s * s.transpose() * rot.matrix().transpose();
        assert_relative_eq!(cov, expected, epsilon = 1e-14);
        assert_relative_eq!(cov, Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0)), epsilon = 1e-14);
    }

    #[test]
    fn non_finite_params_rejected() {
        let err = covariance_from_params(&Vector4::new(f64::NAN, 0.0, 0.0, 0.0), &Vector3::zeros());
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
        let err = covariance_from_params(&Vector4::new(1.0, 0.0, 0.0, 0.0), &Vector3::new(0.0, f64::INFINITY, 0.0));
        assert!(err.is_err());
    }

    #[test]
    fn gaussian_values() {
        let mut g = GaussianPrimitive::isotropic(Vector3::new(1.0, 2.0, 3.0), 1.0, 0.5, Vector3::zeros(), 0);
        assert_eq!(evaluate_gaussian(&g, &g.position.clone()).unwrap(), 1.0);
        let p = g.position + Vector3::new(0.0, 1.0, 0.0);
        assert_relative_eq!(evaluate_gaussian(&g, &p).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);

        g.log_scales = Vector3::new(LN_2, 0.0, 0.0);
        let p = g.position + Vector3::new(2.0, 0.0, 0.0);
        let cov = g.covariance().unwrap();
        let d = Vector3::new(2.0, 0.0, 0.0);
        let quad = d.dot(&(cov.try_inverse().unwrap() * d));
        assert_relative_eq!(evaluate_gaussian(&g, &p).unwrap(), (-0.5 * quad).exp(), epsilon = 1e-14);
        assert_relative_eq!(evaluate_gaussian(&g, &p).unwrap(), (-0.5f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn gaussian_decreases_along_ray() {
        let mut g = GaussianPrimitive::isotropic(Vector3::zeros(), 0.7, 0.5, Vector3::zeros(), 0);
        g.rotation = Vector4::new(0.9, 0.1, -0.3, 0.2).normalize();
        g.log_scales = Vector3::new(0.1, -0.5, 0.4);
        let dir = Vector3::new(0.3, -0.8, 0.5).normalize();
        let mut last = 1.0;
        for k in 1..50 {
            let v = evaluate_gaussian(&g, &(dir * k as f64 * 0.05)).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn covariance_backward_matches_finite_differences() {
        let q = Vector4::new(0.8, -0.2, 0.4, 0.3);
        let s = Vector3::new(0.2, -0.3, 0.5);
        let w = Matrix3::new(0.3, -1.2, 0.5, 0.7, 0.1, -0.4, 0.9, 0.2, -0.6);
        let loss = |q: &Vector4<f64>, s: &Vector3<f64>| covariance_from_params(q, s).unwrap().component_mul(&w).sum();
        let (gq, gs) = covariance_backward(&q, &s, &w);
        let h = 1e-6;
        for i in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let fd = (loss(&qp, &s) - loss(&qm, &s)) / (2.0 * h);
            assert_relative_eq!(gq[i], fd, epsilon = 1e-7, max_relative = 1e-6);
        }
        for i in 0..3 {
            let mut sp = s;
            let mut sm = s;
            sp[i] += h;
            sm[i] -= h;
            let fd = (loss(&q, &sp) - loss(&q, &sm)) / (2.0 * h);
            assert_relative_eq!(gs[i], fd, epsilon = 1e-7, max_relative = 1e-6);
        }
    }

    #[test]
    fn sh_count_mismatch_rejected() {
        let mut p = GaussianPrimitive::isotropic(Vector3::zeros(), 1.0, 0.5, Vector3::zeros(), 1);
        p.sh_coeffs.pop();
        assert!(GaussianCloud::new(vec![p], 1).is_err());
    }
}
