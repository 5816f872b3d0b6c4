use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Orthonormal with determinant +1, within `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

/// Pinhole camera with a world-to-camera pose. Camera axes: x right, y down,
/// z forward. Pixel `(i, j)` is sampled at image coordinate `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub focal: f64,
    pub principal_point: Vector2<f64>,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform,
}

impl Camera {
    /// Camera with the principal point at the image center `(W/2, H/2)`.
    pub fn new(focal: f64, width: usize, height: usize, pose: RigidTransform) -> Result<Self> {
        let cam = Self {
            focal,
            principal_point: Vector2::new(width as f64 / 2.0, height as f64 / 2.0),
            width,
            height,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera placed at `eye` looking at `target`, with world `+y` as image-down.
    pub fn look_at(
        focal: f64,
        width: usize,
        height: usize,
        eye: &Vector3<f64>,
        target: &Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let down = Vector3::y();
        let right = down.cross(&forward);
        if right.norm() < 1e-9 {
            return Err(Error::invalid("look-at direction is parallel to the down axis"));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let pose = RigidTransform::new(rotation, -(rotation * eye));
        Self::new(focal, width, height, pose)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::invalid(format!("focal must be positive, got {}", self.focal)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera resolution must be at least 1x1"));
        }
        if !self.principal_point.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite principal point"));
        }
        if !self.pose.is_proper(1e-6) || !self.pose.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("camera pose rotation must be orthonormal with determinant +1"));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.pose.rotation.transpose() * self.pose.translation)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.apply(p)
    }

    /// Camera-frame point at depth `z` along the ray through pixel `(i, j)`.
    pub fn unproject(&self, i: f64, j: f64, z: f64) -> Vector3<f64> {
        Vector3::new(
            z * (i - self.principal_point.x) / self.focal,
            z * (j - self.principal_point.y) / self.focal,
            z,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}
