use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Row-major interleaved RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(Self { width, height, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vector3<f64> {
        let o = (y * self.width + x) * 3;
        Vector3::new(self.data[o], self.data[o + 1], self.data[o + 2])
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: &Vector3<f64>) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(rgb.as_slice());
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Row-major single-channel depth map.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "depth data has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("depth map contains non-finite values"));
        }
        Ok(Self { width, height, data })
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &DepthMap) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel 3D points with confidences, as produced by a dense stereo model.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMap {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Vector3<f64>>,
    pub confidence: Vec<f64>,
    pub colors: Option<Vec<Vector3<f64>>>,
}

impl PointMap {
    pub fn new(width: usize, height: usize, points: Vec<Vector3<f64>>, confidence: Vec<f64>) -> Result<Self> {
        let map = Self {
            width,
            height,
            points,
            confidence,
            colors: None,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn with_colors(mut self, colors: Vec<Vector3<f64>>) -> Result<Self> {
        if colors.len() != self.width * self.height {
            return Err(Error::invalid("color grid does not match point map dimensions"));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.points.len() != n || self.confidence.len() != n {
            return Err(Error::invalid(format!(
                "point map {}x{} has {} points and {} confidences",
                self.width,
                self.height,
                self.points.len(),
                self.confidence.len()
            )));
        }
        if self.confidence.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("confidences must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Pixel coordinates `(i, j)` of a flat index.
    pub fn pixel_of(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn transformed(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> PointMap {
        PointMap {
            points: self.points.iter().map(f).collect(),
            ..self.clone()
        }
    }
}
