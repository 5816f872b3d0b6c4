//! Flat views of the optimizable parameters of a cloud, grouped the way the
//! optimizer assigns learning rates.

use nalgebra::{Vector3, Vector4};

use super::{sh::coeff_count, GaussianCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Position,
    Rotation,
    LogScales,
    Opacity,
    Sh,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::Position,
        ParamGroup::Rotation,
        ParamGroup::LogScales,
        ParamGroup::Opacity,
        ParamGroup::Sh,
    ];

    /// Scalars per primitive in this group.
    pub fn width(self, sh_degree: usize) -> usize {
        match self {
            ParamGroup::Position | ParamGroup::LogScales => 3,
            ParamGroup::Rotation => 4,
            ParamGroup::Opacity => 1,
            ParamGroup::Sh => 3 * coeff_count(sh_degree),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::Rotation => "rotation",
            ParamGroup::LogScales => "log_scales",
            ParamGroup::Opacity => "opacity",
            ParamGroup::Sh => "sh",
        }
    }
}

/// Gradient of a scalar w.r.t. every parameter of one primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveGradient {
    pub position: Vector3<f64>,
    pub rotation: Vector4<f64>,
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    pub sh_coeffs: Vec<Vector3<f64>>,
}

impl PrimitiveGradient {
    pub fn zeros(sh_degree: usize) -> Self {
        Self {
            position: Vector3::zeros(),
            rotation: Vector4::zeros(),
            log_scales: Vector3::zeros(),
            opacity_logit: 0.0,
            sh_coeffs: vec![Vector3::zeros(); coeff_count(sh_degree)],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.position == Vector3::zeros()
            && self.rotation == Vector4::zeros()
            && self.log_scales == Vector3::zeros()
            && self.opacity_logit == 0.0
            && self.sh_coeffs.iter().all(|c| *c == Vector3::zeros())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudGradients {
    pub sh_degree: usize,
    pub primitives: Vec<PrimitiveGradient>,
}

impl CloudGradients {
    pub fn zeros_like(cloud: &GaussianCloud) -> Self {
        Self {
            sh_degree: cloud.sh_degree,
            primitives: vec![PrimitiveGradient::zeros(cloud.sh_degree); cloud.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL.iter().all(|&g| self.gather(g).iter().all(|v| v.is_finite()))
    }

    /// Concatenation of one group over all primitives.
    pub fn gather(&self, group: ParamGroup) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.primitives.len() * group.width(self.sh_degree));
        for g in &self.primitives {
            match group {
                ParamGroup::Position => out.extend_from_slice(g.position.as_slice()),
                ParamGroup::Rotation => out.extend_from_slice(g.rotation.as_slice()),
                ParamGroup::LogScales => out.extend_from_slice(g.log_scales.as_slice()),
                ParamGroup::Opacity => out.push(g.opacity_logit),
                ParamGroup::Sh => g.sh_coeffs.iter().for_each(|c| out.extend_from_slice(c.as_slice())),
            }
        }
        out
    }

    /// All gradients in `GaussianCloud::flat_params` order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.primitives {
            out.extend_from_slice(g.position.as_slice());
            out.extend_from_slice(g.rotation.as_slice());
            out.extend_from_slice(g.log_scales.as_slice());
            out.push(g.opacity_logit);
            g.sh_coeffs.iter().for_each(|c| out.extend_from_slice(c.as_slice()));
        }
        out
    }
}

impl GaussianCloud {
    pub fn params_per_primitive(&self) -> usize {
        ParamGroup::ALL.iter().map(|g| g.width(self.sh_degree)).sum()
    }

    pub fn gather(&self, group: ParamGroup) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * group.width(self.sh_degree));
        for p in &self.primitives {
            match group {
                ParamGroup::Position => out.extend_from_slice(p.position.as_slice()),
                ParamGroup::Rotation => out.extend_from_slice(p.rotation.as_slice()),
                ParamGroup::LogScales => out.extend_from_slice(p.log_scales.as_slice()),
                ParamGroup::Opacity => out.push(p.opacity_logit),
                ParamGroup::Sh => p.sh_coeffs.iter().for_each(|c| out.extend_from_slice(c.as_slice())),
            }
        }
        out
    }

    /// Inverse of [`GaussianCloud::gather`]. `values` must have the gathered length.
    pub fn scatter(&mut self, group: ParamGroup, values: &[f64]) {
        let w = group.width(self.sh_degree);
        assert_eq!(values.len(), w * self.len(), "scatter length mismatch");
        for (p, v) in self.primitives.iter_mut().zip(values.chunks_exact(w)) {
            match group {
                ParamGroup::Position => p.position.copy_from_slice(v),
                ParamGroup::Rotation => p.rotation.copy_from_slice(v),
                ParamGroup::LogScales => p.log_scales.copy_from_slice(v),
                ParamGroup::Opacity => p.opacity_logit = v[0],
                ParamGroup::Sh => {
                    for (c, chunk) in p.sh_coeffs.iter_mut().zip(v.chunks_exact(3)) {
                        c.copy_from_slice(chunk);
                    }
                }
            }
        }
    }

    /// Mutable access to scalar parameter `k` of primitive `i`, in the order
    /// position, rotation (w,x,y,z), log-scales, opacity logit, SH (coefficient-major, RGB).
    pub fn param_mut(&mut self, i: usize, k: usize) -> &mut f64 {
        let p = &mut self.primitives[i];
        match k {
            0..=2 => &mut p.position[k],
            3..=6 => &mut p.rotation[k - 3],
            7..=9 => &mut p.log_scales[k - 7],
            10 => &mut p.opacity_logit,
            _ => {
                let s = k - 11;
                &mut p.sh_coeffs[s / 3][s % 3]
            }
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.primitives {
            out.extend_from_slice(p.position.as_slice());
            out.extend_from_slice(p.rotation.as_slice());
            out.extend_from_slice(p.log_scales.as_slice());
            out.push(p.opacity_logit);
            p.sh_coeffs.iter().for_each(|c| out.extend_from_slice(c.as_slice()));
        }
        out
    }
}
