//! Real spherical harmonics up to degree 3, in the band ordering used by
//! common splatting checkpoints.
//!
//! Colors are the plain SH expansion `Σ_k c_k Y_k(d)`; there is no implicit
//! 0.5 offset, so a degree-0 coefficient `k` yields `k · Y₀₀`.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn degree_from_count(count: usize) -> Option<usize> {
    (0..=3).find(|&d| coeff_count(d) == count)
}

pub fn rgb_to_dc(rgb: &Vector3<f64>) -> Vector3<f64> {
    rgb / SH_C0
}

/// Basis values `Y_k(d)` for the first `out.len()` functions.
pub fn basis(d: &Vector3<f64>, out: &mut [f64]) {
    let (x, y, z) = (d.x, d.y, d.z);
    let n = out.len();
    out[0] = SH_C0;
    if n <= 1 {
        return;
    }
    out[1] = -SH_C1 * y;
    out[2] = SH_C1 * z;
    out[3] = -SH_C1 * x;
    if n <= 4 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[4] = SH_C2[0] * x * y;
    out[5] = SH_C2[1] * y * z;
    out[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    out[7] = SH_C2[3] * x * z;
    out[8] = SH_C2[4] * (xx - yy);
    if n <= 9 {
        return;
    }
    out[9] = SH_C3[0] * y * (3.0 * xx - yy);
    out[10] = SH_C3[1] * x * y * z;
    out[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    out[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    out[14] = SH_C3[5] * z * (xx - yy);
    out[15] = SH_C3[6] * x * (xx - 3.0 * yy);
}

/// Partial derivatives of each basis polynomial w.r.t. (x, y, z), treating
/// the components as independent.
pub fn basis_gradient(d: &Vector3<f64>, out: &mut [Vector3<f64>]) {
    let (x, y, z) = (d.x, d.y, d.z);
    let n = out.len();
    out[0] = Vector3::zeros();
    if n <= 1 {
        return;
    }
    out[1] = Vector3::new(0.0, -SH_C1, 0.0);
    out[2] = Vector3::new(0.0, 0.0, SH_C1);
    out[3] = Vector3::new(-SH_C1, 0.0, 0.0);
    if n <= 4 {
        return;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let c = SH_C2;
    out[4] = Vector3::new(c[0] * y, c[0] * x, 0.0);
    out[5] = Vector3::new(0.0, c[1] * z, c[1] * y);
    out[6] = Vector3::new(-2.0 * c[2] * x, -2.0 * c[2] * y, 4.0 * c[2] * z);
    out[7] = Vector3::new(c[3] * z, 0.0, c[3] * x);
    out[8] = Vector3::new(2.0 * c[4] * x, -2.0 * c[4] * y, 0.0);
    if n <= 9 {
        return;
    }
    let k = SH_C3;
    out[9] = Vector3::new(6.0 * k[0] * x * y, k[0] * (3.0 * xx - 3.0 * yy), 0.0);
    out[10] = Vector3::new(k[1] * y * z, k[1] * x * z, k[1] * x * y);
    out[11] = Vector3::new(-2.0 * k[2] * x * y, k[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * k[2] * y * z);
    out[12] = Vector3::new(-6.0 * k[3] * x * z, -6.0 * k[3] * y * z, k[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy));
    out[13] = Vector3::new(k[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * k[4] * x * y, 8.0 * k[4] * x * z);
    out[14] = Vector3::new(2.0 * k[5] * x * z, -2.0 * k[5] * y * z, k[5] * (xx - yy));
    out[15] = Vector3::new(k[6] * (3.0 * xx - 3.0 * yy), -6.0 * k[6] * x * y, 0.0);
}

/// Evaluates the RGB color seen along `direction`. No clamping.
pub fn sh_to_color(coeffs: &[Vector3<f64>], degree: usize, direction: &Vector3<f64>) -> Result<Vector3<f64>> {
    if degree > 3 || coeffs.len() != coeff_count(degree) {
        return Err(Error::invalid(format!(
            "{} SH coefficients do not match degree {degree}",
            coeffs.len()
        )));
    }
    Ok(eval_unchecked(coeffs, direction))
}

pub(crate) fn eval_unchecked(coeffs: &[Vector3<f64>], direction: &Vector3<f64>) -> Vector3<f64> {
    let mut y = [0.0; 16];
    let y = &mut y[..coeffs.len()];
    basis(direction, y);
    coeffs.iter().zip(y.iter()).fold(Vector3::zeros(), |acc, (c, b)| acc + c * *b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn degree_zero_is_constant() {
        let k = Vector3::new(0.3, -1.0, 2.0);
        for d in [Vector3::x(), -Vector3::y(), Vector3::new(1.0, 1.0, 1.0).normalize()] {
            let c = sh_to_color(&[k], 0, &d).unwrap();
            assert_relative_eq!(c, k * 0.282_094_791_77, epsilon = 1e-11);
        }
    }

    #[test]
    fn zero_coefficients_give_black() {
        let coeffs = vec![Vector3::zeros(); 16];
        let c = sh_to_color(&coeffs, 3, &Vector3::new(0.2, 0.3, -0.9).normalize()).unwrap();
        assert_eq!(c, Vector3::zeros());
    }

    #[test]
    fn band_one_is_odd() {
        let coeffs = vec![
            Vector3::new(1.0, 0.5, 0.2),
            Vector3::new(0.3, 0.1, -0.2),
            Vector3::new(-0.4, 0.2, 0.6),
            Vector3::new(0.1, -0.7, 0.25),
        ];
        let d = Vector3::new(0.3, -0.5, 0.81).normalize();
        let a = sh_to_color(&coeffs, 1, &d).unwrap();
        let b = sh_to_color(&coeffs, 1, &-d).unwrap();
        // Band-1 contribution evaluated directly from the real basis formulas.
        let band1 = coeffs[1] * (-SH_C1 * d.y) + coeffs[2] * (SH_C1 * d.z) + coeffs[3] * (-SH_C1 * d.x);
        assert_relative_eq!(a - b, band1 * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        assert!(sh_to_color(&[Vector3::zeros(); 3], 1, &Vector3::z()).is_err());
        assert!(sh_to_color(&[Vector3::zeros(); 25], 4, &Vector3::z()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = Vector3::new(0.31, -0.47, 0.62);
        let mut g = vec![Vector3::zeros(); 16];
        basis_gradient(&d, &mut g);
        let h = 1e-6;
        for axis in 0..3 {
            let mut dp = d;
            let mut dm = d;
            dp[axis] += h;
            dm[axis] -= h;
            let mut yp = [0.0; 16];
            let mut ym = [0.0; 16];
            basis(&dp, &mut yp);
            basis(&dm, &mut ym);
            for k in 0..16 {
                let fd = (yp[k] - ym[k]) / (2.0 * h);
                assert_relative_eq!(g[k][axis], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_on_sphere() {
        // Fibonacci-sphere quadrature of ∫ Y_a Y_b dΩ.
        let n = 20_000;
        let mut gram = [[0.0f64; 16]; 16];
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        for i in 0..n {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let d = Vector3::new(r * phi.cos(), r * phi.sin(), z);
            let mut y = [0.0; 16];
            basis(&d, &mut y);
            for a in 0..16 {
                for b in 0..16 {
                    gram[a][b] += y[a] * y[b] * 4.0 * std::f64::consts::PI / n as f64;
                }
            }
        }
        for a in 0..16 {
            for b in 0..16 {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] - expected).abs() < 1e-3, "({a},{b}) = {}", gram[a][b]);
            }
        }
    }
}
