//! Focal length from a dense point map under a centered pinhole model.
//!
//! For each valid pixel the projection residual is
//! `(i − W/2, j − H/2) − f·(x/z, y/z)`. The confidence-weighted sum of residual
//! norms is minimized over `f` by Weiszfeld-style reweighting.

use crate::error::{Error, Result};
use crate::scene::PointMap;

pub const MIN_VALID_PIXELS: usize = 10;
const WEIGHT_EPS: f64 = 1e-8;
const REL_TOL: f64 = 1e-6;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalEstimate {
    pub focal: f64,
    /// Reweighting iterations performed after the least-squares start.
    pub iterations: usize,
    pub valid_pixels: usize,
}

struct Sample {
    u: [f64; 2],
    a: [f64; 2],
    conf: f64,
}

fn samples(map: &PointMap) -> Vec<Sample> {
    let (cx, cy) = (map.width as f64 / 2.0, map.height as f64 / 2.0);
    map.points
        .iter()
        .zip(&map.confidence)
        .enumerate()
        .filter(|(_, (p, c))| **c > 0.0 && p.z > 0.0 && p.iter().all(|v| v.is_finite()))
        .map(|(k, (p, c))| {
            let (i, j) = map.pixel_of(k);
            Sample {
                u: [i as f64 - cx, j as f64 - cy],
                a: [p.x / p.z, p.y / p.z],
                conf: *c,
            }
        })
        .collect()
}

/// `argmin_f Σ w·‖u − f·a‖²`.
fn weighted_fit<'a>(samples: &'a [Sample], weight: impl Fn(&'a Sample) -> f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for s in samples {
        let w = weight(s);
        num += w * (s.a[0] * s.u[0] + s.a[1] * s.u[1]);
        den += w * (s.a[0] * s.a[0] + s.a[1] * s.a[1]);
    }
    num / den
}

fn residual(s: &Sample, f: f64) -> f64 {
    (s.u[0] - f * s.a[0]).hypot(s.u[1] - f * s.a[1])
}

pub fn estimate_focal_detailed(map: &PointMap) -> Result<FocalEstimate> {
    map.validate()?;
    let samples = samples(map);
    if samples.len() < MIN_VALID_PIXELS {
        return Err(Error::InsufficientData(format!(
            "{} valid pixels, need at least {MIN_VALID_PIXELS}",
            samples.len()
        )));
    }
    let check = |f: f64| {
        if f.is_finite() && f > 0.0 {
            Ok(f)
        } else {
            Err(Error::EstimationFailed(format!("focal iterate left the positive reals: {f}")))
        }
    };
    let mut f = check(weighted_fit(&samples, |s| s.conf))?;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if samples.iter().all(|s| residual(s, f) == 0.0) {
            break;
        }
        let next = check(weighted_fit(&samples, |s| s.conf / (residual(s, f) + WEIGHT_EPS)))?;
        let converged = ((next - f) / f).abs() < REL_TOL;
        f = next;
        if converged {
            break;
        }
    }
    Ok(FocalEstimate {
        focal: f,
        iterations,
        valid_pixels: samples.len(),
    })
}

pub fn estimate_focal(map: &PointMap) -> Result<f64> {
    estimate_focal_detailed(map).map(|e| e.focal)
}

pub fn average_focal(focals: &[f64]) -> Result<f64> {
    if focals.is_empty() {
        return Err(Error::invalid("no focal lengths to average"));
    }
    if focals.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::invalid("focal lengths must be positive"));
    }
    Ok(focals.iter().sum::<f64>() / focals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pinhole_map(f: f64, w: usize, h: usize, seed: u64) -> PointMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..w * h)
            .map(|k| {
                let (i, j) = ((k % w) as f64 - w as f64 / 2.0, (k / w) as f64 - h as f64 / 2.0);
                let z = rng.random_range(1.0..10.0);
                Vector3::new(z * i / f, z * j / f, z)
            })
            .collect();
        PointMap::new(w, h, points, vec![1.0; w * h]).unwrap()
    }

    #[test]
    fn exact_map_at_fixed_point() {
        let m = pinhole_map(250.0, 32, 24, 1);
        let e = estimate_focal_detailed(&m).unwrap();
        assert!((e.focal - 250.0).abs() / 250.0 < 1e-9);
        assert!(e.iterations <= 2, "{e:?}");
    }

    #[test]
    fn scale_invariance() {
        let m = pinhole_map(180.0, 20, 16, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Perturbed so the estimate is not trivially exact.
        let noisy = PointMap {
            points: m.points.iter().map(|p| p + Vector3::new(rng.random_range(-0.01..0.01), 0.0, 0.0)).collect(),
            ..m.clone()
        };
        let f = estimate_focal(&noisy).unwrap();
        for s in [0.01, 0.5, 3.0, 1000.0] {
            let scaled = noisy.transformed(|p| p * s);
            let fs = estimate_focal(&scaled).unwrap();
            assert!((fs - f).abs() / f < 1e-10, "s = {s}: {fs} vs {f}");
        }
    }

    #[test]
    fn too_few_pixels() {
        let mut m = pinhole_map(100.0, 4, 4, 4);
        for c in m.confidence.iter_mut().skip(9) {
            *c = 0.0;
        }
        assert!(matches!(estimate_focal(&m), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn averaging() {
        assert_eq!(average_focal(&[250.0]).unwrap(), 250.0);
        assert_eq!(average_focal(&[200.0, 300.0]).unwrap(), 250.0);
        assert!(average_focal(&[]).is_err());
    }
}
