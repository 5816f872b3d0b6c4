use std::collections::HashMap;
use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scene::{logit, sh, GaussianCloud, GaussianPrimitive, PointMap, DEFAULT_OPACITY};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 1.0;
const NEIGHBORS: usize = 3;
/// Used when a point has no neighbours at all, or only coincident ones.
const FALLBACK_SCALE: f64 = 1e-2;
const GRAY: Vector3<f64> = Vector3::new(0.5, 0.5, 0.5);

struct Seed {
    position: Vector3<f64>,
    color: Vector3<f64>,
}

fn confident_points(maps: &[PointMap], threshold: f64) -> Vec<Seed> {
    maps.iter()
        .flat_map(|m| {
            (0..m.len()).filter_map(move |i| {
                let p = m.points[i];
                (m.confidence[i] >= threshold && p.iter().all(|v| v.is_finite())).then(|| Seed {
                    position: p,
                    color: m.colors.as_ref().map_or(GRAY, |c| c[i]),
                })
            })
        })
        .collect()
}

/// Averages points sharing a voxel; voxels are emitted in first-seen order.
fn voxel_downsample(seeds: Vec<Seed>, voxel: f64) -> Vec<Seed> {
    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut acc: Vec<(Vector3<f64>, Vector3<f64>, f64)> = Vec::new();
    for s in seeds {
        let key = [0, 1, 2].map(|k| (s.position[k] / voxel).floor() as i64);
        let slot = *slots.entry(key).or_insert_with(|| {
            acc.push((Vector3::zeros(), Vector3::zeros(), 0.0));
            acc.len() - 1
        });
        acc[slot].0 += s.position;
        acc[slot].1 += s.color;
        acc[slot].2 += 1.0;
    }
    acc.into_iter()
        .map(|(p, c, n)| Seed {
            position: p / n,
            color: c / n,
        })
        .collect()
}

/// Mean distance to the three nearest other points.
fn neighbor_scales(positions: &[[f64; 3]]) -> Vec<f64> {
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(positions);
    let want = NonZero::new((NEIGHBORS + 1).min(positions.len())).expect("non-empty");
    positions
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let found = tree.nearest_n::<SquaredEuclidean>(q, want);
            let mut dists: Vec<f64> = Vec::with_capacity(NEIGHBORS);
            let mut skipped_self = false;
            for n in found {
                if !skipped_self && n.item as usize == i {
                    skipped_self = true;
                    continue;
                }
                dists.push(n.distance.sqrt());
            }
            dists.truncate(NEIGHBORS);
            let mean = dists.iter().sum::<f64>() / dists.len().max(1) as f64;
            if mean > 0.0 {
                mean
            } else {
                FALLBACK_SCALE
            }
        })
        .collect()
}

/// Seeds one isotropic primitive per confident (optionally voxel-merged) point.
/// `voxel_size = 0` keeps every point.
pub fn init_gaussians_from_points(
    maps: &[PointMap],
    confidence_threshold: f64,
    voxel_size: f64,
    sh_degree: usize,
) -> Result<GaussianCloud> {
    if !(voxel_size.is_finite() && voxel_size >= 0.0) {
        return Err(Error::invalid(format!("voxel size must be non-negative, got {voxel_size}")));
    }
    let mut seeds = confident_points(maps, confidence_threshold);
    if voxel_size > 0.0 {
        seeds = voxel_downsample(seeds, voxel_size);
    }
    if seeds.is_empty() {
        return Err(Error::EmptyCloud(format!(
            "no points reach confidence {confidence_threshold}"
        )));
    }
    let positions: Vec<[f64; 3]> = seeds.iter().map(|s| [s.position.x, s.position.y, s.position.z]).collect();
    let scales = neighbor_scales(&positions);
    let opacity_logit = logit(DEFAULT_OPACITY);
    let primitives = seeds
        .iter()
        .zip(scales)
        .map(|(s, scale)| {
            let mut sh_coeffs = vec![Vector3::zeros(); sh::coeff_count(sh_degree)];
            sh_coeffs[0] = sh::rgb_to_dc(&s.color);
            GaussianPrimitive {
                position: s.position,
                rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
                log_scales: Vector3::repeat(scale.ln()),
                opacity_logit,
                sh_coeffs,
            }
        })
        .collect();
    GaussianCloud::new(primitives, sh_degree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::sh_to_color;

    #[test]
    fn single_red_point() {
        let m = PointMap::new(1, 1, vec![Vector3::new(0.5, -1.0, 3.0)], vec![2.0])
            .unwrap()
            .with_colors(vec![Vector3::new(1.0, 0.0, 0.0)])
            .unwrap();
        let c = init_gaussians_from_points(&[m], 1.0, 0.0, 0).unwrap();
        assert_eq!(c.len(), 1);
        let p = &c.primitives[0];
        assert_eq!(p.position, Vector3::new(0.5, -1.0, 3.0));
        let rgb = sh_to_color(&p.sh_coeffs, 0, &Vector3::z()).unwrap();
        assert!((rgb - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((p.opacity() - DEFAULT_OPACITY).abs() < 1e-12);
    }

    #[test]
    fn nothing_confident() {
        let m = PointMap::new(2, 1, vec![Vector3::z(); 2], vec![0.5, 0.9]).unwrap();
        assert!(matches!(init_gaussians_from_points(&[m], 1.0, 0.0, 0), Err(Error::EmptyCloud(_))));
    }

    #[test]
    fn grid_spacing_sets_scale() {
        let h = 0.37;
        let pts: Vec<_> = (0..4 * 5 * 3)
            .map(|k| Vector3::new((k % 4) as f64, ((k / 4) % 5) as f64, (k / 20) as f64) * h)
            .collect();
        let m = PointMap::new(60, 1, pts, vec![1.0; 60]).unwrap();
        let c = init_gaussians_from_points(&[m], 1.0, 0.0, 1).unwrap();
        for p in &c.primitives {
            for s in p.log_scales.iter() {
                assert!((s - h.ln()).abs() < 1e-12, "{s} vs {}", h.ln());
            }
        }
    }

    #[test]
    fn voxel_merge() {
        let pts = vec![Vector3::new(0.1, 0.1, 0.1), Vector3::new(0.2, 0.2, 0.2), Vector3::new(1.5, 0.1, 0.1)];
        let m = PointMap::new(3, 1, pts, vec![1.0; 3]).unwrap();
        let c = init_gaussians_from_points(&[m], 1.0, 1.0, 0).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c.primitives[0].position - Vector3::repeat(0.15)).norm() < 1e-12);
    }
}
