//! Patch-wise depth correlation and the adaptive far-depth mask.

use super::pearson::pair_moments;
use crate::error::{Error, Result};
use crate::scene::DepthMap;

/// Edge patches smaller than this are skipped.
const MIN_PATCH_PIXELS: usize = 4;

fn check_same(a: &DepthMap, b: &DepthMap) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "depth maps differ in size: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Non-overlapping `patch_size²` tiles as flat index lists.
fn patches(width: usize, height: usize, patch_size: usize) -> impl Iterator<Item = Vec<usize>> {
    let ps = patch_size.max(1);
    (0..height).step_by(ps).flat_map(move |y0| {
        (0..width).step_by(ps).filter_map(move |x0| {
            let idx: Vec<usize> = (y0..(y0 + ps).min(height))
                .flat_map(|y| (x0..(x0 + ps).min(width)).map(move |x| y * width + x))
                .collect();
            (idx.len() >= MIN_PATCH_PIXELS).then_some(idx)
        })
    })
}

/// `(1/N) Σ (1 − PCC(D_patch, D̂_patch))` over patches where both sides vary,
/// with the gradient w.r.t. `rendered`.
pub fn depth_correlation_loss_with_grad(
    rendered: &DepthMap,
    reference: &DepthMap,
    patch_size: usize,
) -> Result<(f64, Vec<f64>)> {
    check_same(rendered, reference)?;
    if patch_size == 0 {
        return Err(Error::invalid("patch size must be positive"));
    }
    let mut grad = vec![0.0; rendered.data.len()];
    let mut total = 0.0;
    let mut used = 0usize;
    for idx in patches(rendered.width, rendered.height, patch_size) {
        let a = idx.iter().map(|&i| rendered.data[i]);
        let b = idx.iter().map(|&i| reference.data[i]);
        let m = pair_moments(a, b);
        let Some(pcc) = m.correlation() else { continue };
        total += 1.0 - pcc;
        used += 1;
        let n = idx.len() as f64;
        let (sa, sb) = (m.var_a.sqrt(), m.var_b.sqrt());
        for &i in &idx {
            let da = rendered.data[i] - m.mean_a;
            let db = reference.data[i] - m.mean_b;
            // ∂PCC/∂a_i = (b_i − μ_b)/(n σ_a σ_b) − PCC (a_i − μ_a)/(n σ_a²)
            grad[i] -= db / (n * sa * sb) - pcc * da / (n * m.var_a);
        }
    }
    if used == 0 {
        return Err(Error::UndefinedLoss(
            "no depth patch has non-zero variance in both maps".into(),
        ));
    }
    let nf = used as f64;
    grad.iter_mut().for_each(|g| *g /= nf);
    Ok((total / nf, grad))
}

pub fn depth_correlation_loss(rendered: &DepthMap, reference: &DepthMap, patch_size: usize) -> Result<f64> {
    depth_correlation_loss_with_grad(rendered, reference, patch_size).map(|(l, _)| l)
}

/// Population mean and standard deviation of a depth map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthStats {
    pub mean: f64,
    pub stddev: f64,
}

pub fn depth_stats(depth: &DepthMap) -> Result<DepthStats> {
    if depth.data.is_empty() {
        return Err(Error::invalid("depth map is empty"));
    }
    let n = depth.data.len() as f64;
    let mean = depth.data.iter().sum::<f64>() / n;
    let var = depth.data.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(DepthStats {
        mean,
        stddev: var.sqrt(),
    })
}

/// Quantile level `s_f = q_b + μ/√(μ² + σ²) · Δq`, clamped to `(0, 1]`.
/// The ratio is taken as 0 when `μ = σ = 0`.
pub fn dynamic_threshold(stats: &DepthStats, base_quantile: f64, quantile_range: f64) -> f64 {
    let ratio = if stats.mean <= 0.0 {
        if stats.stddev == 0.0 {
            0.0
        } else {
            0.0_f64.max(stats.mean / stats.mean.hypot(stats.stddev))
        }
    } else {
        // Written as a chain of monotone operations so the result is
        // monotone in μ and σ under floating-point rounding as well.
        let r = stats.stddev / stats.mean;
        1.0 / (1.0 + r * r).sqrt()
    };
    let s = base_quantile + ratio * quantile_range;
    s.min(1.0).max(f64::MIN_POSITIVE)
}

/// Linear-interpolation quantile of a non-empty sample at `level ∈ [0, 1]`.
pub fn quantile(values: &[f64], level: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = level.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - lo as f64;
    (v[lo] + frac * (v[hi] - v[lo])).clamp(v[lo], v[hi])
}

/// Keeps pixels at or below the `level` depth quantile.
pub fn depth_mask(depth: &DepthMap, level: f64) -> Vec<bool> {
    if depth.data.is_empty() {
        return Vec::new();
    }
    let thr = quantile(&depth.data, level);
    depth.data.iter().map(|&d| d <= thr).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(seed: u64, w: usize, h: usize) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DepthMap::from_data(w, h, (0..w * h).map(|_| rng.random_range(1.0..6.0)).collect()).unwrap()
    }

    #[test]
    fn correlation_loss_identities() {
        let d = random_map(1, 20, 12);
        assert!(depth_correlation_loss(&d, &d, 8).unwrap().abs() < 1e-12);
        let aff = DepthMap::from_data(20, 12, d.data.iter().map(|v| 2.5 * v + 4.0).collect()).unwrap();
        assert!(depth_correlation_loss(&aff, &d, 8).unwrap().abs() < 1e-12);
        let neg = DepthMap::from_data(20, 12, d.data.iter().map(|v| -v).collect()).unwrap();
        assert_relative_eq!(depth_correlation_loss(&neg, &d, 8).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_patches_and_flat_patches() {
        // 10x10 with patch 8: 8x8, 2x8, 8x2 and 2x2 patches; all ≥ 4 px.
        assert_eq!(patches(10, 10, 8).count(), 4);
        // 9x9: the 1x1 corner is dropped, the 1x8 and 8x1 strips are kept.
        assert_eq!(patches(9, 9, 8).count(), 3);
        let flat = DepthMap::from_data(4, 4, vec![3.0; 16]).unwrap();
        let d = random_map(2, 4, 4);
        assert!(matches!(
            depth_correlation_loss(&flat, &d, 4),
            Err(Error::UndefinedLoss(_))
        ));
    }

    #[test]
    fn correlation_gradient_matches_finite_differences() {
        let d = random_map(3, 11, 9);
        let r = random_map(4, 11, 9);
        let (_, g) = depth_correlation_loss_with_grad(&d, &r, 4).unwrap();
        let h = 1e-6;
        for i in 0..d.data.len() {
            let mut p = d.clone();
            let mut m = d.clone();
            p.data[i] += h;
            m.data[i] -= h;
            let fd = (depth_correlation_loss(&p, &r, 4).unwrap() - depth_correlation_loss(&m, &r, 4).unwrap()) / (2.0 * h);
            assert_relative_eq!(g[i], fd, epsilon = 1e-8, max_relative = 1e-5);
        }
    }

    #[test]
    fn stats_examples() {
        let c = DepthMap::from_data(3, 2, vec![5.0; 6]).unwrap();
        let s = depth_stats(&c).unwrap();
        assert_eq!((s.mean, s.stddev), (5.0, 0.0));
        let two = DepthMap::from_data(2, 1, vec![0.0, 10.0]).unwrap();
        let s = depth_stats(&two).unwrap();
        assert_eq!((s.mean, s.stddev), (5.0, 5.0));
        assert!(depth_stats(&DepthMap::zeros(0, 0)).is_err());
    }

    #[test]
    fn threshold_examples() {
        let (qb, dq) = (0.9, 0.09);
        let s = dynamic_threshold(&DepthStats { mean: 4.0, stddev: 0.0 }, qb, dq);
        assert_eq!(s, qb + dq);
        let s = dynamic_threshold(&DepthStats { mean: 2.0, stddev: 2.0 }, qb, dq);
        assert_relative_eq!(s, qb + dq / 2f64.sqrt(), epsilon = 1e-15);
        let s = dynamic_threshold(&DepthStats { mean: 3.0, stddev: 4.0 }, qb, dq);
        assert_relative_eq!(s, qb + 0.6 * dq, epsilon = 1e-15);
        let s = dynamic_threshold(&DepthStats { mean: 0.0, stddev: 0.0 }, qb, dq);
        assert_eq!(s, qb);
        assert_eq!(dynamic_threshold(&DepthStats { mean: 1.0, stddev: 0.0 }, 0.95, 0.2), 1.0);
    }

    #[test]
    fn mask_examples() {
        let d = DepthMap::from_data(10, 10, (1..=100).map(f64::from).collect()).unwrap();
        assert!(depth_mask(&d, 1.0).iter().all(|&m| m));
        let m = depth_mask(&d, 0.9);
        // Sort-based oracle: the 90 smallest values survive.
        let mut sorted = d.data.clone();
        sorted.sort_by(f64::total_cmp);
        let cut = sorted[89];
        for (v, keep) in d.data.iter().zip(&m) {
            assert_eq!(*keep, *v <= cut);
        }
        assert_eq!(m.iter().filter(|&&k| !k).count(), 10);
        let c = DepthMap::from_data(5, 5, vec![2.5; 25]).unwrap();
        for level in [0.01, 0.5, 0.93] {
            assert!(depth_mask(&c, level).iter().all(|&m| m));
        }
    }
}
