use crate::error::{Error, Result};

/// Variances below this are treated as zero.
pub const VARIANCE_EPS: f64 = 1e-12;

/// Centered first and second moments of a pair of equally sized samples.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairMoments {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cov: f64,
}

pub(crate) fn pair_moments(a: impl Iterator<Item = f64> + Clone, b: impl Iterator<Item = f64> + Clone) -> PairMoments {
    let mut n = 0usize;
    let (mut sa, mut sb) = (0.0, 0.0);
    for (x, y) in a.clone().zip(b.clone()) {
        sa += x;
        sb += y;
        n += 1;
    }
    let nf = n as f64;
    let (mean_a, mean_b) = (sa / nf, sb / nf);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (x, y) in a.zip(b) {
        let (da, db) = (x - mean_a, y - mean_b);
        vaa += da * da;
        vbb += db * db;
        vab += da * db;
    }
    PairMoments {
        mean_a,
        mean_b,
        var_a: vaa / nf,
        var_b: vbb / nf,
        cov: vab / nf,
    }
}

impl PairMoments {
    /// `None` when either side is (numerically) constant.
    pub fn correlation(&self) -> Option<f64> {
        if self.var_a < VARIANCE_EPS || self.var_b < VARIANCE_EPS {
            return None;
        }
        Some((self.cov / (self.var_a.sqrt() * self.var_b.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Pearson correlation `(E[AB] − E[A]E[B]) / (σ_A σ_B)` with population
/// moments, computed in centered (two-pass) form.
///
/// Returns `Ok(None)` when either patch has variance below [`VARIANCE_EPS`];
/// callers decide how to treat such patches.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("patch sizes differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("pearson needs at least two samples"));
    }
    Ok(pair_moments(a.iter().copied(), b.iter().copied()).correlation())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.5..5.0)).collect()
    }

    /// Covariance from all pairwise differences; shares no code with the
    /// centered implementation.
    fn pairwise_pcc(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (mut cab, mut caa, mut cbb) = (0.0, 0.0, 0.0);
        for i in 0..a.len() {
            for j in 0..a.len() {
                cab += (a[i] - a[j]) * (b[i] - b[j]);
                caa += (a[i] - a[j]) * (a[i] - a[j]);
                cbb += (b[i] - b[j]) * (b[i] - b[j]);
            }
        }
        let k = 1.0 / (2.0 * n * n);
        (k * cab) / ((k * caa).sqrt() * (k * cbb).sqrt())
    }

    #[test]
    fn identities() {
        let a = sample(1, 50);
        assert_relative_eq!(pearson(&a, &a).unwrap().unwrap(), 1.0, epsilon = 1e-14);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_relative_eq!(pearson(&a, &neg).unwrap().unwrap(), -1.0, epsilon = 1e-14);
        let aff: Vec<f64> = a.iter().map(|v| 3.0 * v + 7.0).collect();
        assert_relative_eq!(pearson(&aff, &a).unwrap().unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn matches_pairwise_oracle() {
        for seed in 0..5 {
            let a = sample(10 + seed, 256);
            let b = sample(100 + seed, 256);
            let p = pearson(&a, &b).unwrap().unwrap();
            assert!((p - pairwise_pcc(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_patch_is_sentinel() {
        let a = vec![2.0; 10];
        let b = sample(3, 10);
        assert_eq!(pearson(&a, &b).unwrap(), None);
        assert_eq!(pearson(&b, &a).unwrap(), None);
    }

    #[test]
    fn size_mismatch_errors() {
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }
}
