//! Circular block bootstrap test for equality of two strategies' variances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Result of the paired circular-block-bootstrap variance test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapTest {
    /// Log-variance difference `ln s²_a − ln s²_b` of the two series.
    pub statistic: f64,
    pub p_value: f64,
    pub block_length: usize,
    pub iterations: usize,
    pub seed: u64,
}

fn sample_variance(series: &[f64]) -> f64 {
    let m = series.len() as f64;
    let mean = series.iter().sum::<f64>() / m;
    series.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0)
}

fn log_variance_difference(a: &[f64], b: &[f64], idx: &[usize]) -> f64 {
    let ra: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let rb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    sample_variance(&ra).ln() - sample_variance(&rb).ln()
}

/// Two-sided test of equal variance between paired return series.
///
/// Resamples contiguous index blocks with wrap-around; the same block indices
/// are applied to both series so the cross-strategy pairing survives
/// resampling. The replicate distribution of the statistic is centered at the
/// observed value and the p-value is the fraction of recentered replicates at
/// least as extreme as the observation (studentization by the common
/// bootstrap standard deviation cancels from the comparison).
pub fn variance_difference_test(
    returns_a: &[f64],
    returns_b: &[f64],
    block_length: usize,
    iterations: usize,
    seed: u64,
) -> Result<BootstrapTest> {
    let m = returns_a.len();
    if returns_b.len() != m {
        return Err(Error::Validation(format!(
            "series lengths differ: {m} vs {}",
            returns_b.len()
        )));
    }
    if block_length < 1 {
        return Err(Error::Validation("block length must be ≥ 1".into()));
    }
    if m < 2 * block_length {
        return Err(Error::Validation(format!(
            "need at least 2×block_length = {} observations, got {m}",
            2 * block_length
        )));
    }
    if iterations < 1 {
        return Err(Error::Validation("need at least 1 bootstrap iteration".into()));
    }
    let constant =
        |s: &[f64]| s.iter().all(|&v| v == s[0]) || sample_variance(s) == 0.0;
    if constant(returns_a) || constant(returns_b) {
        return Err(Error::DegenerateData(
            "constant return series has zero variance".into(),
        ));
    }

    let identity: Vec<usize> = (0..m).collect();
    let statistic = log_variance_difference(returns_a, returns_b, &identity);

    let n_blocks = m.div_ceil(block_length);
    let mut exceed = 0usize;
    for replicate in 0..iterations {
        // Per-replicate derived stream: replicate order never matters.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(replicate as u64 + 1);
        let mut idx = Vec::with_capacity(n_blocks * block_length);
        for _ in 0..n_blocks {
            let start = rng.random_range(0..m);
            for offset in 0..block_length {
                idx.push((start + offset) % m);
            }
        }
        idx.truncate(m);
        let replicate_stat = log_variance_difference(returns_a, returns_b, &idx);
        if (replicate_stat - statistic).abs() >= statistic.abs() {
            exceed += 1;
        }
    }

    Ok(BootstrapTest {
        statistic,
        p_value: exceed as f64 / iterations as f64,
        block_length,
        iterations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_series(m: usize, scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            })
            .collect()
    }

    #[test]
    fn identical_series_give_p_one() {
        let a = gaussian_series(100, 1.0, 1);
        let test = variance_difference_test(&a, &a, 5, 200, 7).unwrap();
        assert_eq!(test.statistic, 0.0);
        assert_eq!(test.p_value, 1.0);
    }

    #[test]
    fn hundredfold_variance_ratio_is_rejected() {
        let a = gaussian_series(436, 1.0, 3);
        let b: Vec<f64> = a.iter().map(|&r| 10.0 * r).collect();
        let test = variance_difference_test(&a, &b, 5, 2000, 11).unwrap();
        assert!(test.p_value < 0.01, "p = {}", test.p_value);
        // Cross-check against a naive F-ratio on the same i.i.d. data: the
        // variance ratio is enormous, so any consistent test must reject.
        let f = sample_variance(&b) / sample_variance(&a);
        assert!(f > 50.0);
    }

    #[test]
    fn p_value_invariant_to_common_rescaling() {
        let a = gaussian_series(200, 1.0, 5);
        let b = gaussian_series(200, 1.3, 6);
        let t1 = variance_difference_test(&a, &b, 5, 500, 9).unwrap();
        let a2: Vec<f64> = a.iter().map(|&r| 42.0 * r).collect();
        let b2: Vec<f64> = b.iter().map(|&r| 42.0 * r).collect();
        let t2 = variance_difference_test(&a2, &b2, 5, 500, 9).unwrap();
        assert!((t1.statistic - t2.statistic).abs() < 1e-12);
        assert_eq!(t1.p_value, t2.p_value);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gaussian_series(150, 1.0, 8);
        let b = gaussian_series(150, 1.2, 9);
        let t1 = variance_difference_test(&a, &b, 5, 300, 13).unwrap();
        let t2 = variance_difference_test(&a, &b, 5, 300, 13).unwrap();
        assert_eq!(t1.p_value, t2.p_value);
        let t3 = variance_difference_test(&a, &b, 5, 300, 14).unwrap();
        // Different seed may move the p-value, but not the statistic.
        assert_eq!(t1.statistic, t3.statistic);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let a = vec![0.01; 50];
        let b = gaussian_series(50, 1.0, 2);
        assert!(matches!(
            variance_difference_test(&a, &b, 5, 100, 1),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = gaussian_series(50, 1.0, 2);
        let b = gaussian_series(49, 1.0, 3);
        assert!(matches!(
            variance_difference_test(&a, &b, 5, 100, 1),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn short_series_relative_to_block_is_rejected() {
        let a = gaussian_series(8, 1.0, 2);
        let b = gaussian_series(8, 1.0, 3);
        assert!(variance_difference_test(&a, &b, 5, 100, 1).is_err());
    }
}
