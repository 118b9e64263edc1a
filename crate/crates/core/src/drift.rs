//! Featurewise two-sample Kolmogorov-Smirnov drift detection.

use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KsResult {
    pub statistic: Vec<f64>,
    pub p_value: Vec<f64>,
    /// `p_value < alpha` per feature.
    pub mask: Vec<bool>,
    pub alpha: f64,
}

impl KsResult {
    pub fn drifted(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }
}

/// Exact `sup |F_a - F_b|` by a merge scan over the sorted samples. Both
/// empirical CDFs step past a tied value before the gap is measured.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        bail!(Domain, "KS test needs two nonempty samples");
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        bail!(Domain, "KS test samples contain NaN");
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov tail probability `Q(lambda)`.
///
/// The alternating series is truncated once a term drops below `1e-10`;
/// when it fails to converge within 100 terms (`lambda` close to zero) the
/// tail is 1.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100u32 {
        let kf = k as f64;
        let term = math::exp(-2.0 * kf * kf * lambda * lambda);
        sum += sign * term;
        if term < 1e-10 {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    1.0
}

/// Two-sided two-sample KS test: `(D, p)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let d = ks_statistic(a, b)?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ne = n * m / (n + m);
    let sq = math::sqrt(ne);
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    Ok((d, kolmogorov_tail(lambda)))
}

/// Per-feature KS test between source and target marginals. Missing
/// entries are skipped.
pub fn drift_mask(source: &Dataset, target: &Dataset, alpha: f64) -> Result<KsResult> {
    if source.d() != target.d() {
        bail!(Shape, "source has {} features, target has {}", source.d(), target.d());
    }
    if !(0.0..=1.0).contains(&alpha) {
        bail!(Domain, "alpha must lie in [0, 1]");
    }
    let d = source.d();
    let mut statistic = Vec::with_capacity(d);
    let mut p_value = Vec::with_capacity(d);
    for j in 0..d {
        let (s, p) = ks_two_sample(&source.observed_column(j), &target.observed_column(j))?;
        statistic.push(s);
        p_value.push(p);
    }
    let mask = p_value.iter().map(|&p| p < alpha).collect();
    Ok(KsResult { statistic, p_value, mask, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let (d, p) = ks_two_sample(&[0.3, 1.0, -2.0, 1.0], &[1.0, -2.0, 1.0, 0.3]).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn disjoint_supports() {
        let (d, p) = ks_two_sample(&[0.0, 1.0, 2.0], &[5.0, 6.0]).unwrap();
        assert_eq!(d, 1.0);
        assert!(p < 0.2);
    }

    #[test]
    fn hand_computed_gap() {
        // F_a jumps to 1/2 at 0 and 1 at 1; F_b is 1/3, 2/3, 1 at 0, 0.5, 1.
        // Largest gap is on [0.5, 1): |1/2 - 2/3| = 1/6; on [0, 0.5): |1/2 - 1/3| = 1/6.
        let d = ks_statistic(&[0.0, 1.0], &[0.0, 0.5, 1.0]).unwrap();
        assert!((d - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ties_step_both_cdfs() {
        assert_eq!(ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn tail_matches_reference_values() {
        // Q(1.36) ~ 0.0494 and Q(1.0) ~ 0.2700 (standard Kolmogorov table)
        assert!((kolmogorov_tail(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_tail(1.0) - 0.2700).abs() < 5e-4);
        assert_eq!(kolmogorov_tail(0.0), 1.0);
    }

    #[test]
    fn mask_examples() {
        let mut rows = Vec::new();
        for i in 0..200 {
            rows.push(alloc::vec![i as f64 * 0.37 % 5.0, (i * 7 % 11) as f64]);
        }
        let src = Dataset::from_rows(&rows).unwrap();
        let res = drift_mask(&src, &src, 0.05).unwrap();
        assert!(res.mask.iter().all(|m| !m));

        let shifted: Vec<_> = rows.iter().map(|r| alloc::vec![r[0] + 100.0, r[1]]).collect();
        let tgt = Dataset::from_rows(&shifted).unwrap();
        let res = drift_mask(&src, &tgt, 0.05).unwrap();
        assert_eq!(res.mask, alloc::vec![true, false]);
        assert_eq!(res.statistic[0], 1.0);

        let res = drift_mask(&src, &tgt, 0.0).unwrap();
        assert!(res.mask.iter().all(|m| !m));
    }
}
