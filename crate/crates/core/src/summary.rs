//! Reduction of raw per-feature observations to complete sufficient
//! statistics, with optional precision weights, and the derived quantities
//! used by every test (sample variance ratio, Behrens-Fisher statistic).

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-feature sufficient statistics for the two-sample model.
///
/// `n_eff_a`/`n_eff_b` are the effective sample sizes; they equal the
/// replicate counts for unweighted data and the sum of the precision weights
/// otherwise. Degrees of freedom are always `k - 1` regardless of weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSummary {
    pub feature_id: String,
    pub mean_a: f64,
    pub var_a: f64,
    pub k_a: usize,
    pub mean_b: f64,
    pub var_b: f64,
    pub k_b: usize,
    pub n_eff_a: f64,
    pub n_eff_b: f64,
}

impl FeatureSummary {
    /// Builds a summary with effective sample sizes defaulting to the
    /// replicate counts.
    pub fn new(
        feature_id: impl Into<String>,
        mean_a: f64,
        var_a: f64,
        k_a: usize,
        mean_b: f64,
        var_b: f64,
        k_b: usize,
    ) -> Result<Self> {
        Self::with_effective_sizes(
            feature_id, mean_a, var_a, k_a, mean_b, var_b, k_b, k_a as f64, k_b as f64,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_effective_sizes(
        feature_id: impl Into<String>,
        mean_a: f64,
        var_a: f64,
        k_a: usize,
        mean_b: f64,
        var_b: f64,
        k_b: usize,
        n_eff_a: f64,
        n_eff_b: f64,
    ) -> Result<Self> {
        let feature_id = feature_id.into();
        if k_a < 2 || k_b < 2 {
            return Err(Error::shape(format!(
                "feature '{feature_id}': each group needs at least 2 replicates, got k_a={k_a}, k_b={k_b}"
            )));
        }
        if !mean_a.is_finite() || !mean_b.is_finite() {
            return Err(Error::domain(format!(
                "feature '{feature_id}': non-finite group mean"
            )));
        }
        if !var_a.is_finite() || !var_b.is_finite() || var_a < 0.0 || var_b < 0.0 {
            return Err(Error::domain(format!(
                "feature '{feature_id}': variances must be finite and nonnegative, got {var_a}, {var_b}"
            )));
        }
        if !n_eff_a.is_finite() || !n_eff_b.is_finite() || n_eff_a <= 0.0 || n_eff_b <= 0.0 {
            return Err(Error::domain(format!(
                "feature '{feature_id}': effective sample sizes must be positive, got {n_eff_a}, {n_eff_b}"
            )));
        }
        Ok(FeatureSummary {
            feature_id,
            mean_a,
            var_a,
            k_a,
            mean_b,
            var_b,
            k_b,
            n_eff_a,
            n_eff_b,
        })
    }

    pub fn nu_a(&self) -> f64 {
        (self.k_a - 1) as f64
    }

    pub fn nu_b(&self) -> f64 {
        (self.k_b - 1) as f64
    }

    /// Features with a zero sample variance in either group are excluded from
    /// prior fitting and reported with missing p-values.
    pub fn is_degenerate(&self) -> bool {
        self.var_a == 0.0 || self.var_b == 0.0
    }
}

/// Statistics derived from a [`FeatureSummary`]: the sample variance ratio,
/// the Behrens-Fisher statistic, and the scaled mean difference used by the
/// explicit pooled-t tail formula. Fields are `None` where the quantity is
/// undefined (zero variances).
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedStats {
    pub lambda_hat: Option<f64>,
    pub t_bf: Option<f64>,
    pub zeta_hat: Option<f64>,
    pub degenerate: bool,
}

/// Computes weighted (or plain) sample moments of one group. The unweighted
/// path multiplies by a literal 1.0 weight so both paths share one summation
/// order and agree bitwise on unit weights.
fn group_moments(group: &str, x: &[f64], weights: Option<&[f64]>) -> Result<(f64, f64, f64)> {
    let k = x.len();
    if k < 2 {
        return Err(Error::shape(format!(
            "group {group} needs at least 2 observations, got {k}"
        )));
    }
    if let Some(w) = weights {
        if w.len() != k {
            return Err(Error::shape(format!(
                "group {group}: {} weights for {k} observations",
                w.len()
            )));
        }
        for &wi in w {
            if !wi.is_finite() || wi <= 0.0 {
                return Err(Error::domain(format!(
                    "group {group}: precision weights must be strictly positive, got {wi}"
                )));
            }
        }
    }
    for &xi in x {
        if !xi.is_finite() {
            return Err(Error::domain(format!(
                "group {group}: non-finite observation {xi}"
            )));
        }
    }
    let weight_at = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut sw = 0.0;
    let mut swx = 0.0;
    for i in 0..k {
        sw += weight_at(i);
        swx += weight_at(i) * x[i];
    }
    let mean = swx / sw;
    // Two-pass variance: with only a handful of replicates the centered form
    // is the numerically stable choice.
    let mut ss = 0.0;
    for i in 0..k {
        let d = x[i] - mean;
        ss += weight_at(i) * d * d;
    }
    let var = ss / (k as f64 - 1.0);
    Ok((mean, var, sw))
}

/// Collapses one feature's observations to its sufficient statistics.
///
/// Unweighted calls produce the usual sample mean and unbiased sample
/// variance with `n_eff = k`; weighted calls produce the precision-weighted
/// mean and variance with `n_eff` equal to the weight sum.
pub fn summarize(
    feature_id: impl Into<String>,
    observations_a: &[f64],
    observations_b: &[f64],
    weights_a: Option<&[f64]>,
    weights_b: Option<&[f64]>,
) -> Result<FeatureSummary> {
    let (mean_a, var_a, n_eff_a) = group_moments("A", observations_a, weights_a)?;
    let (mean_b, var_b, n_eff_b) = group_moments("B", observations_b, weights_b)?;
    FeatureSummary::with_effective_sizes(
        feature_id,
        mean_a,
        var_a,
        observations_a.len(),
        mean_b,
        var_b,
        observations_b.len(),
        n_eff_a,
        n_eff_b,
    )
}

/// Behrens-Fisher statistic and companions for one feature.
pub fn behrens_fisher_stat(s: &FeatureSummary) -> DerivedStats {
    let denom2 = s.var_a / s.n_eff_a + s.var_b / s.n_eff_b;
    let t_bf = if denom2 > 0.0 {
        Some((s.mean_a - s.mean_b) / denom2.sqrt())
    } else {
        None
    };
    let lambda_hat = if s.var_a > 0.0 && s.var_b > 0.0 {
        Some(s.var_a / s.var_b)
    } else {
        None
    };
    let zeta_hat = if s.var_b > 0.0 {
        Some((s.mean_a - s.mean_b).abs() / (s.var_b / (s.nu_a() + s.nu_b())).sqrt())
    } else {
        None
    };
    DerivedStats {
        lambda_hat,
        t_bf,
        zeta_hat,
        degenerate: s.is_degenerate(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_samples_are_degenerate() {
        let s = summarize("f", &[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0], None, None).unwrap();
        assert_eq!(s.var_a, 0.0);
        assert_eq!(s.var_b, 0.0);
        assert!(s.is_degenerate());
        let d = behrens_fisher_stat(&s);
        assert!(d.degenerate);
        assert!(d.t_bf.is_none());
        assert!(d.lambda_hat.is_none());
    }

    #[test]
    fn hand_computed_moments() {
        let s = summarize("f", &[0.0, 1.0, 2.0], &[0.0, 2.0, 4.0], None, None).unwrap();
        assert_eq!(s.mean_a, 1.0);
        assert_eq!(s.var_a, 1.0);
        assert_eq!(s.mean_b, 2.0);
        assert_eq!(s.var_b, 4.0);
        assert_eq!(s.n_eff_a, 3.0);
        let d = behrens_fisher_stat(&s);
        assert_eq!(d.lambda_hat, Some(0.25));
    }

    #[test]
    fn unit_weights_match_unweighted_bitwise() {
        let a = [0.31, -1.2, 5.5, 0.25];
        let b = [2.0, 1.1, -0.7];
        let ones_a = [1.0; 4];
        let ones_b = [1.0; 3];
        let plain = summarize("f", &a, &b, None, None).unwrap();
        let weighted = summarize("f", &a, &b, Some(&ones_a), Some(&ones_b)).unwrap();
        assert_eq!(plain, weighted);
    }

    #[test]
    fn too_few_observations_is_shape_error() {
        assert!(summarize("f", &[1.0], &[1.0, 2.0], None, None).is_err());
        assert!(summarize("f", &[1.0, 2.0], &[], None, None).is_err());
    }

    #[test]
    fn nonpositive_weight_is_domain_error() {
        let err = summarize(
            "f",
            &[1.0, 2.0],
            &[1.0, 2.0],
            Some(&[1.0, 0.0]),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn behrens_fisher_examples() {
        // equal means give t = 0
        let s = summarize("f", &[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], None, None).unwrap();
        assert_eq!(behrens_fisher_stat(&s).t_bf, Some(0.0));

        // mean_a=2, mean_b=0, var_a=var_b=1, k=3: t = 2 / sqrt(2/3)
        let s = FeatureSummary::new("f", 2.0, 1.0, 3, 0.0, 1.0, 3).unwrap();
        let d = behrens_fisher_stat(&s);
        let want = 2.0 / (2.0f64 / 3.0).sqrt();
        assert!((d.t_bf.unwrap() - want).abs() < 1e-12);
        assert!((d.t_bf.unwrap() - 2.449489742783178).abs() < 1e-12);

        // variance ratio
        let s = FeatureSummary::new("f", 0.0, 4.0, 3, 0.0, 1.0, 3).unwrap();
        assert_eq!(behrens_fisher_stat(&s).lambda_hat, Some(4.0));
    }

    #[test]
    fn zeta_hat_matches_definition() {
        let s = FeatureSummary::new("f", 3.0, 2.0, 4, 1.0, 0.5, 6).unwrap();
        let d = behrens_fisher_stat(&s);
        let want = 2.0 / (0.5f64 / 8.0).sqrt();
        assert!((d.zeta_hat.unwrap() - want).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_invariant_within_groups(
            mut a in proptest::collection::vec(-50.0f64..50.0, 3..12),
            b in proptest::collection::vec(-50.0f64..50.0, 3..12),
            seed in 0u64..1000,
        ) {
            let before = summarize("f", &a, &b, None, None).unwrap();
            // deterministic shuffle of group A
            let n = a.len();
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                a.swap(i, j);
            }
            let after = summarize("f", &a, &b, None, None).unwrap();
            prop_assert!((before.mean_a - after.mean_a).abs() <= 1e-12 * before.mean_a.abs().max(1.0));
            prop_assert!((before.var_a - after.var_a).abs() <= 1e-10 * before.var_a.abs().max(1.0));
        }

        #[test]
        fn swapped_ratio_is_reciprocal(
            a in proptest::collection::vec(-10.0f64..10.0, 3..8),
            b in proptest::collection::vec(-10.0f64..10.0, 3..8),
        ) {
            let fwd = summarize("f", &a, &b, None, None).unwrap();
            let rev = summarize("f", &b, &a, None, None).unwrap();
            let (l1, l2) = (
                behrens_fisher_stat(&fwd).lambda_hat,
                behrens_fisher_stat(&rev).lambda_hat,
            );
            if let (Some(l1), Some(l2)) = (l1, l2) {
                prop_assert!((l1 * l2 - 1.0).abs() < 1e-12);
            }
        }
    }
}
