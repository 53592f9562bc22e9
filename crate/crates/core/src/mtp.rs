//! Multiple-testing corrections over p-value vectors.

use crate::error::{Error, Result};

/// Outcome of a false-discovery-rate procedure: adjusted q-values aligned
/// with the input and the per-hypothesis rejection decision. `rejected[i]`
/// holds exactly when `q_values[i] <= alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    pub q_values: Vec<f64>,
    pub rejected: Vec<bool>,
    pub alpha: f64,
}

/// Benjamini-Hochberg step-up procedure.
///
/// Rejects all hypotheses with p_(i) for i up to the largest j satisfying
/// p_(j) <= alpha * j / m, and returns the step-up adjusted values
/// q_(i) = min_{j >= i} min(1, m p_(j) / j). Ties are sorted stably, so all
/// tied p-values share the most favorable (largest-index) threshold.
pub fn benjamini_hochberg(p: &[f64], alpha: f64) -> Result<RejectionResult> {
    if p.is_empty() {
        return Err(Error::shape("no p-values to adjust".to_string()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    for (i, &pi) in p.iter().enumerate() {
        if !pi.is_finite() || pi <= 0.0 || pi > 1.0 {
            return Err(Error::domain(format!(
                "p-value {i} out of (0,1]: {pi}; exclude missing entries before adjusting"
            )));
        }
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());

    let mut q_values = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let adjusted = (m as f64 * p[idx] / (rank + 1) as f64).min(1.0);
        running = running.min(adjusted);
        q_values[idx] = running;
    }
    let rejected = q_values.iter().map(|&q| q <= alpha).collect();
    Ok(RejectionResult {
        q_values,
        rejected,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Literal step-up definition, used as an oracle.
    fn step_up_rejections(p: &[f64], alpha: f64) -> Vec<bool> {
        let m = p.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
        let mut cutoff_rank = None;
        for rank in (0..m).rev() {
            if p[order[rank]] <= alpha * (rank + 1) as f64 / m as f64 {
                cutoff_rank = Some(rank);
                break;
            }
        }
        let mut rejected = vec![false; m];
        if let Some(r) = cutoff_rank {
            for &idx in &order[..=r] {
                rejected[idx] = true;
            }
        }
        rejected
    }

    #[test]
    fn boundary_all_equal_alpha_rejects_everything() {
        let p = vec![0.05; 7];
        let res = benjamini_hochberg(&p, 0.05).unwrap();
        assert!(res.rejected.iter().all(|&r| r));
    }

    #[test]
    fn hand_worked_example() {
        let res = benjamini_hochberg(&[0.01, 0.02, 0.9], 0.05).unwrap();
        assert!((res.q_values[0] - 0.03).abs() < 1e-12);
        assert!((res.q_values[1] - 0.03).abs() < 1e-12);
        assert!((res.q_values[2] - 0.9).abs() < 1e-12);
        assert_eq!(res.rejected, vec![true, true, false]);
    }

    #[test]
    fn all_ones_reject_nothing() {
        let res = benjamini_hochberg(&[1.0, 1.0, 1.0, 1.0], 0.1).unwrap();
        assert!(res.q_values.iter().all(|&q| q == 1.0));
        assert!(res.rejected.iter().all(|&r| !r));
    }

    #[test]
    fn input_validation() {
        assert!(benjamini_hochberg(&[], 0.1).is_err());
        assert!(benjamini_hochberg(&[0.5], 0.0).is_err());
        assert!(benjamini_hochberg(&[0.5], 1.0).is_err());
        assert!(benjamini_hochberg(&[0.0], 0.1).is_err());
        assert!(benjamini_hochberg(&[f64::NAN], 0.1).is_err());
    }

    #[test]
    fn matches_step_up_oracle_on_random_vectors() {
        let mut state = 0x1234_5678_9ABC_DEFu64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        for trial in 0..1000 {
            let m = 1 + (trial % 40);
            let p: Vec<f64> = (0..m)
                .map(|_| {
                    let u = next();
                    // concentrate some mass at small values and create ties
                    if u < 0.3 {
                        (u * 0.1).max(1e-6)
                    } else if u < 0.4 {
                        0.05
                    } else {
                        u
                    }
                })
                .collect();
            let alpha = 0.02 + 0.2 * next();
            let res = benjamini_hochberg(&p, alpha).unwrap();
            assert_eq!(
                res.rejected,
                step_up_rejections(&p, alpha),
                "p={p:?} alpha={alpha}"
            );
        }
    }

    proptest! {
        #[test]
        fn monotone_in_alpha(
            p in proptest::collection::vec(1e-6f64..1.0, 1..60),
            a1 in 0.01f64..0.5,
            bump in 0.0f64..0.4,
        ) {
            let a2 = (a1 + bump).min(0.99);
            let r1 = benjamini_hochberg(&p, a1).unwrap();
            let r2 = benjamini_hochberg(&p, a2).unwrap();
            for i in 0..p.len() {
                prop_assert!(!r1.rejected[i] || r2.rejected[i]);
            }
        }

        #[test]
        fn permutation_equivariant(
            p in proptest::collection::vec(1e-6f64..1.0, 2..40),
            seed in 0u64..500,
        ) {
            let n = p.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(13);
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let permuted: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
            let base = benjamini_hochberg(&p, 0.1).unwrap();
            let shuffled = benjamini_hochberg(&permuted, 0.1).unwrap();
            for (pos, &src) in perm.iter().enumerate() {
                prop_assert_eq!(shuffled.rejected[pos], base.rejected[src]);
                prop_assert!((shuffled.q_values[pos] - base.q_values[src]).abs() < 1e-12);
            }
        }

        #[test]
        fn q_values_monotone_in_p_order(
            p in proptest::collection::vec(1e-6f64..1.0, 2..40),
        ) {
            let res = benjamini_hochberg(&p, 0.1).unwrap();
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
            for pair in order.windows(2) {
                prop_assert!(res.q_values[pair[0]] <= res.q_values[pair[1]] + 1e-15);
            }
        }
    }
}
