//! Gauss-Legendre nodes and weights on [-1, 1].

use std::f64::consts::PI;

/// Computes the n-point Gauss-Legendre rule by Newton iteration on the
/// Legendre polynomial roots. Nodes are returned in increasing order.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root (descending).
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]` with a rule given as nodes/weights on [-1, 1].
pub(crate) fn integrate_segment(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&x, &w) in rule.0.iter().zip(&rule.1) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        // n-point GL is exact through degree 2n-1.
        let rule = gauss_legendre(8);
        let mut cubic = |x: f64| 3.0 * x.powi(3) - x.powi(2) + 4.0;
        let got = integrate_segment(&mut cubic, -1.0, 1.0, &rule);
        assert!((got - (8.0 - 2.0 / 3.0)).abs() < 1e-13);

        let mut deg15 = |x: f64| x.powi(15) + x.powi(14);
        let got = integrate_segment(&mut deg15, 0.0, 1.0, &rule);
        assert!((got - (1.0 / 16.0 + 1.0 / 15.0)).abs() < 1e-14);
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in [2, 5, 32, 64] {
            let (_, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-12, "n={n}: {s}");
        }
    }
}
