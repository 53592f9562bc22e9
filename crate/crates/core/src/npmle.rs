//! Discrete nonparametric maximum likelihood estimation of nuisance priors.
//!
//! Two priors are fitted this way: a distribution over variance ratios from
//! the sample ratios, and a bivariate distribution over variance pairs from
//! the two sample variances. Both reduce to the same problem: maximize the
//! marginal mixture log-likelihood
//!
//! ```text
//!     (1/n) sum_i log( sum_k w_k exp(L_ik) )
//! ```
//!
//! over simplex weights `w` on a fixed grid, given the n x B matrix of
//! per-observation, per-grid-point log-kernels `L`. The solver interleaves
//! multiplicative EM fixed-point updates with vertex-exchange steps toward
//! the most certificate-violating grid point. Convergence is declared by the
//! first-order optimality certificate
//!
//! ```text
//!     max_k (1/n) sum_i exp(L_ik) / f_i  <=  1 + tol,
//! ```
//!
//! where `f_i` is the fitted mixture density at observation i; this is the
//! only solver-independent notion of "solved" and doubles as a weak duality
//! bound: any other simplex vector can beat the fitted log-likelihood by at
//! most `n * gap`.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{chi2_scaled_logpdf_raw, f_scaled_logpdf_raw, Tolerance};
use crate::error::{Error, Result};
use crate::summary::{behrens_fisher_stat, FeatureSummary};

/// Post-convergence truncation threshold: weights below this are dropped and
/// the simplex renormalized, so fitted priors are sparse.
const FINAL_TRUNCATION: f64 = 1e-12;
/// Cap on restricted solves between two certificate passes.
const INNER_MAX: usize = 30;
/// New grid points admitted to the support per certificate pass.
const GROW_MAX: usize = 30;
/// Row-block size for deterministic parallel reductions.
const ROW_CHUNK: usize = 512;

/// A discrete distribution on positive support points, used as the fitted
/// variance-ratio prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePrior1D {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscretePrior1D {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::shape(format!(
                "prior needs matching nonempty support/weights, got {} and {}",
                support.len(),
                weights.len()
            )));
        }
        for pair in support.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::domain(
                    "prior support must be strictly increasing".to_string(),
                ));
            }
        }
        if !support.iter().all(|&u| u.is_finite() && u > 0.0) {
            return Err(Error::domain("prior support must be positive".to_string()));
        }
        if !weights.iter().all(|&w| w.is_finite() && w >= 0.0) {
            return Err(Error::domain("prior weights must be nonnegative".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!(
                "prior weights must sum to 1 within 1e-10, got {total}"
            )));
        }
        Ok(DiscretePrior1D { support, weights })
    }

    pub fn point_mass(at: f64) -> Result<Self> {
        Self::new(vec![at], vec![1.0])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| u * w)
            .sum()
    }

    /// P(X <= x) of the discrete distribution.
    pub fn cdf(&self, x: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .take_while(|(u, _)| **u <= x)
            .map(|(_, w)| w)
            .sum()
    }
}

/// A sparse discrete distribution on a product grid of variance pairs, used
/// as the fitted dual-variance prior. `indices` address the flattened
/// row-major grid: index `k` is the pair `(support_a[k / support_b.len()],
/// support_b[k % support_b.len()])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePrior2D {
    support_a: Vec<f64>,
    support_b: Vec<f64>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl DiscretePrior2D {
    pub fn new(
        support_a: Vec<f64>,
        support_b: Vec<f64>,
        indices: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if support_a.is_empty() || support_b.is_empty() {
            return Err(Error::shape("prior grids must be nonempty".to_string()));
        }
        for axis in [&support_a, &support_b] {
            if !axis.iter().all(|&u| u.is_finite() && u > 0.0) {
                return Err(Error::domain("prior support must be positive".to_string()));
            }
            for pair in axis.windows(2) {
                if !(pair[0] < pair[1]) {
                    return Err(Error::domain(
                        "prior support must be strictly increasing".to_string(),
                    ));
                }
            }
        }
        if indices.len() != weights.len() || indices.is_empty() {
            return Err(Error::shape(format!(
                "prior needs matching nonempty indices/weights, got {} and {}",
                indices.len(),
                weights.len()
            )));
        }
        let cells = support_a.len() * support_b.len();
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::shape(
                    "prior indices must be strictly increasing".to_string(),
                ));
            }
        }
        if *indices.last().unwrap() >= cells {
            return Err(Error::shape(format!(
                "prior index out of range for a {} x {} grid",
                support_a.len(),
                support_b.len()
            )));
        }
        if !weights.iter().all(|&w| w.is_finite() && w >= 0.0) {
            return Err(Error::domain("prior weights must be nonnegative".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::domain(format!(
                "prior weights must sum to 1 within 1e-10, got {total}"
            )));
        }
        Ok(DiscretePrior2D {
            support_a,
            support_b,
            indices,
            weights,
        })
    }

    /// Convenience constructor from a dense row-major weight matrix.
    pub fn from_dense(
        support_a: Vec<f64>,
        support_b: Vec<f64>,
        dense: &[f64],
    ) -> Result<Self> {
        if dense.len() != support_a.len() * support_b.len() {
            return Err(Error::shape(format!(
                "dense weight matrix has {} entries for a {} x {} grid",
                dense.len(),
                support_a.len(),
                support_b.len()
            )));
        }
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        for (k, &w) in dense.iter().enumerate() {
            if w != 0.0 {
                indices.push(k);
                weights.push(w);
            }
        }
        Self::new(support_a, support_b, indices, weights)
    }

    pub fn support_a(&self) -> &[f64] {
        &self.support_a
    }

    pub fn support_b(&self) -> &[f64] {
        &self.support_b
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Iterates the atoms as `(sigma2_a, sigma2_b, weight)`.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let nb = self.support_b.len();
        self.indices
            .iter()
            .zip(&self.weights)
            .map(move |(&k, &w)| (self.support_a[k / nb], self.support_b[k % nb], w))
    }
}

/// A fitted prior together with solver diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct NpmleFit<P> {
    pub prior: P,
    pub loglik: f64,
    pub certificate_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Row-major n x B matrix of log-kernel values.
#[derive(Debug, Clone)]
pub struct LogLikMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl LogLikMatrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::shape(format!(
                "log-likelihood matrix of {} entries cannot be {rows} x {cols}",
                data.len()
            )));
        }
        Ok(LogLikMatrix { data, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Simplex weights on the full grid plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct GridFit {
    pub weights: Vec<f64>,
    pub loglik: f64,
    pub certificate_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at the start of every iteration; nondecreasing.
    pub loglik_trace: Vec<f64>,
}

/// Log-spaced grid between `lo` and `hi` inclusive; collapses to one point
/// when the range is empty.
fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    debug_assert!(lo > 0.0 && hi >= lo && count >= 1);
    if lo == hi {
        return vec![lo];
    }
    if count == 1 {
        return vec![(0.5 * (lo.ln() + hi.ln())).exp()];
    }
    let llo = lo.ln();
    let lhi = hi.ln();
    let mut grid = Vec::with_capacity(count);
    grid.push(lo);
    for j in 1..count - 1 {
        let t = j as f64 / (count - 1) as f64;
        grid.push((llo + t * (lhi - llo)).exp());
    }
    grid.push(hi);
    grid
}

/// Quantile by the midpoint (Hazen) convention: the p-quantile of the sorted
/// values `x_(1) <= ... <= x_(n)` interpolates linearly at position
/// `n*p + 1/2` (1-based), clamped to the observed range.
fn hazen_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let n = sorted.len();
    let h = n as f64 * p - 0.5;
    if h <= 0.0 {
        return sorted[0];
    }
    if h >= (n - 1) as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Grid for the variance-ratio prior: `b` points, log-uniform from the
/// smallest to the largest finite positive ratio, endpoints included.
pub fn build_grid_1d(lambda_hats: &[f64], b: usize) -> Result<Vec<f64>> {
    if b < 1 {
        return Err(Error::shape("grid size must be at least 1".to_string()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &l in lambda_hats {
        if l.is_finite() && l > 0.0 {
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    if !lo.is_finite() || hi <= 0.0 {
        return Err(Error::shape(
            "no finite positive variance ratios to build a grid from".to_string(),
        ));
    }
    Ok(log_space(lo, hi, b))
}

/// Per-axis grids for the dual-variance prior: log-uniform from the
/// empirical 1% quantile (midpoint convention) to the maximum.
pub fn build_grid_2d(
    s2_a: &[f64],
    s2_b: &[f64],
    b1: usize,
    b2: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if b1 < 1 || b2 < 1 {
        return Err(Error::shape("grid sizes must be at least 1".to_string()));
    }
    let axis = |values: &[f64], count: usize| -> Result<Vec<f64>> {
        let mut sorted: Vec<f64> = values
            .iter()
            .copied()
            .filter(|v| v.is_finite() && *v > 0.0)
            .collect();
        if sorted.is_empty() {
            return Err(Error::shape(
                "no finite positive variances to build a grid from".to_string(),
            ));
        }
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lo = hazen_quantile(&sorted, 0.01);
        let hi = *sorted.last().unwrap();
        Ok(log_space(lo, hi, count))
    };
    Ok((axis(s2_a, b1)?, axis(s2_b, b2)?))
}

/// Log-kernel matrix for the variance-ratio mixture: entry (i, k) is the
/// log-density of the observed ratio `lambda_hats[i]` under a true ratio at
/// grid point k (scaled-F likelihood). Degrees of freedom are per-feature.
pub fn vr_loglik_matrix(
    lambda_hats: &[f64],
    nu_a: &[f64],
    nu_b: &[f64],
    grid: &[f64],
) -> Result<LogLikMatrix> {
    let n = lambda_hats.len();
    if n == 0 || grid.is_empty() {
        return Err(Error::shape("empty observations or grid".to_string()));
    }
    if nu_a.len() != n || nu_b.len() != n {
        return Err(Error::shape(
            "degrees-of-freedom slices must match the observations".to_string(),
        ));
    }
    let b = grid.len();
    let mut data = vec![0.0; n * b];
    data.par_chunks_mut(b).enumerate().for_each(|(i, row)| {
        for (k, &u) in grid.iter().enumerate() {
            row[k] = f_scaled_logpdf_raw(lambda_hats[i], u, nu_a[i], nu_b[i]);
        }
    });
    LogLikMatrix::new(data, n, b)
}

/// Log-kernel matrix for the dual-variance mixture: entry (i, k) with
/// k = ia * grid_b.len() + ib is the joint log-density of the two sample
/// variances under true variances (grid_a[ia], grid_b[ib]); the kernel is
/// the product of two scaled chi-squared likelihoods.
pub fn dv_loglik_matrix(
    s2_a: &[f64],
    s2_b: &[f64],
    nu_a: &[f64],
    nu_b: &[f64],
    grid_a: &[f64],
    grid_b: &[f64],
) -> Result<LogLikMatrix> {
    let n = s2_a.len();
    if n == 0 || grid_a.is_empty() || grid_b.is_empty() {
        return Err(Error::shape("empty observations or grid".to_string()));
    }
    if s2_b.len() != n || nu_a.len() != n || nu_b.len() != n {
        return Err(Error::shape(
            "observation slices must have matching lengths".to_string(),
        ));
    }
    let (b1, b2) = (grid_a.len(), grid_b.len());
    let mut data = vec![0.0; n * b1 * b2];
    data.par_chunks_mut(b1 * b2).enumerate().for_each(|(i, row)| {
        let part_a: Vec<f64> = grid_a
            .iter()
            .map(|&u| chi2_scaled_logpdf_raw(s2_a[i], u, nu_a[i]))
            .collect();
        let part_b: Vec<f64> = grid_b
            .iter()
            .map(|&v| chi2_scaled_logpdf_raw(s2_b[i], v, nu_b[i]))
            .collect();
        for (ia, &la) in part_a.iter().enumerate() {
            let out = &mut row[ia * b2..(ia + 1) * b2];
            for (ib, &lb) in part_b.iter().enumerate() {
                out[ib] = la + lb;
            }
        }
    });
    LogLikMatrix::new(data, n, b1 * b2)
}

/// Mixture densities f_i = sum_k w_k E_ik for all rows (shifted scale).
fn mixture_densities(e: &[f64], cols: usize, w: &[f64], out: &mut Vec<f64>) {
    e.par_chunks(cols)
        .map(|row| row.iter().zip(w).map(|(&ev, &wk)| ev * wk).sum::<f64>())
        .collect_into_vec(out);
}

/// Column accumulation g_k = sum_i r_i E_ik with a fixed chunked reduction
/// order, so results are bit-identical for any thread count.
fn column_accumulate(e: &[f64], cols: usize, r: &[f64]) -> Vec<f64> {
    let partials: Vec<Vec<f64>> = r
        .par_chunks(ROW_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = vec![0.0; cols];
            let base = ci * ROW_CHUNK;
            for (off, &ri) in chunk.iter().enumerate() {
                let row = &e[(base + off) * cols..(base + off + 1) * cols];
                for (k, &ev) in row.iter().enumerate() {
                    acc[k] += ev * ri;
                }
            }
            acc
        })
        .collect();
    let mut g = vec![0.0; cols];
    for partial in partials {
        for (gk, v) in g.iter_mut().zip(partial) {
            *gk += v;
        }
    }
    g
}

fn shifted_loglik(f: &[f64], base: f64) -> f64 {
    f.iter().map(|&fi| fi.max(f64::MIN_POSITIVE).ln()).sum::<f64>() + base
}

/// Solves the symmetric positive semidefinite system `G x = rhs` restricted
/// to the index set `p` by Cholesky with a small ridge. Returns None if the
/// factorization breaks down.
fn solve_subsystem(gram: &[f64], m: usize, rhs: &[f64], p: &[usize]) -> Option<Vec<f64>> {
    let k = p.len();
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for (r, &pr) in p.iter().enumerate() {
        for (c, &pc) in p.iter().enumerate() {
            a[r * k + c] = gram[pr * m + pc];
        }
        b[r] = rhs[pr];
    }
    // callers equilibrate the Gram to unit diagonal, so a fixed tiny ridge
    // is enough to keep near-collinear columns factorizable
    let ridge = 1e-11;
    for r in 0..k {
        a[r * k + r] += ridge;
    }
    // in-place Cholesky
    for r in 0..k {
        for c in 0..=r {
            let mut sum = a[r * k + c];
            for j in 0..c {
                sum -= a[r * k + j] * a[c * k + j];
            }
            if r == c {
                if sum <= 0.0 {
                    return None;
                }
                a[r * k + r] = sum.sqrt();
            } else {
                a[r * k + c] = sum / a[c * k + c];
            }
        }
    }
    // forward then backward substitution
    for r in 0..k {
        let mut sum = b[r];
        for j in 0..r {
            sum -= a[r * k + j] * b[j];
        }
        b[r] = sum / a[r * k + r];
    }
    for r in (0..k).rev() {
        let mut sum = b[r];
        for j in r + 1..k {
            sum -= a[j * k + r] * b[j];
        }
        b[r] = sum / a[r * k + r];
    }
    Some(b)
}

/// Lawson-Hanson nonnegative least squares for the quadratic form
/// min_x 1/2 x' G x - rhs' x subject to x >= 0, with G = D'D and
/// rhs = D'y given through their normal-equation forms.
fn nnls(gram: &[f64], m: usize, rhs: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; m];
    let mut in_p = vec![false; m];
    let mut p: Vec<usize> = Vec::new();
    let rhs_scale = rhs.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    for _outer in 0..(3 * m + 10) {
        // gradient of the objective is G x - rhs; select the most negative
        let mut best = usize::MAX;
        let mut best_grad = 1e-11 * rhs_scale;
        for k in 0..m {
            if in_p[k] {
                continue;
            }
            let mut gx = 0.0;
            for j in &p {
                gx += gram[k * m + j] * x[*j];
            }
            let grad = rhs[k] - gx;
            if grad > best_grad {
                best_grad = grad;
                best = k;
            }
        }
        if best == usize::MAX {
            break;
        }
        in_p[best] = true;
        p.push(best);

        loop {
            let Some(z) = solve_subsystem(gram, m, rhs, &p) else {
                // factorization failed: drop the newest column and stop
                let last = p.pop().unwrap();
                in_p[last] = false;
                return x;
            };
            if z.iter().all(|&v| v > 0.0) {
                for (j, &pj) in p.iter().enumerate() {
                    x[pj] = z[j];
                }
                break;
            }
            // step toward z until the first coordinate hits zero
            let mut alpha = 1.0f64;
            for (j, &pj) in p.iter().enumerate() {
                if z[j] <= 0.0 {
                    let denom = x[pj] - z[j];
                    if denom > 0.0 {
                        alpha = alpha.min(x[pj] / denom);
                    }
                }
            }
            for (j, &pj) in p.iter().enumerate() {
                x[pj] += alpha * (z[j] - x[pj]);
            }
            let mut still = Vec::with_capacity(p.len());
            for &pj in &p {
                if x[pj] > 1e-14 {
                    still.push(pj);
                } else {
                    x[pj] = 0.0;
                    in_p[pj] = false;
                }
            }
            if still.len() == p.len() {
                // no coordinate left the positive set; accept to avoid cycling
                break;
            }
            p = still;
            if p.is_empty() {
                break;
            }
        }
    }
    x
}

/// One safeguarded Newton step on the support: maximizes the second-order
/// model of the log-likelihood (an NNLS problem in the scaled columns),
/// backtracks toward the current weights until the true objective improves,
/// and falls back to a multiplicative EM step otherwise.
#[allow(clippy::too_many_arguments)]
fn restricted_step(
    compact: &[f64],
    m: usize,
    w: &mut [f64],
    f: &mut Vec<f64>,
    ll: f64,
    base_ll: f64,
    inv_n: f64,
    scratch: &mut Vec<f64>,
) {
    let n = f.len();
    // normal equations of D x ~ 2 with D_ik = E_ik / f_i
    let partials: Vec<(Vec<f64>, Vec<f64>)> = compact
        .par_chunks(ROW_CHUNK * m)
        .enumerate()
        .map(|(ci, block)| {
            let mut gram = vec![0.0; m * m];
            let mut rhs = vec![0.0; m];
            for (off, row) in block.chunks(m).enumerate() {
                let fi = f[ci * ROW_CHUNK + off].max(f64::MIN_POSITIVE);
                let inv = 1.0 / fi;
                for r in 0..m {
                    let dr = row[r] * inv;
                    rhs[r] += 2.0 * dr;
                    for c in 0..=r {
                        gram[r * m + c] += dr * row[c] * inv;
                    }
                }
            }
            (gram, rhs)
        })
        .collect();
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (pg, pr) in partials {
        for (dst, v) in gram.iter_mut().zip(pg) {
            *dst += v;
        }
        for (dst, v) in rhs.iter_mut().zip(pr) {
            *dst += v;
        }
    }
    for r in 0..m {
        for c in r + 1..m {
            gram[r * m + c] = gram[c * m + r];
        }
    }

    // Jacobi equilibration: unit diagonal keeps the subproblem conditioned
    // even when adjacent grid columns are nearly collinear.
    let scale: Vec<f64> = (0..m)
        .map(|k| gram[k * m + k].sqrt().max(1e-150))
        .collect();
    for r in 0..m {
        for c in 0..m {
            gram[r * m + c] /= scale[r] * scale[c];
        }
        rhs[r] /= scale[r];
    }

    let mut candidate = nnls(&gram, m, &rhs);
    for (v, s) in candidate.iter_mut().zip(&scale) {
        *v /= s;
    }
    let total: f64 = candidate.iter().sum();
    let mut improved = false;
    if total > 0.0 {
        for v in candidate.iter_mut() {
            *v /= total;
        }
        // backtracking toward the current point
        let mut step = 1.0;
        for _ in 0..12 {
            scratch.clear();
            scratch.extend(
                w.iter()
                    .zip(&candidate)
                    .map(|(&wo, &cn)| wo + step * (cn - wo)),
            );
            let mut f_new = vec![0.0; n];
            mixture_densities(compact, m, scratch, &mut f_new);
            let ll_new = shifted_loglik(&f_new, base_ll);
            // tolerate summation noise when the support is already optimal
            if ll_new >= ll - 1e-12 * ll.abs().max(1.0) {
                w.copy_from_slice(scratch);
                *f = f_new;
                improved = true;
                break;
            }
            step *= 0.5;
        }
    }
    if !improved {
        // EM fallback: monotone by construction
        let r: Vec<f64> = f
            .iter()
            .map(|&fi| inv_n / fi.max(f64::MIN_POSITIVE))
            .collect();
        let g = column_accumulate(compact, m, &r);
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk *= gk;
        }
        mixture_densities(compact, m, w, f);
    }
}

/// Exact line search for the vertex-exchange step: maximizes
/// phi(gamma) = sum_i ln((1-gamma) f_i + gamma c_i) over [0, 1).
fn vertex_line_search(f: &[f64], c: &[f64]) -> f64 {
    let derivative = |gamma: f64| -> (f64, f64) {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (&fi, &ci) in f.iter().zip(c) {
            let delta = ci - fi;
            let denom = (fi + gamma * delta).max(f64::MIN_POSITIVE);
            let ratio = delta / denom;
            d1 += ratio;
            d2 -= ratio * ratio;
        }
        (d1, d2)
    };
    let hi_cap = 1.0 - 1e-12;
    let (d0, _) = derivative(0.0);
    if d0 <= 0.0 {
        return 0.0;
    }
    let (dh, _) = derivative(hi_cap);
    if dh >= 0.0 {
        return hi_cap;
    }
    let mut lo = 0.0;
    let mut hi = hi_cap;
    let mut gamma = 0.5 * hi_cap;
    for _ in 0..100 {
        let (d1, d2) = derivative(gamma);
        if d1 > 0.0 {
            lo = gamma;
        } else {
            hi = gamma;
        }
        let mut next = if d2 < 0.0 { gamma - d1 / d2 } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - gamma).abs() < 1e-13 {
            return next;
        }
        gamma = next;
    }
    gamma
}

/// Maximizes the discrete mixture log-likelihood over simplex weights.
///
/// `tol.abs_tol` is the certificate-gap target, `tol.rel_tol` the relative
/// log-likelihood stall threshold over a 10-iteration window, and
/// `tol.max_iter` the iteration budget. The returned fit reports the weights
/// after truncation of entries below 1e-12 (renormalized), with the
/// certificate gap and log-likelihood recomputed for exactly those weights;
/// `converged` holds iff the final gap meets `tol.abs_tol`.
pub fn fit_npmle(loglik: &LogLikMatrix, tol: &Tolerance) -> Result<GridFit> {
    let (n, b) = (loglik.rows(), loglik.cols());

    // Per-row max subtraction keeps the mixture arithmetic in a safe range;
    // all reported quantities are invariant to these row shifts.
    let mut row_max = vec![0.0; n];
    let mut base_ll = 0.0;
    for i in 0..n {
        let mut m = f64::NEG_INFINITY;
        for &v in loglik.row(i) {
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::data(
                    format!("row {i}"),
                    "non-finite log-likelihood entry",
                ));
            }
            m = m.max(v);
        }
        if !m.is_finite() {
            return Err(Error::data(
                format!("row {i}"),
                "no finite log-likelihood entry",
            ));
        }
        row_max[i] = m;
        base_ll += m;
    }

    let mut e = vec![0.0; n * b];
    e.par_chunks_mut(b).enumerate().for_each(|(i, row)| {
        let m = row_max[i];
        for (dst, &v) in row.iter_mut().zip(loglik.row(i)) {
            *dst = (v - m).exp();
        }
    });

    if b == 1 {
        return Ok(GridFit {
            weights: vec![1.0],
            loglik: base_ll,
            certificate_gap: 0.0,
            iterations: 0,
            converged: true,
            loglik_trace: vec![base_ll],
        });
    }

    let inv_n = 1.0 / n as f64;

    // Sparse start: uniform weights on a coarse sub-grid. The support then
    // changes only through the exchange/growth steps driven by the full-grid
    // certificate, and through pruning of weights the restricted solves send
    // to zero.
    let stride = (b / 64).max(1);
    let mut active: Vec<usize> = (0..b).step_by(stride).collect();
    if *active.last().unwrap() != b - 1 {
        active.push(b - 1);
    }
    let mut w_active = vec![1.0 / active.len() as f64; active.len()];

    // Column subset of `e` for the active set, rebuilt whenever it changes.
    let mut compact: Vec<f64> = Vec::new();
    let rebuild_compact = |compact: &mut Vec<f64>, active: &[usize]| {
        let m = active.len();
        compact.clear();
        compact.resize(n * m, 0.0);
        compact.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            for (j, &k) in active.iter().enumerate() {
                row[j] = e[i * b + k];
            }
        });
    };
    rebuild_compact(&mut compact, &active);

    let mut f = vec![0.0; n];
    mixture_densities(&compact, active.len(), &w_active, &mut f);
    let mut scratch: Vec<f64> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut stalled = false;

    // Outer cycle: one full-grid certificate pass (support growth plus a
    // vertex-exchange step), then restricted solves on the active support
    // until they stop improving.
    'outer: while iterations < tol.max_iter && !stalled {
        iterations += 1;
        let ll = shifted_loglik(&f, base_ll);
        if let Some(&prev) = trace.last() {
            debug_assert!(
                ll >= prev - 1e-8 * prev.abs().max(1.0),
                "log-likelihood decreased: {prev} -> {ll}"
            );
        }
        trace.push(ll);
        // Stall exit: relative progress below tol.rel_tol over 10 iterations.
        if trace.len() > 10 && ll - trace[trace.len() - 11] < tol.rel_tol * ll.abs().max(1.0) {
            break;
        }

        // Certificate pass over the full grid.
        let r: Vec<f64> = f
            .iter()
            .map(|&fi| inv_n / fi.max(f64::MIN_POSITIVE))
            .collect();
        let g = column_accumulate(&e, b, &r);
        let (mut k_star, mut g_max) = (0, f64::NEG_INFINITY);
        for (k, &gk) in g.iter().enumerate() {
            if gk > g_max {
                g_max = gk;
                k_star = k;
            }
        }
        if std::env::var_os("EPB_NPMLE_TRACE").is_some() {
            let mut top: Vec<(f64, usize)> =
                g.iter().enumerate().map(|(k, &gk)| (gk, k)).collect();
            top.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let top5: Vec<String> = top
                .iter()
                .take(5)
                .map(|(gk, k)| {
                    format!(
                        "{k}{}:{:.02e}",
                        if active.binary_search(k).is_ok() { "*" } else { "" },
                        gk - 1.0
                    )
                })
                .collect();
            eprintln!(
                "iter {iterations}: active {} gap {:.3e} ll {:.8} top[{}]",
                active.len(),
                g_max - 1.0,
                ll,
                top5.join(" ")
            );
        }
        if g_max - 1.0 <= tol.abs_tol {
            converged = true;
            break;
        }

        // Grow the support with the strongest violators, spread out by a
        // minimum index separation so an entire violating region is covered
        // in one pass; spurious additions are zeroed again by the restricted
        // solves.
        let mut violators: Vec<(f64, usize)> = (0..b)
            .filter(|&k| g[k] - 1.0 > tol.abs_tol && active.binary_search(&k).is_err())
            .map(|k| (g[k], k))
            .collect();
        violators.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let separation = (b / 128).max(1);
        let mut added: Vec<usize> = Vec::new();
        for (_, k) in violators {
            if added.len() >= GROW_MAX {
                break;
            }
            if added
                .iter()
                .all(|&a| a.abs_diff(k) >= separation)
            {
                added.push(k);
            }
        }
        if active.binary_search(&k_star).is_err() && !added.contains(&k_star) {
            added.push(k_star);
        }
        for k in added {
            let pos = active.binary_search(&k).unwrap_err();
            active.insert(pos, k);
            w_active.insert(pos, 0.0);
        }

        // Vertex exchange: move mass toward the worst violator along an
        // exact line search.
        let col: Vec<f64> = (0..n).map(|i| e[i * b + k_star]).collect();
        let gamma = vertex_line_search(&f, &col);
        if gamma > 0.0 {
            for wk in w_active.iter_mut() {
                *wk *= 1.0 - gamma;
            }
            let pos = active.binary_search(&k_star).unwrap();
            w_active[pos] += gamma;
            for (fi, &ci) in f.iter_mut().zip(&col) {
                *fi = (1.0 - gamma) * *fi + gamma * ci;
            }
        }
        rebuild_compact(&mut compact, &active);

        // Restricted solves (safeguarded Newton via NNLS with EM fallback)
        // until the support problem stops improving.
        for _ in 0..INNER_MAX {
            if iterations >= tol.max_iter {
                break 'outer;
            }
            iterations += 1;
            let ll_before = shifted_loglik(&f, base_ll);
            if let Some(&prev) = trace.last() {
                debug_assert!(
                    ll_before >= prev - 1e-8 * prev.abs().max(1.0),
                    "log-likelihood decreased: {prev} -> {ll_before}"
                );
            }
            trace.push(ll_before);
            if trace.len() > 10
                && ll_before - trace[trace.len() - 11] < tol.rel_tol * ll_before.abs().max(1.0)
            {
                stalled = true;
                break;
            }
            restricted_step(
                &compact,
                active.len(),
                &mut w_active,
                &mut f,
                ll_before,
                base_ll,
                inv_n,
                &mut scratch,
            );
            // Drop support points the solve zeroed out.
            if w_active.iter().any(|&wk| wk == 0.0) {
                let mut kept_active = Vec::with_capacity(active.len());
                let mut kept_w = Vec::with_capacity(active.len());
                for (j, &k) in active.iter().enumerate() {
                    if w_active[j] > 0.0 {
                        kept_active.push(k);
                        kept_w.push(w_active[j]);
                    }
                }
                active = kept_active;
                w_active = kept_w;
                rebuild_compact(&mut compact, &active);
            }
            let total: f64 = w_active.iter().sum();
            for wk in w_active.iter_mut() {
                *wk /= total;
            }
            mixture_densities(&compact, active.len(), &w_active, &mut f);
            let gain = shifted_loglik(&f, base_ll) - ll_before;
            // Exit once the support problem is solved to half the certificate
            // tolerance (or cannot improve further).
            let r: Vec<f64> = f
                .iter()
                .map(|&fi| inv_n / fi.max(f64::MIN_POSITIVE))
                .collect();
            let g_res = column_accumulate(&compact, active.len(), &r);
            let restricted_gap =
                g_res.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x)) - 1.0;
            if restricted_gap <= 0.5 * tol.abs_tol
                || gain <= 1e-13 * ll_before.abs().max(1.0)
            {
                break;
            }
        }
    }

    // Truncate, renormalize, and report diagnostics for exactly the weights
    // handed back.
    let mut w = vec![0.0; b];
    for (j, &k) in active.iter().enumerate() {
        w[k] = w_active[j];
    }
    let mut total = 0.0;
    for wk in w.iter_mut() {
        if *wk < FINAL_TRUNCATION {
            *wk = 0.0;
        } else {
            total += *wk;
        }
    }
    for wk in w.iter_mut() {
        *wk /= total;
    }
    mixture_densities(&e, b, &w, &mut f);
    let final_ll = shifted_loglik(&f, base_ll);
    let r: Vec<f64> = f
        .iter()
        .map(|&fi| inv_n / fi.max(f64::MIN_POSITIVE))
        .collect();
    let g = column_accumulate(&e, b, &r);
    let final_gap = g.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x)) - 1.0;
    converged = converged && final_gap <= tol.abs_tol || final_gap <= tol.abs_tol;

    Ok(GridFit {
        weights: w,
        loglik: final_ll,
        certificate_gap: final_gap,
        iterations,
        converged,
        loglik_trace: trace,
    })
}

pub fn default_tolerance() -> Tolerance {
    Tolerance {
        abs_tol: 1e-5,
        rel_tol: 1e-10,
        max_iter: 20_000,
    }
}

/// Features eligible for prior fitting: nondegenerate, with at least two
/// degrees of freedom per group as the empirical Bayes methods require.
fn eligible_features<'a>(
    summaries: &'a [FeatureSummary],
    method: &str,
) -> Result<Vec<&'a FeatureSummary>> {
    let mut out = Vec::with_capacity(summaries.len());
    for s in summaries {
        if s.is_degenerate() {
            continue;
        }
        if s.k_a < 3 || s.k_b < 3 {
            return Err(Error::config(format!(
                "{method} requires nu >= 2 (k >= 3) in both groups; feature '{}' has k_a={}, k_b={}",
                s.feature_id, s.k_a, s.k_b
            )));
        }
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::shape(
            "no nondegenerate features available for prior fitting".to_string(),
        ));
    }
    Ok(out)
}

/// Fits the variance-ratio prior on the sample ratios of all nondegenerate
/// features, on a log-uniform grid of `grid_size` points.
pub fn fit_variance_ratio_prior(
    summaries: &[FeatureSummary],
    grid_size: usize,
    tol: &Tolerance,
) -> Result<NpmleFit<DiscretePrior1D>> {
    let eligible = eligible_features(summaries, "the variance-ratio prior")?;
    let mut lhats = Vec::with_capacity(eligible.len());
    let mut nu_a = Vec::with_capacity(eligible.len());
    let mut nu_b = Vec::with_capacity(eligible.len());
    for s in &eligible {
        let d = behrens_fisher_stat(s);
        lhats.push(d.lambda_hat.expect("nondegenerate feature has a ratio"));
        nu_a.push(s.nu_a());
        nu_b.push(s.nu_b());
    }
    let grid = build_grid_1d(&lhats, grid_size)?;
    let matrix = vr_loglik_matrix(&lhats, &nu_a, &nu_b, &grid)?;
    let fit = fit_npmle(&matrix, tol)?;
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (k, &wk) in fit.weights.iter().enumerate() {
        if wk > 0.0 {
            support.push(grid[k]);
            weights.push(wk);
        }
    }
    Ok(NpmleFit {
        prior: DiscretePrior1D::new(support, weights)?,
        loglik: fit.loglik,
        certificate_gap: fit.certificate_gap,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Fits the dual-variance prior on the variance pairs of all nondegenerate
/// features, on a `grid_a x grid_b` log-uniform product grid.
pub fn fit_dual_variance_prior(
    summaries: &[FeatureSummary],
    grid_a: usize,
    grid_b: usize,
    tol: &Tolerance,
) -> Result<NpmleFit<DiscretePrior2D>> {
    let eligible = eligible_features(summaries, "the dual-variance prior")?;
    let s2_a: Vec<f64> = eligible.iter().map(|s| s.var_a).collect();
    let s2_b: Vec<f64> = eligible.iter().map(|s| s.var_b).collect();
    let nu_a: Vec<f64> = eligible.iter().map(|s| s.nu_a()).collect();
    let nu_b: Vec<f64> = eligible.iter().map(|s| s.nu_b()).collect();
    let (ga, gb) = build_grid_2d(&s2_a, &s2_b, grid_a, grid_b)?;
    let matrix = dv_loglik_matrix(&s2_a, &s2_b, &nu_a, &nu_b, &ga, &gb)?;
    let fit = fit_npmle(&matrix, tol)?;
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for (k, &wk) in fit.weights.iter().enumerate() {
        if wk > 0.0 {
            indices.push(k);
            weights.push(wk);
        }
    }
    Ok(NpmleFit {
        prior: DiscretePrior2D::new(ga, gb, indices, weights)?,
        loglik: fit.loglik,
        certificate_gap: fit.certificate_gap,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::rng::{CounterRng, StreamPurpose};

    #[test]
    fn grid_1d_collapsed_range() {
        let grid = build_grid_1d(&[1.0, 1.0, 1.0], 1000).unwrap();
        assert_eq!(grid, vec![1.0]);
    }

    #[test]
    fn grid_1d_log_midpoint() {
        let grid = build_grid_1d(&[0.1, 10.0], 3).unwrap();
        assert_eq!(grid.len(), 3);
        assert_eq!(grid[0], 0.1);
        assert!((grid[1] - 1.0).abs() < 1e-12);
        assert_eq!(grid[2], 10.0);
    }

    #[test]
    fn grid_1d_endpoints_only() {
        assert_eq!(build_grid_1d(&[2.0, 8.0], 2).unwrap(), vec![2.0, 8.0]);
    }

    #[test]
    fn grid_1d_rejects_empty() {
        assert!(build_grid_1d(&[], 10).is_err());
        assert!(build_grid_1d(&[f64::NAN, 0.0, f64::INFINITY], 10).is_err());
    }

    #[test]
    fn grid_2d_constant_axis_collapses() {
        let (ga, gb) = build_grid_2d(&[2.0, 2.0, 2.0], &[1.0, 4.0], 80, 4).unwrap();
        assert_eq!(ga, vec![2.0]);
        assert_eq!(gb.len(), 4);
    }

    #[test]
    fn grid_2d_endpoints_match_quantile_rule() {
        let values: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let (ga, _) = build_grid_2d(&values, &values, 10, 10).unwrap();
        // Hazen: h = 100*0.01 - 0.5 = 0.5 -> between x_(1)=1 and x_(2)=2
        let expected_lo = 1.0 + 0.5 * (2.0 - 1.0);
        assert!((ga[0] - expected_lo).abs() < 1e-12);
        assert!((ga[ga.len() - 1] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn single_column_fit_is_trivial() {
        let m = LogLikMatrix::new(vec![-1.0, -2.0, -0.5], 3, 1).unwrap();
        let fit = fit_npmle(&m, &default_tolerance()).unwrap();
        assert_eq!(fit.weights, vec![1.0]);
        assert_eq!(fit.certificate_gap, 0.0);
        assert!(fit.converged);
        assert!((fit.loglik - (-3.5)).abs() < 1e-12);
    }

    #[test]
    fn identical_rows_put_mass_on_argmax() {
        let row = [-3.0, -1.0, -0.2, -1.5, -4.0];
        let n = 40;
        let data: Vec<f64> = (0..n).flat_map(|_| row.iter().copied()).collect();
        let m = LogLikMatrix::new(data, n, row.len()).unwrap();
        let fit = fit_npmle(&m, &default_tolerance()).unwrap();
        assert!(fit.converged);
        assert!(fit.weights[2] > 1.0 - 1e-6, "weights: {:?}", fit.weights);
    }

    #[test]
    fn non_finite_rows_are_rejected_with_row_index() {
        let m = LogLikMatrix::new(vec![-1.0, f64::NAN, -2.0, -3.0], 2, 2).unwrap();
        let err = fit_npmle(&m, &default_tolerance()).unwrap_err();
        assert!(err.to_string().contains("row 0"), "{err}");

        let m = LogLikMatrix::new(
            vec![-1.0, -1.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
            2,
            2,
        )
        .unwrap();
        let err = fit_npmle(&m, &default_tolerance()).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn budget_exhaustion_reports_not_converged() {
        // an unreachable certificate target with a one-iteration budget
        let n = 400;
        let grid = build_grid_1d(&[0.05, 20.0], 400).unwrap();
        let mut data = Vec::new();
        for i in 0..n {
            let mut rng = CounterRng::from_parts(3, 0, i as u64, StreamPurpose::Lambda);
            let l = sample_scaled_f(&mut rng, if i % 2 == 0 { 0.5 } else { 2.0 }, 4);
            for &u in &grid {
                data.push(f_scaled_logpdf_raw(l.clamp(0.05, 20.0), u, 4.0, 4.0));
            }
        }
        let m = LogLikMatrix::new(data, n, grid.len()).unwrap();
        let tol = Tolerance {
            abs_tol: 1e-18,
            rel_tol: 1e-18,
            max_iter: 1,
        };
        let fit = fit_npmle(&m, &tol).unwrap();
        assert!(!fit.converged, "gap = {}", fit.certificate_gap);
        assert_eq!(fit.iterations, 1);
    }

    /// Draws lambda_hat = lambda * F_{nu,nu} via sums of squared normals.
    fn sample_scaled_f(rng: &mut CounterRng, lambda: f64, nu: usize) -> f64 {
        let mut chi_a = 0.0;
        let mut chi_b = 0.0;
        for _ in 0..nu {
            let z = rng.normal();
            chi_a += z * z;
        }
        for _ in 0..nu {
            let z = rng.normal();
            chi_b += z * z;
        }
        lambda * (chi_a / nu as f64) / (chi_b / nu as f64)
    }

    #[test]
    fn two_cluster_ratio_data_recovers_prior_shape() {
        let n = 5000;
        let nu = 4usize;
        let mut lhats = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = CounterRng::from_parts(99, 0, i as u64, StreamPurpose::Lambda);
            let lambda = if i % 2 == 0 { 0.5 } else { 2.0 };
            lhats.push(sample_scaled_f(&mut rng, lambda, nu));
        }
        let nus = vec![nu as f64; n];
        let grid = build_grid_1d(&lhats, 400).unwrap();
        let matrix = vr_loglik_matrix(&lhats, &nus, &nus, &grid).unwrap();
        let fit = fit_npmle(&matrix, &default_tolerance()).unwrap();
        assert!(fit.converged, "gap = {}", fit.certificate_gap);

        let mut support = Vec::new();
        let mut weights = Vec::new();
        for (k, &wk) in fit.weights.iter().enumerate() {
            if wk > 0.0 {
                support.push(grid[k]);
                weights.push(wk);
            }
        }
        let prior = DiscretePrior1D::new(support, weights).unwrap();
        // true prior: mean 1.25, CDF(1) = 0.5
        assert!((prior.mean() - 1.25).abs() < 0.1, "mean = {}", prior.mean());
        assert!((prior.cdf(1.0) - 0.5).abs() < 0.1, "cdf(1) = {}", prior.cdf(1.0));
    }

    #[test]
    fn trace_is_nondecreasing_and_certificate_sound() {
        let n = 300;
        let mut lhats = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = CounterRng::from_parts(7, 1, i as u64, StreamPurpose::Lambda);
            let lambda = if i % 3 == 0 { 0.3 } else { 1.7 };
            lhats.push(sample_scaled_f(&mut rng, lambda, 4));
        }
        let nus = vec![4.0; n];
        let grid = build_grid_1d(&lhats, 120).unwrap();
        let matrix = vr_loglik_matrix(&lhats, &nus, &nus, &grid).unwrap();
        let fit = fit_npmle(&matrix, &default_tolerance()).unwrap();
        for pair in fit.loglik_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-7 * pair[0].abs().max(1.0));
        }
        assert!(fit.converged);
        assert!(fit.certificate_gap <= 1e-5);

        // weak duality: no simplex vector beats the fit by more than n * gap
        let slack = n as f64 * (fit.certificate_gap.max(0.0) + 1e-12);
        let loglik_of = |w: &[f64]| -> f64 {
            (0..n)
                .map(|i| {
                    let fi: f64 = matrix
                        .row(i)
                        .iter()
                        .zip(w)
                        .map(|(&l, &wk)| (l).exp() * wk)
                        .sum();
                    fi.max(f64::MIN_POSITIVE).ln()
                })
                .sum()
        };
        let fitted_ll = loglik_of(&fit.weights);
        let mut state = 0xDEADBEEFu64;
        for _ in 0..40 {
            let mut w: Vec<f64> = (0..grid.len())
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) + 1e-12
                })
                .collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            assert!(loglik_of(&w) <= fitted_ll + slack);
        }
    }

    #[test]
    fn row_shift_invariance_of_fitted_mixture() {
        let n = 200;
        let mut lhats = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = CounterRng::from_parts(21, 0, i as u64, StreamPurpose::Lambda);
            lhats.push(sample_scaled_f(&mut rng, 1.0, 4));
        }
        let nus = vec![4.0; n];
        let grid = build_grid_1d(&lhats, 60).unwrap();
        let base = vr_loglik_matrix(&lhats, &nus, &nus, &grid).unwrap();
        let shifted_data: Vec<f64> = (0..n)
            .flat_map(|i| {
                let c = 0.37 * (i % 11) as f64 - 1.5;
                base.row(i).iter().map(move |&v| v + c).collect::<Vec<_>>()
            })
            .collect();
        let shifted = LogLikMatrix::new(shifted_data, n, grid.len()).unwrap();

        let tol = default_tolerance();
        let fit_a = fit_npmle(&base, &tol).unwrap();
        let fit_b = fit_npmle(&shifted, &tol).unwrap();
        // compare the fitted mixture densities at every observation
        for i in 0..n {
            let fa: f64 = base
                .row(i)
                .iter()
                .zip(&fit_a.weights)
                .map(|(&l, &w)| l.exp() * w)
                .sum();
            let fb: f64 = base
                .row(i)
                .iter()
                .zip(&fit_b.weights)
                .map(|(&l, &w)| l.exp() * w)
                .sum();
            assert!(
                (fa - fb).abs() <= 1e-9 * fa.abs().max(1e-12),
                "row {i}: {fa} vs {fb}"
            );
        }
    }

    #[test]
    fn scale_equivariance_at_factor_two() {
        let n = 200;
        let mut lhats = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = CounterRng::from_parts(5, 3, i as u64, StreamPurpose::Lambda);
            let lambda = if i % 2 == 0 { 0.6 } else { 1.9 };
            lhats.push(sample_scaled_f(&mut rng, lambda, 6));
        }
        let nus = vec![6.0; n];
        let grid = build_grid_1d(&lhats, 80).unwrap();
        let matrix = vr_loglik_matrix(&lhats, &nus, &nus, &grid).unwrap();

        let scaled_lhats: Vec<f64> = lhats.iter().map(|&l| 2.0 * l).collect();
        let scaled_grid: Vec<f64> = grid.iter().map(|&u| 2.0 * u).collect();
        let scaled_matrix = vr_loglik_matrix(&scaled_lhats, &nus, &nus, &scaled_grid).unwrap();

        let tol = default_tolerance();
        let fit = fit_npmle(&matrix, &tol).unwrap();
        let scaled_fit = fit_npmle(&scaled_matrix, &tol).unwrap();
        for (k, (&wa, &wb)) in fit.weights.iter().zip(&scaled_fit.weights).enumerate() {
            assert!(
                (wa - wb).abs() < 1e-6,
                "weight {k} differs: {wa} vs {wb}"
            );
        }
    }

    #[test]
    fn prior_validation_rejects_bad_simplex() {
        assert!(DiscretePrior1D::new(vec![1.0, 2.0], vec![0.6, 0.5]).is_err());
        assert!(DiscretePrior1D::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscretePrior1D::new(vec![1.0, 2.0], vec![-0.1, 1.1]).is_err());
        assert!(DiscretePrior2D::new(vec![1.0], vec![1.0], vec![1], vec![1.0]).is_err());
        assert!(DiscretePrior2D::from_dense(
            vec![1.0, 2.0],
            vec![3.0],
            &[0.5, 0.5]
        )
        .is_ok());
    }

    #[test]
    fn high_level_vr_fit_on_summaries() {
        let mut summaries = Vec::new();
        for i in 0..400 {
            let mut rng = CounterRng::from_parts(11, 0, i as u64, StreamPurpose::Lambda);
            let lambda = if i % 2 == 0 { 0.5 } else { 2.0 };
            let lhat = sample_scaled_f(&mut rng, lambda, 4);
            summaries.push(
                FeatureSummary::new(format!("f{i}"), 0.0, lhat, 5, 0.0, 1.0, 5).unwrap(),
            );
        }
        // degenerate feature is skipped, not fatal
        summaries.push(FeatureSummary::new("zv", 0.0, 0.0, 5, 0.0, 1.0, 5).unwrap());
        let fit = fit_variance_ratio_prior(&summaries, 200, &default_tolerance()).unwrap();
        assert!(fit.converged);
        let total: f64 = fit.prior.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-10);

        // K = 2 anywhere is rejected for the empirical Bayes methods
        let too_small = vec![FeatureSummary::new("f", 0.0, 1.0, 2, 0.0, 1.0, 5).unwrap()];
        assert!(fit_variance_ratio_prior(&too_small, 10, &default_tolerance()).is_err());
    }
}
