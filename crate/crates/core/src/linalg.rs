//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::seed::Rng;

/// Relative threshold used for numerical rank decisions.
pub const RANK_RTOL: f64 = 1e-9;

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Number of singular values above `rtol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = singular_values(m);
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > rtol * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis of the column span, with rank decided at `rtol`.
/// Returns an `nrows x 0` matrix for a zero span.
pub fn orthonormal_basis(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let mut idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rtol * top)
        .collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    DMatrix::from_fn(n, idx.len(), |r, c| u[(r, idx[c])])
}

/// Largest deviation of `QᵀQ` from the identity.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    // column-major fill keeps the draw order fixed
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(len: usize, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Uniform random unit vector. `len` must be positive.
pub fn unit_vector(len: usize, rng: &mut Rng) -> DVector<f64> {
    loop {
        let v = gaussian_vector(len, rng);
        let norm = v.norm();
        if norm > 1e-300 {
            return v / norm;
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal of R forced positive.
pub fn haar_orthogonal(n: usize, rng: &mut Rng) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random `n x d` matrix with orthonormal columns spanning a uniformly
/// distributed `d`-dimensional subspace.
pub fn random_orthonormal(n: usize, d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let g = gaussian_matrix(n, d, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Minimum-norm least-squares solution of `m c ≈ y`.
pub fn least_squares(m: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if m.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (top * 1e-13).max(f64::MIN_POSITIVE);
    svd.solve(y, eps).expect("both factors were computed")
}

/// Largest singular value by power iteration on `MᵀM`, started from a
/// fixed all-ones vector so the estimate is deterministic.
pub fn power_sigma_max(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for i in 0..iters.max(1) {
        let mv = m * &v;
        let w = m.tr_mul(&mv);
        let norm = w.norm();
        if norm == 0.0 {
            // all-ones was in the null space; fall back to a coordinate vector
            if i == 0 {
                v = DVector::from_fn(n, |j, _| if j == 0 { 1.0 } else { 0.0 });
                continue;
            }
            break;
        }
        sigma = mv.norm();
        v = w / norm;
    }
    sigma.max((m * &v).norm())
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Median of a slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Pairwise summation; the result does not depend on how the slice was
/// produced, only on its order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error (sample std / √N) with pairwise summation.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
