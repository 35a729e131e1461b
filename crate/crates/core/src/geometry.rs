//! Gaussian mean width estimation, closed-form width and region-count bounds
//! for ReLU network ranges, and exact orthant counting.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;
use crate::structures::{enumerate_regions, top_s_support, GnnModel, LatentOptions, StructureSet};

/// Which normalized set the width is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthSet {
    /// `T ∩ S^{n-1}`
    Cone,
    /// `(T − T) ∩ S^{n-1}`
    Difference,
}

impl WidthSet {
    pub fn label(self) -> &'static str {
        match self {
            WidthSet::Cone => "t",
            WidthSet::Difference => "t-t",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupSolver {
    Exact,
    /// First-order search in latent space; a lower estimate.
    LatentApprox,
    /// Exact sup over a union of subspaces covering the set; an upper estimate.
    RegionCover,
}

impl SupSolver {
    pub fn label(self) -> &'static str {
        match self {
            SupSolver::Exact => "exact",
            SupSolver::LatentApprox => "latent-approx",
            SupSolver::RegionCover => "region-cover",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub num_gaussians: usize,
    pub sup_solver: SupSolver,
}

pub const MIN_GAUSSIANS: usize = 100;

fn l2_top(g: &DVector<f64>, s: usize) -> f64 {
    top_s_support(g, s).iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt()
}

fn proj_norm(basis: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    basis.tr_mul(g).norm()
}

/// Orthonormal bases of all pairwise sums `U_i + U_j`, `i ≤ j`.
pub fn pairwise_sum_bases(bases: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for i in 0..bases.len() {
        out.push(bases[i].clone());
        for j in i + 1..bases.len() {
            let joined = DMatrix::from_fn(bases[i].nrows(), bases[i].ncols() + bases[j].ncols(), |r, c| {
                if c < bases[i].ncols() {
                    bases[i][(r, c)]
                } else {
                    bases[j][(r, c - bases[i].ncols())]
                }
            });
            out.push(linalg::orthonormal_basis(&joined, linalg::RANK_RTOL));
        }
    }
    out
}

fn union_sup(bases: &[DMatrix<f64>], g: &DVector<f64>) -> f64 {
    bases.iter().map(|b| proj_norm(b, g)).fold(0.0, f64::max)
}

enum SupKind<'a> {
    Bases(Vec<DMatrix<f64>>),
    Sparse(usize),
    Latent(&'a GnnModel, LatentOptions),
}

fn estimate<F>(num_gaussians: usize, n: usize, seed: u64, solver: SupSolver, sup: F) -> WidthEstimate
where
    F: Fn(&DVector<f64>, u64) -> f64 + Sync,
{
    let values: Vec<f64> = (0..num_gaussians as u64)
        .into_par_iter()
        .map(|i| {
            let child = seed::derive(seed, i);
            let g = linalg::gaussian_vector(n, &mut seed::rng(child));
            sup(&g, child)
        })
        .collect();
    let (mean, stderr) = linalg::mean_stderr(&values);
    WidthEstimate { mean, stderr, num_gaussians, sup_solver: solver }
}

/// Monte Carlo estimate of the Gaussian mean width of `T ∩ S` or
/// `(T − T) ∩ S`. Network ranges use `latent` for the supremum search.
pub fn width_mc(
    t: &StructureSet,
    which: WidthSet,
    num_gaussians: usize,
    seed: u64,
    latent: &LatentOptions,
) -> Result<WidthEstimate> {
    if num_gaussians < MIN_GAUSSIANS {
        return Err(Error::Options(format!("width estimation needs at least {MIN_GAUSSIANS} Gaussians")));
    }
    let n = t.ambient_dim();
    let kind = match (t, which) {
        (StructureSet::SparseCone { s, .. }, WidthSet::Cone) => SupKind::Sparse(*s),
        (StructureSet::SparseCone { n, s }, WidthSet::Difference) => SupKind::Sparse((2 * s).min(*n)),
        (StructureSet::Subspace { basis }, _) => SupKind::Bases(vec![basis.clone()]),
        (StructureSet::Union { bases }, WidthSet::Cone) => SupKind::Bases(bases.clone()),
        (StructureSet::Union { bases }, WidthSet::Difference) => SupKind::Bases(pairwise_sum_bases(bases)),
        (StructureSet::GnnRange { model }, _) => {
            if latent.restarts == 0 {
                return Err(Error::Options("latent-approx width needs at least one restart".into()));
            }
            SupKind::Latent(model, *latent)
        }
    };
    Ok(match kind {
        SupKind::Sparse(s) => estimate(num_gaussians, n, seed, SupSolver::Exact, |g, _| l2_top(g, s)),
        SupKind::Bases(bases) => estimate(num_gaussians, n, seed, SupSolver::Exact, |g, _| union_sup(&bases, g)),
        SupKind::Latent(model, opts) => estimate(num_gaussians, n, seed, SupSolver::LatentApprox, |g, child| {
            latent_sup(model, g, which, &opts, child)
        }),
    })
}

/// Width of a finite set of directions (each normalized to unit length).
pub fn width_of_directions(points: &[DVector<f64>], num_gaussians: usize, seed: u64) -> Result<WidthEstimate> {
    if num_gaussians < MIN_GAUSSIANS {
        return Err(Error::Options(format!("width estimation needs at least {MIN_GAUSSIANS} Gaussians")));
    }
    let Some(first) = points.first() else {
        return Err(Error::InvalidSpec("need at least one direction".into()));
    };
    let units: Vec<DVector<f64>> = points
        .iter()
        .map(|p| {
            let norm = p.norm();
            if norm > 0.0 {
                Ok(p / norm)
            } else {
                Err(Error::Domain("zero direction".into()))
            }
        })
        .collect::<Result<_>>()?;
    Ok(estimate(num_gaussians, first.len(), seed, SupSolver::Exact, |g, _| {
        units.iter().map(|u| u.dot(g)).fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Upper estimate of a network range's width: the exact width of the union
/// of region image spans (or their pairwise sums) that covers the set.
pub fn width_region_cover(model: &GnnModel, which: WidthSet, num_gaussians: usize, seed: u64) -> Result<WidthEstimate> {
    if num_gaussians < MIN_GAUSSIANS {
        return Err(Error::Options(format!("width estimation needs at least {MIN_GAUSSIANS} Gaussians")));
    }
    let spans: Vec<DMatrix<f64>> = enumerate_regions(model)?
        .into_iter()
        .filter(|r| r.dim() > 0)
        .map(|r| r.basis)
        .collect();
    let bases = match which {
        WidthSet::Cone => spans,
        WidthSet::Difference => pairwise_sum_bases(&spans),
    };
    Ok(estimate(num_gaussians, model.output_dim(), seed, SupSolver::RegionCover, |g, _| {
        union_sup(&bases, g)
    }))
}

fn normalized_value_grad(v: &DVector<f64>, g: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
    let norm = v.norm();
    if norm <= 1e-300 {
        return None;
    }
    let dot = v.dot(g);
    let val = dot / norm;
    let grad = g / norm - v * (dot / (norm * norm * norm));
    Some((val, grad))
}

/// Latent-space ascent on `⟨v, g⟩ / ‖v‖` over `v = G(z)` (or
/// `G(z₁) − G(z₂)`). Returns 0 when every restart lands on `v = 0`.
fn latent_sup(model: &GnnModel, g: &DVector<f64>, which: WidthSet, opts: &LatentOptions, seed: u64) -> f64 {
    let k = model.latent_dim();
    let dim = match which {
        WidthSet::Cone => k,
        WidthSet::Difference => 2 * k,
    };
    let eval = |z: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        match which {
            WidthSet::Cone => {
                let (v, jac) = model.forward_with_jacobian(z).ok()?;
                let (val, dv) = normalized_value_grad(&v, g)?;
                Some((val, jac.tr_mul(&dv)))
            }
            WidthSet::Difference => {
                let z1 = z.rows(0, k).into_owned();
                let z2 = z.rows(k, k).into_owned();
                let (v1, j1) = model.forward_with_jacobian(&z1).ok()?;
                let (v2, j2) = model.forward_with_jacobian(&z2).ok()?;
                let (val, dv) = normalized_value_grad(&(v1 - v2), g)?;
                let mut grad = DVector::zeros(2 * k);
                grad.rows_mut(0, k).copy_from(&j1.tr_mul(&dv));
                grad.rows_mut(k, k).copy_from(&(-j2.tr_mul(&dv)));
                Some((val, grad))
            }
        }
    };
    let mut best = f64::NEG_INFINITY;
    for r in 0..opts.restarts {
        let mut rng = seed::stream(seed, r as u64);
        let mut z = linalg::unit_vector(dim, &mut rng);
        let Some((mut val, mut grad)) = eval(&z) else { continue };
        let mut step = 1.0;
        for _ in 0..opts.max_iters {
            if grad.norm() == 0.0 {
                break;
            }
            let mut moved = false;
            while step > 1e-12 {
                let trial = &z + &grad * step;
                let trial = &trial / trial.norm();
                if let Some((v2, g2)) = eval(&trial) {
                    if v2 > val {
                        let gain = v2 - val;
                        z = trial;
                        val = v2;
                        grad = g2;
                        moved = gain > opts.rel_tol * val.abs().max(1e-12);
                        step *= 2.0;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        best = best.max(val);
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnnWidthBound {
    /// `[(2e/k)^d ∏ p_i]^k`; infinite if it overflows `f64`.
    pub region_count_bound: f64,
    pub log_region_count_bound: f64,
    /// `√(2k) + √(2kd log(2e p′/k))` with `p′` the geometric mean width.
    pub width_bound: f64,
    /// `k` exceeds some layer width; the bound still holds but is loose.
    pub k_exceeds_width: bool,
}

pub fn gnn_width_bound(k: usize, widths: &[usize]) -> Result<GnnWidthBound> {
    if k == 0 || widths.is_empty() || widths.contains(&0) {
        return Err(Error::InvalidSpec("need k ≥ 1 and positive layer widths".into()));
    }
    let kf = k as f64;
    let d = widths.len() as f64;
    let sum_log_p: f64 = widths.iter().map(|&p| (p as f64).ln()).sum();
    let log_two_e_over_k = (2.0 * std::f64::consts::E / kf).ln();
    let log_count = kf * (d * log_two_e_over_k + sum_log_p);
    let log_p_geo = sum_log_p / d;
    let inner = 2.0 * kf * d * (log_two_e_over_k + log_p_geo);
    Ok(GnnWidthBound {
        region_count_bound: log_count.exp(),
        log_region_count_bound: log_count,
        width_bound: (2.0 * kf).sqrt() + inner.max(0.0).sqrt(),
        k_exceeds_width: widths.iter().any(|&p| p < k),
    })
}

pub fn gnn_width_bound_for(model: &GnnModel) -> GnnWidthBound {
    gnn_width_bound(model.latent_dim(), &model.widths()).expect("models have valid widths")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrthantMode {
    /// All `2ⁿ` sign vectors, each checked by linear programming.
    Exhaustive,
    /// Sign vectors of random subspace points, each verified; a lower bound.
    Sampled { samples: usize, seed: u64 },
}

pub const MAX_EXHAUSTIVE_ORTHANT_DIM: usize = 20;
const ORTHANT_FEAS_TOL: f64 = 1e-9;

/// Whether the span of `basis` has a nonzero point in the closed orthant
/// with the given signs (`true` = nonnegative coordinate).
pub fn touches_orthant(basis: &DMatrix<f64>, signs: &[bool]) -> bool {
    let k = basis.ncols();
    if k == 0 {
        return false;
    }
    let sign = |i: usize| if signs[i] { 1.0 } else { -1.0 };
    let rows: Vec<Vec<f64>> = (0..basis.nrows())
        .map(|i| (0..k).map(|j| -sign(i) * basis[(i, j)]).collect())
        .collect();
    let rhs = vec![0.0; rows.len()];
    let c: Vec<f64> = (0..k).map(|j| (0..basis.nrows()).map(|i| sign(i) * basis[(i, j)]).sum()).collect();
    match crate::lp::maximize_in_box(&c, &rows, &rhs) {
        Some((_, value)) => value > ORTHANT_FEAS_TOL,
        None => false,
    }
}

/// Number of closed orthants of ℝⁿ containing a nonzero point of the span
/// of `basis` (n x k, orthonormal columns).
pub fn count_orthants(basis: &DMatrix<f64>, mode: OrthantMode) -> Result<usize> {
    let n = basis.nrows();
    match mode {
        OrthantMode::Exhaustive => {
            if n > MAX_EXHAUSTIVE_ORTHANT_DIM {
                return Err(Error::ScaleGuard(format!(
                    "exhaustive orthant counting supports n ≤ {MAX_EXHAUSTIVE_ORTHANT_DIM}, got {n}"
                )));
            }
            if n == 0 {
                return Ok(0);
            }
            // s and −s are hit together, so fix the last sign
            let half = 1u64 << (n - 1);
            let hits = (0..half)
                .into_par_iter()
                .filter(|&mask| {
                    let signs: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                    touches_orthant(basis, &signs)
                })
                .count();
            Ok(2 * hits)
        }
        OrthantMode::Sampled { samples, seed } => {
            if n > 63 {
                return Err(Error::ScaleGuard("sampled orthant counting supports n ≤ 63".into()));
            }
            let mut rng = seed::rng(seed);
            let mut seen = std::collections::BTreeSet::new();
            for _ in 0..samples {
                let v = basis * linalg::gaussian_vector(basis.ncols(), &mut rng);
                let scale = v.amax();
                if scale == 0.0 {
                    continue;
                }
                let mut masks = vec![0u64];
                for i in 0..n {
                    if v[i].abs() <= 1e-12 * scale {
                        if masks.len() < 1024 {
                            let extra: Vec<u64> = masks.iter().map(|m| m | 1 << i).collect();
                            masks.extend(extra);
                        }
                    } else if v[i] > 0.0 {
                        masks.iter_mut().for_each(|m| *m |= 1 << i);
                    }
                }
                seen.extend(masks);
            }
            Ok(seen
                .into_iter()
                .filter(|&mask| {
                    let signs: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                    touches_orthant(basis, &signs)
                })
                .count())
        }
    }
}

/// `2^k C(n, k)`.
pub fn orthant_bound(n: usize, k: usize) -> f64 {
    let mut binom = 1.0;
    for i in 0..k.min(n) {
        binom = binom * (n - i) as f64 / (i + 1) as f64;
    }
    if k > n {
        binom = 0.0;
    }
    2f64.powi(k as i32) * binom
}

/// Dimension of the span of the positive-sign rows of `basis`, i.e. of the
/// ReLU image of the subspace restricted to that orthant.
pub fn relu_image_dim(basis: &DMatrix<f64>, signs: &[bool]) -> Result<usize> {
    if signs.len() != basis.nrows() {
        return Err(Error::Dimension(format!(
            "{} signs for a basis in dimension {}",
            signs.len(),
            basis.nrows()
        )));
    }
    let mut masked = basis.clone();
    for (i, &positive) in signs.iter().enumerate() {
        if !positive {
            masked.row_mut(i).fill(0.0);
        }
    }
    Ok(linalg::numerical_rank(&masked, linalg::RANK_RTOL))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionWidthCheck {
    /// Width of the union of the normalized subspaces.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Largest member width, estimated from the same Gaussians.
    pub max_width: f64,
    pub sqrt_log_n: f64,
    pub member_widths: Vec<f64>,
}

impl UnionWidthCheck {
    /// `(lhs − maxWidth) / √log N`; NaN for a single member.
    pub fn excess_ratio(&self) -> f64 {
        (self.lhs - self.max_width) / self.sqrt_log_n
    }
}

/// Draws random subspaces with the given dimensions and compares the width
/// of their union with the largest member width.
pub fn union_width_check(dims: &[usize], n: usize, num_gaussians: usize, seed: u64) -> Result<UnionWidthCheck> {
    if dims.is_empty() || dims.iter().any(|&d| d == 0 || d > n) {
        return Err(Error::InvalidSpec("member dimensions must lie in 1..=n".into()));
    }
    let mut rng = seed::stream(seed, 0);
    let bases: Vec<DMatrix<f64>> = dims.iter().map(|&d| linalg::random_orthonormal(n, d, &mut rng)).collect();
    union_width_check_bases(&bases, num_gaussians, seed::derive(seed, 1))
}

pub fn union_width_check_bases(bases: &[DMatrix<f64>], num_gaussians: usize, seed: u64) -> Result<UnionWidthCheck> {
    if num_gaussians < MIN_GAUSSIANS {
        return Err(Error::Options(format!("width estimation needs at least {MIN_GAUSSIANS} Gaussians")));
    }
    let Some(first) = bases.first() else {
        return Err(Error::InvalidSpec("need at least one subspace".into()));
    };
    let n = first.nrows();
    let rows: Vec<Vec<f64>> = (0..num_gaussians as u64)
        .into_par_iter()
        .map(|i| {
            let g = linalg::gaussian_vector(n, &mut seed::stream(seed, i));
            bases.iter().map(|b| proj_norm(b, &g)).collect()
        })
        .collect();
    let maxes: Vec<f64> = rows.iter().map(|r| r.iter().copied().fold(0.0, f64::max)).collect();
    let (lhs, lhs_stderr) = linalg::mean_stderr(&maxes);
    let member_widths: Vec<f64> = (0..bases.len())
        .map(|j| linalg::mean_stderr(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()).0)
        .collect();
    let max_width = member_widths.iter().copied().fold(0.0, f64::max);
    Ok(UnionWidthCheck {
        lhs,
        lhs_stderr,
        max_width,
        sqrt_log_n: (bases.len() as f64).ln().sqrt(),
        member_widths,
    })
}

/// `sr(B) / w(T′)²`.
pub fn oversampling_factor(b: &DMatrix<f64>, width_tprime: f64) -> Result<f64> {
    if !(width_tprime > 0.0) {
        return Err(Error::Domain("oversampling factor needs a positive width".into()));
    }
    Ok(crate::ensembles::stable_rank(b)? / (width_tprime * width_tprime))
}
