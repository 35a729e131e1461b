//! Constrained least squares over a structure set (the generalized Lasso),
//! reporting the optimization gap alongside the estimate.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::Rng;
use crate::structures::{self, hard_threshold, latent_search, LatentOptions, StructureSet};

pub const MAX_UNION_MEMBERS: usize = 10_000;
/// Largest ambient dimension for which sparse solves are certified by
/// enumerating every support.
pub const EXHAUSTIVE_SPARSE_MAX_N: usize = 12;
/// Membership tolerance for estimates of exact variants.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SubspaceLeastSquares,
    UnionLeastSquares,
    HardThresholding,
    LatentDescent,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::SubspaceLeastSquares => "subspace-ls",
            Strategy::UnionLeastSquares => "union-ls",
            Strategy::HardThresholding => "iht-debias",
            Strategy::LatentDescent => "latent-descent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Iteration budget for hard thresholding.
    pub max_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub rel_tol: f64,
    pub power_iters: usize,
    /// Follow hard thresholding with a single-swap support search.
    pub swap_refine: bool,
    /// Restarts, iterations and seed for network ranges.
    pub latent: LatentOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 500,
            rel_tol: 1e-12,
            power_iters: 100,
            swap_refine: true,
            latent: LatentOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub xhat: DVector<f64>,
    /// `‖y − M x̂‖²`
    pub objective: f64,
    /// Upper bound on `objective − min_{x∈T} ‖y − M x‖²` (the squared gap ε²).
    pub eps_upper: f64,
    /// Whether `eps_upper` is certified or a heuristic estimate.
    pub eps_certified: bool,
    pub iterations: usize,
    pub converged: bool,
    pub strategy: Strategy,
    /// Objective after every accepted hard-thresholding step.
    pub trace: Vec<f64>,
}

impl SolveReport {
    /// ε itself, the square root of the gap bound.
    pub fn eps(&self) -> f64 {
        self.eps_upper.max(0.0).sqrt()
    }

    pub fn csv_header() -> &'static str {
        "objective,eps_upper,eps_certified,iterations,converged,strategy"
    }

    pub fn csv_row(&self) -> String {
        use crate::fmt::g17;
        format!(
            "{},{},{},{},{},{}",
            g17(self.objective),
            g17(self.eps_upper),
            self.eps_certified,
            self.iterations,
            self.converged,
            self.strategy.label()
        )
    }
}

fn objective(y: &DVector<f64>, m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (y - m * x).norm_squared()
}

fn check_problem(y: &DVector<f64>, m: &DMatrix<f64>, t: &StructureSet, opts: &SolveOptions) -> Result<()> {
    if m.nrows() != y.len() || m.ncols() != t.ambient_dim() {
        return Err(Error::Dimension(format!(
            "M is {}x{}, y has length {}, structure lives in dimension {}",
            m.nrows(),
            m.ncols(),
            y.len(),
            t.ambient_dim()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurements y".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("measurement matrix".into()));
    }
    if opts.max_iters == 0 || opts.latent.max_iters == 0 {
        return Err(Error::Options("iteration budget must be positive".into()));
    }
    Ok(())
}

/// Least squares restricted to the span of `basis`; returns the point and
/// its objective.
fn subspace_ls(y: &DVector<f64>, m: &DMatrix<f64>, basis: &DMatrix<f64>) -> (DVector<f64>, f64) {
    if basis.ncols() == 0 {
        return (DVector::zeros(m.ncols()), y.norm_squared());
    }
    let reduced = m * basis;
    let c = linalg::least_squares(&reduced, y);
    let x = basis * c;
    let obj = objective(y, m, &x);
    (x, obj)
}

fn columns(m: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), support.len(), |r, c| m[(r, support[c])])
}

/// Least squares on a fixed support.
pub fn support_ls(y: &DVector<f64>, m: &DMatrix<f64>, support: &[usize]) -> (DVector<f64>, f64) {
    let mut x = DVector::zeros(m.ncols());
    if !support.is_empty() {
        let c = linalg::least_squares(&columns(m, support), y);
        for (j, &i) in support.iter().enumerate() {
            x[i] = c[j];
        }
    }
    let obj = objective(y, m, &x);
    (x, obj)
}

/// Minimum objective over every support of size `s`.
pub fn exhaustive_sparse_min(y: &DVector<f64>, m: &DMatrix<f64>, s: usize) -> f64 {
    let n = m.ncols();
    let mut best = f64::INFINITY;
    let mut support: Vec<usize> = (0..s).collect();
    loop {
        best = best.min(support_ls(y, m, &support).1);
        // next combination in lexicographic order
        let mut i = s;
        while i > 0 && support[i - 1] == n - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        support[i - 1] += 1;
        for j in i..s {
            support[j] = support[j - 1] + 1;
        }
    }
}

fn support_of(x: &DVector<f64>) -> Vec<usize> {
    (0..x.len()).filter(|&i| x[i] != 0.0).collect()
}

fn iht(y: &DVector<f64>, m: &DMatrix<f64>, s: usize, opts: &SolveOptions) -> SolveReport {
    let sigma = linalg::power_sigma_max(m, opts.power_iters);
    let mut step = if sigma > 0.0 { 1.0 / (sigma * sigma) } else { 1.0 };
    let mut x = DVector::zeros(m.ncols());
    let mut obj = y.norm_squared();
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        if obj == 0.0 {
            converged = true;
            break;
        }
        let grad = m.tr_mul(&(y - m * &x));
        let mut cand = hard_threshold(&(&x + &grad * step), s);
        let mut cand_obj = objective(y, m, &cand);
        // power iteration can underestimate σ_max; shrink until monotone
        while cand_obj > obj && step > 1e-300 {
            step *= 0.5;
            cand = hard_threshold(&(&x + &grad * step), s);
            cand_obj = objective(y, m, &cand);
        }
        if cand_obj > obj {
            break;
        }
        let same_support = support_of(&cand) == support_of(&x);
        let rel = (obj - cand_obj) / obj;
        x = cand;
        obj = cand_obj;
        trace.push(obj);
        if same_support && rel < opts.rel_tol {
            converged = true;
            break;
        }
    }
    // debias on the identified support
    let support = support_of(&x);
    let (xd, objd) = support_ls(y, m, &support);
    let (mut xhat, mut objective) = if objd <= obj { (xd, objd) } else { (x, obj) };
    if opts.swap_refine {
        (xhat, objective) = swap_refine(y, m, s, xhat, objective, &mut trace);
    }
    SolveReport {
        xhat,
        objective,
        eps_upper: 0.0,
        eps_certified: false,
        iterations,
        converged,
        strategy: Strategy::HardThresholding,
        trace,
    }
}

/// Local search over supports: replace one support index by one outside
/// index whenever the least-squares objective strictly drops.
fn swap_refine(
    y: &DVector<f64>,
    m: &DMatrix<f64>,
    s: usize,
    mut x: DVector<f64>,
    mut obj: f64,
    trace: &mut Vec<f64>,
) -> (DVector<f64>, f64) {
    let n = m.ncols();
    let mut support = support_of(&x);
    // pad a short support with the strongest correlations
    if support.len() < s {
        let corr = m.tr_mul(&(y - m * &x));
        let mut extra: Vec<usize> = (0..n).filter(|i| !support.contains(i)).collect();
        extra.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
        support.extend(extra.into_iter().take(s - support.len()));
        support.sort_unstable();
        let (xp, objp) = support_ls(y, m, &support);
        if objp <= obj {
            x = xp;
            obj = objp;
            trace.push(obj);
        }
    }
    let mut improved = true;
    while improved && obj > 0.0 {
        improved = false;
        'scan: for pos in 0..support.len() {
            for j in 0..n {
                if support.contains(&j) {
                    continue;
                }
                let mut cand = support.clone();
                cand[pos] = j;
                cand.sort_unstable();
                let (xc, objc) = support_ls(y, m, &cand);
                if objc < obj * (1.0 - 1e-12) {
                    x = xc;
                    obj = objc;
                    support = cand;
                    trace.push(obj);
                    improved = true;
                    break 'scan;
                }
            }
        }
    }
    (x, obj)
}

/// Solves `min ‖y − M x‖²` over `x ∈ T`.
pub fn solve_lasso(y: &DVector<f64>, m: &DMatrix<f64>, t: &StructureSet, opts: &SolveOptions) -> Result<SolveReport> {
    check_problem(y, m, t, opts)?;
    let exact = |xhat: DVector<f64>, objective: f64, strategy| SolveReport {
        xhat,
        objective,
        eps_upper: 0.0,
        eps_certified: true,
        iterations: 1,
        converged: true,
        strategy,
        trace: Vec::new(),
    };
    match t {
        StructureSet::Subspace { basis } => {
            let (x, obj) = subspace_ls(y, m, basis);
            Ok(exact(x, obj, Strategy::SubspaceLeastSquares))
        }
        StructureSet::Union { bases } => {
            if bases.len() > MAX_UNION_MEMBERS {
                return Err(Error::ScaleGuard(format!(
                    "union solver handles at most {MAX_UNION_MEMBERS} members, got {}",
                    bases.len()
                )));
            }
            let fits: Vec<(DVector<f64>, f64)> = bases.par_iter().map(|b| subspace_ls(y, m, b)).collect();
            let (x, obj) = fits
                .into_iter()
                .reduce(|a, b| if b.1 < a.1 { b } else { a })
                .expect("union is non-empty");
            Ok(exact(x, obj, Strategy::UnionLeastSquares))
        }
        StructureSet::SparseCone { n, s } => {
            let mut report = iht(y, m, *s, opts);
            if *n <= EXHAUSTIVE_SPARSE_MAX_N {
                let best = exhaustive_sparse_min(y, m, *s);
                report.eps_upper = (report.objective - best).max(0.0);
                report.eps_certified = true;
            }
            Ok(report)
        }
        StructureSet::GnnRange { model } => {
            let search = latent_search(model, y, Some(m), &opts.latent)?;
            Ok(SolveReport {
                xhat: search.best.point.clone(),
                objective: search.best.objective,
                eps_upper: search.gap(),
                eps_certified: false,
                iterations: search.iterations,
                converged: true,
                strategy: Strategy::LatentDescent,
                trace: Vec::new(),
            })
        }
    }
}

const GAP_ROUNDS: usize = 4;

/// Repeats `solve_lasso` with growing budgets until `eps_upper ≤ eps_target`.
/// On exhaustion the best report is returned with `converged = false`.
pub fn solve_with_gap_target(
    y: &DVector<f64>,
    m: &DMatrix<f64>,
    t: &StructureSet,
    eps_target: f64,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if !(eps_target >= 0.0) {
        return Err(Error::Options("gap target must be nonnegative".into()));
    }
    let rounds = if eps_target.is_infinite() { 1 } else { GAP_ROUNDS };
    let mut current = *opts;
    let mut best: Option<SolveReport> = None;
    for _ in 0..rounds {
        let mut report = solve_lasso(y, m, t, &current)?;
        if report.eps_upper <= eps_target {
            report.converged = true;
            return Ok(report);
        }
        report.converged = false;
        if best.as_ref().is_none_or(|b| report.objective < b.objective) {
            best = Some(report);
        }
        current.max_iters *= 2;
        current.latent.restarts *= 2;
        current.latent.max_iters *= 2;
    }
    Ok(best.expect("at least one round"))
}

/// Orthonormal basis of the face of `T` that contains `x`.
fn face_basis(t: &StructureSet, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = t.ambient_dim();
    Ok(match t {
        StructureSet::Subspace { basis } => basis.clone(),
        StructureSet::Union { bases } => {
            let mut best = (f64::INFINITY, 0);
            for (i, b) in bases.iter().enumerate() {
                let d = (x - b * b.tr_mul(x)).norm();
                if d < best.0 {
                    best = (d, i);
                }
            }
            bases[best.1].clone()
        }
        StructureSet::SparseCone { s, .. } => {
            let mut support = support_of(x);
            let mut i = 0;
            while support.len() < *s {
                if !support.contains(&i) {
                    support.push(i);
                }
                i += 1;
            }
            support.sort_unstable();
            DMatrix::from_fn(n, support.len(), |r, c| if r == support[c] { 1.0 } else { 0.0 })
        }
        StructureSet::GnnRange { .. } => {
            return Err(Error::Options("gap injection needs an exact structure".into()));
        }
    })
}

/// Moves `report.xhat` within its face of `T` so the objective grows by
/// exactly `eps²`, emulating an ε-suboptimal solver.
pub fn inject_gap(
    report: &SolveReport,
    y: &DVector<f64>,
    m: &DMatrix<f64>,
    t: &StructureSet,
    eps: f64,
    rng: &mut Rng,
) -> Result<SolveReport> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Options("injected gap must be finite and nonnegative".into()));
    }
    let face = face_basis(t, &report.xhat)?;
    let dir = &face * linalg::unit_vector(face.ncols(), rng);
    let mu = m * &dir;
    let a = mu.norm_squared();
    if a == 0.0 {
        return Err(Error::Domain("face direction lies in the null space of M".into()));
    }
    let b = mu.dot(&(y - m * &report.xhat));
    // ‖r − t Mu‖² − ‖r‖² = t² a − 2 t b = ε²
    let step = (b + (b * b + a * eps * eps).sqrt()) / a;
    let xhat = &report.xhat + dir * step;
    let objective = objective(y, m, &xhat);
    let mut out = report.clone();
    out.eps_upper = report.eps_upper + (objective - report.objective).max(0.0);
    out.objective = objective;
    out.xhat = xhat;
    Ok(out)
}

/// Distance of an estimate from its structure set, used for feasibility checks.
pub fn membership_residual(t: &StructureSet, x: &DVector<f64>, opts: &SolveOptions) -> Result<f64> {
    structures::distance(t, x, &opts.latent)
}
