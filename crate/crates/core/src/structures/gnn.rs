//! Piecewise-linear generative networks `G(z) = σ(A_d σ(… σ(A_1 z)))`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;

/// Per-layer activation pattern: `true` where the pre-activation is
/// strictly positive. Units at exactly zero count as inactive.
pub type Pattern = Vec<Vec<bool>>;

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    weights: Vec<DMatrix<f64>>,
    leaky_slope: f64,
}

/// On-disk form: layer widths `[k, p_1, …, p_d]` and row-major weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModelDoc {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub leaky_slope: f64,
    pub weights: Vec<Vec<f64>>,
}

impl GnnModel {
    pub fn new(weights: Vec<DMatrix<f64>>, leaky_slope: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpec("network needs at least one layer".into()));
        }
        if weights[0].ncols() == 0 {
            return Err(Error::InvalidSpec("latent dimension must be positive".into()));
        }
        for (i, pair) in weights.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(Error::Dimension(format!(
                    "layer {} expects input width {}, previous layer outputs {}",
                    i + 2,
                    pair[1].ncols(),
                    pair[0].nrows()
                )));
            }
        }
        if weights.iter().any(|w| w.nrows() == 0) {
            return Err(Error::InvalidSpec("layer widths must be positive".into()));
        }
        if weights.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("network weights".into()));
        }
        if !(0.0..1.0).contains(&leaky_slope) {
            return Err(Error::InvalidSpec("leaky slope must lie in [0, 1)".into()));
        }
        Ok(GnnModel { weights, leaky_slope })
    }

    pub fn relu(weights: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(weights, 0.0)
    }

    /// Gaussian weights with variance `2 / fan_in`, widths `dims = [k, p_1, …, p_d]`.
    pub fn random(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidSpec("dims needs k and at least one layer width".into()));
        }
        let mut rng = seed::rng(seed);
        let weights = dims
            .windows(2)
            .map(|w| linalg::gaussian_matrix(w[1], w[0], &mut rng) * (2.0 / w[0] as f64).sqrt())
            .collect();
        Self::relu(weights)
    }

    pub fn from_doc(doc: &GnnModelDoc) -> Result<Self> {
        if doc.dims.len() < 2 {
            return Err(Error::InvalidSpec("dims needs k and at least one layer width".into()));
        }
        if doc.weights.len() != doc.dims.len() - 1 {
            return Err(Error::Dimension(format!(
                "{} weight arrays for {} layers",
                doc.weights.len(),
                doc.dims.len() - 1
            )));
        }
        let mut weights = Vec::with_capacity(doc.weights.len());
        for (i, flat) in doc.weights.iter().enumerate() {
            let (cols, rows) = (doc.dims[i], doc.dims[i + 1]);
            if flat.len() != rows * cols {
                return Err(Error::Dimension(format!(
                    "layer {} has {} weights, expected {rows}x{cols}",
                    i + 1,
                    flat.len()
                )));
            }
            weights.push(DMatrix::from_row_slice(rows, cols, flat));
        }
        Self::new(weights, doc.leaky_slope)
    }

    pub fn to_doc(&self) -> GnnModelDoc {
        let mut dims = vec![self.latent_dim()];
        dims.extend(self.weights.iter().map(|w| w.nrows()));
        let weights = self
            .weights
            .iter()
            .map(|w| (0..w.nrows()).flat_map(|i| (0..w.ncols()).map(move |j| w[(i, j)])).collect())
            .collect();
        GnnModelDoc { dims, leaky_slope: self.leaky_slope, weights }
    }

    pub fn latent_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").nrows()
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Layer widths `p_1, …, p_d`.
    pub fn widths(&self) -> Vec<usize> {
        self.weights.iter().map(|w| w.nrows()).collect()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    fn activate(&self, pre: f64) -> f64 {
        if pre > 0.0 {
            pre
        } else {
            self.leaky_slope * pre
        }
    }

    fn check_latent(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(Error::Dimension(format!(
                "latent vector has length {}, network expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.forward_with_pattern(z)?.0)
    }

    pub fn forward_with_pattern(&self, z: &DVector<f64>) -> Result<(DVector<f64>, Pattern)> {
        self.check_latent(z)?;
        let mut h = z.clone();
        let mut pattern = Vec::with_capacity(self.depth());
        for w in &self.weights {
            let pre = w * &h;
            pattern.push(pre.iter().map(|&v| v > 0.0).collect());
            h = pre.map(|v| self.activate(v));
        }
        Ok((h, pattern))
    }

    /// Linear map `z ↦ G(z)` valid on the region with this activation pattern.
    pub fn pattern_matrix(&self, pattern: &Pattern) -> DMatrix<f64> {
        let mut l = DMatrix::identity(self.latent_dim(), self.latent_dim());
        for (w, layer) in self.weights.iter().zip(pattern) {
            let mut next = w * &l;
            for (i, &on) in layer.iter().enumerate() {
                if !on {
                    next.row_mut(i).scale_mut(self.leaky_slope);
                }
            }
            l = next;
        }
        l
    }

    /// Output together with the local Jacobian `∂G/∂z`.
    pub fn forward_with_jacobian(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (out, pattern) = self.forward_with_pattern(z)?;
        Ok((out, self.pattern_matrix(&pattern)))
    }

    /// Product of the layers' spectral norms, a Lipschitz constant of `G`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.weights.iter().map(linalg::spectral_norm).product()
    }
}

/// Options for multi-restart latent-space descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for LatentOptions {
    fn default() -> Self {
        LatentOptions { restarts: 10, max_iters: 500, rel_tol: 1e-9, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFit {
    pub z: DVector<f64>,
    pub point: DVector<f64>,
    /// `‖y − M G(z)‖²` at the returned `z`.
    pub objective: f64,
    pub restart: usize,
    pub iterations: usize,
}

/// Result of a primary restart pool plus an enlarged pool used to estimate
/// the suboptimality of the primary answer.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSearch {
    pub best: LatentFit,
    pub enlarged_best_objective: f64,
    pub iterations: usize,
}

impl LatentSearch {
    /// Heuristic gap `primary − enlarged`, never negative.
    pub fn gap(&self) -> f64 {
        (self.best.objective - self.enlarged_best_objective).max(0.0)
    }
}

fn single_descent(
    model: &GnnModel,
    y: &DVector<f64>,
    op: Option<&DMatrix<f64>>,
    opts: &LatentOptions,
    step0: f64,
    restart: usize,
) -> LatentFit {
    let mut rng = seed::stream(opts.seed, restart as u64);
    let mut z = linalg::gaussian_vector(model.latent_dim(), &mut rng);
    let eval = |z: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>, DVector<f64>, f64) {
        let (g, jac) = model.forward_with_jacobian(z).expect("latent length fixed");
        let mapped = match op {
            Some(m) => m * &g,
            None => g.clone(),
        };
        let r = y - mapped;
        let obj = r.norm_squared();
        (g, jac, r, obj)
    };
    let (mut point, mut jac, mut resid, mut obj) = eval(&z);
    let mut step = step0;
    let mut iterations = 0;
    for _ in 0..opts.max_iters {
        iterations += 1;
        let back = match op {
            Some(m) => m.tr_mul(&resid),
            None => resid.clone(),
        };
        let grad = jac.tr_mul(&back) * -2.0;
        if grad.norm() == 0.0 || obj == 0.0 {
            break;
        }
        let mut accepted = None;
        while step > 1e-30 {
            let trial = &z - &grad * step;
            let cand = eval(&trial);
            if cand.3 < obj {
                accepted = Some((trial, cand));
                break;
            }
            step *= 0.5;
        }
        let Some((z_new, (p, j, r, o))) = accepted else {
            break;
        };
        let rel = (obj - o) / obj.max(f64::MIN_POSITIVE);
        z = z_new;
        point = p;
        jac = j;
        resid = r;
        obj = o;
        step *= 2.0;
        if rel < opts.rel_tol {
            break;
        }
    }
    LatentFit { z, point, objective: obj, restart, iterations }
}

fn best_of(fits: Vec<LatentFit>) -> Option<LatentFit> {
    // min objective, lowest restart index on ties
    fits.into_iter().reduce(|a, b| if b.objective < a.objective { b } else { a })
}

/// Minimizes `‖y − M G(z)‖²` over `z` (with `M = I` when `op` is `None`)
/// using `opts.restarts` restarts, then runs as many more restarts to
/// estimate how far the primary answer is from the best found.
pub fn latent_search(
    model: &GnnModel,
    y: &DVector<f64>,
    op: Option<&DMatrix<f64>>,
    opts: &LatentOptions,
) -> Result<LatentSearch> {
    if opts.restarts == 0 {
        return Err(Error::Options("latent search needs at least one restart".into()));
    }
    if opts.max_iters == 0 {
        return Err(Error::Options("iteration budget must be positive".into()));
    }
    let out_dim = op.map_or(model.output_dim(), |m| m.nrows());
    if let Some(m) = op {
        if m.ncols() != model.output_dim() {
            return Err(Error::Dimension("operator width differs from network output".into()));
        }
    }
    if y.len() != out_dim {
        return Err(Error::Dimension(format!("target has length {}, expected {out_dim}", y.len())));
    }
    let lip = model.lipschitz_bound() * op.map_or(1.0, linalg::spectral_norm);
    let step0 = if lip > 0.0 { 0.5 / (lip * lip) } else { 1.0 };
    let fits: Vec<LatentFit> = (0..2 * opts.restarts)
        .into_par_iter()
        .map(|r| single_descent(model, y, op, opts, step0, r))
        .collect();
    let iterations = fits.iter().map(|f| f.iterations).sum();
    let enlarged_best_objective = fits.iter().map(|f| f.objective).fold(f64::INFINITY, f64::min);
    let mut fits = fits;
    fits.truncate(opts.restarts);
    let best = best_of(fits).expect("at least one restart");
    Ok(LatentSearch { best, enlarged_best_objective, iterations })
}
