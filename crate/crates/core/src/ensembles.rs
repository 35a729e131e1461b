//! Mixing matrices `B`, sub-gaussian row ensembles for `A`, and the spectral
//! quantities (stable rank, norms) that parameterize the recovery bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::{self, Rng};

/// Construction recipe for the deterministic mixing matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixingKind {
    Identity,
    Diagonal { spectrum: Vec<f64> },
    Rotated { spectrum: Vec<f64>, seed: u64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(flatten)]
    pub kind: MixingKind,
}

impl MixingSpec {
    pub fn identity(size: usize) -> Self {
        MixingSpec { rows: size, cols: size, kind: MixingKind::Identity }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Dimension("mixing matrix needs positive dimensions".into()));
        }
        match &self.kind {
            MixingKind::Identity if self.rows != self.cols => Err(Error::Dimension(format!(
                "identity mixing requires rows == cols, got {}x{}",
                self.rows, self.cols
            ))),
            MixingKind::Identity => Ok(()),
            MixingKind::Diagonal { spectrum } | MixingKind::Rotated { spectrum, .. } => {
                check_spectrum(spectrum, self.rows.min(self.cols))
            }
            MixingKind::Explicit { matrix } => {
                if matrix.len() != self.rows || matrix.iter().any(|r| r.len() != self.cols) {
                    return Err(Error::Dimension(format!(
                        "explicit mixing matrix is not {}x{}",
                        self.rows, self.cols
                    )));
                }
                if matrix.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("explicit mixing matrix".into()));
                }
                Ok(())
            }
        }
    }
}

fn check_spectrum(spectrum: &[f64], max_len: usize) -> Result<()> {
    if spectrum.is_empty() {
        return Err(Error::InvalidSpec("spectrum must be non-empty".into()));
    }
    if spectrum.len() > max_len {
        return Err(Error::Dimension(format!(
            "spectrum of length {} exceeds min(l, m) = {max_len}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidSpec("spectrum entries must be finite and nonnegative".into()));
    }
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidSpec("spectrum must be sorted descending".into()));
    }
    if spectrum[0] <= 0.0 {
        return Err(Error::InvalidSpec("spectrum needs at least one positive entry".into()));
    }
    Ok(())
}

/// Realizes the mixing matrix described by `spec`. Pure in `spec`.
pub fn build_mixing(spec: &MixingSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (l, m) = (spec.rows, spec.cols);
    Ok(match &spec.kind {
        MixingKind::Identity => DMatrix::identity(l, m),
        MixingKind::Diagonal { spectrum } => diag_rect(l, m, spectrum),
        MixingKind::Rotated { spectrum, seed } => {
            let mut rng = seed::rng(*seed);
            let u = linalg::haar_orthogonal(l, &mut rng);
            let v = linalg::haar_orthogonal(m, &mut rng);
            u * diag_rect(l, m, spectrum) * v.transpose()
        }
        MixingKind::Explicit { matrix } => DMatrix::from_fn(l, m, |i, j| matrix[i][j]),
    })
}

fn diag_rect(l: usize, m: usize, spectrum: &[f64]) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(l, m);
    for (i, s) in spectrum.iter().enumerate() {
        d[(i, i)] = *s;
    }
    d
}

/// `‖B‖_F² / ‖B‖²`.
pub fn stable_rank(b: &DMatrix<f64>) -> Result<f64> {
    let top = linalg::spectral_norm(b);
    if top == 0.0 || !top.is_finite() {
        return Err(Error::Domain("stable rank of a zero matrix is undefined".into()));
    }
    let fro2: f64 = b.iter().map(|x| x * x).sum();
    Ok(fro2 / (top * top))
}

/// Law of a single row of `A`. Every kind is mean-zero and isotropic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowDistribution {
    /// iid N(0, 1) entries.
    Gaussian,
    /// iid ±1 entries.
    Rademacher,
    /// iid entries uniform on [−√3, √3].
    Uniform,
    /// √n times a uniform point on the unit sphere.
    Sphere,
}

/// ψ₂ norm of N(0,1): solving E exp(Z²/t²) = (1 − 2/t²)^{-1/2} = 2 gives t² = 8/3.
pub const K_GAUSSIAN: f64 = 1.632_993_161_855_452;
/// ψ₂ norm of a Rademacher sign: exp(1/t²) = 2 gives t = 1/√ln 2.
pub const K_RADEMACHER: f64 = 1.201_122_408_786_449_8;
/// Moment estimator output for the uniform ensemble (n = 16, 10⁶ samples, seed 2024).
pub const K_UNIFORM: f64 = 1.635;
/// Moment estimator output for the sphere ensemble (n = 16, 10⁶ samples, seed 2024).
pub const K_SPHERE: f64 = 1.636;

impl RowDistribution {
    pub const ALL: [RowDistribution; 4] = [
        RowDistribution::Gaussian,
        RowDistribution::Rademacher,
        RowDistribution::Uniform,
        RowDistribution::Sphere,
    ];

    /// Nominal sub-gaussian parameter K carried by the distribution.
    pub fn nominal_k(self) -> f64 {
        match self {
            RowDistribution::Gaussian => K_GAUSSIAN,
            RowDistribution::Rademacher => K_RADEMACHER,
            RowDistribution::Uniform => K_UNIFORM,
            RowDistribution::Sphere => K_SPHERE,
        }
    }

    /// Draws one row of length `n` into `out`.
    pub fn fill_row(self, out: &mut [f64], rng: &mut Rng) {
        match self {
            RowDistribution::Gaussian => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            RowDistribution::Rademacher => {
                out.iter_mut().for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 })
            }
            RowDistribution::Uniform => {
                let half = 3f64.sqrt();
                out.iter_mut().for_each(|v| *v = rng.random_range(-half..half))
            }
            RowDistribution::Sphere => loop {
                out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-300 {
                    let scale = (out.len() as f64).sqrt() / norm;
                    out.iter_mut().for_each(|v| *v *= scale);
                    break;
                }
            },
        }
    }
}

/// `m x n` matrix with iid rows from `dist`, drawn row by row.
pub fn sample_a(dist: RowDistribution, m: usize, n: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    if m == 0 || n == 0 {
        return Err(Error::Dimension("sensing matrix needs positive dimensions".into()));
    }
    let mut a = DMatrix::zeros(m, n);
    let mut row = vec![0.0; n];
    for i in 0..m {
        dist.fill_row(&mut row, rng);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    Ok(a)
}

pub fn sample_a_seeded(dist: RowDistribution, m: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_a(dist, m, n, &mut seed::rng(seed))
}

const MOMENT_ORDERS: [u32; 8] = [2, 4, 6, 8, 10, 12, 14, 16];
const ESTIMATOR_DIRECTIONS: usize = 100;

/// Raw moment functional `sup_p (E|Z|^p)^{1/p} / √p` of a standard normal,
/// which is attained at p = 2.
fn gaussian_moment_functional() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

/// Moment-based estimate of the sub-gaussian parameter of `dist` in
/// dimension `n`, scaled so the Gaussian ensemble maps to `K_GAUSSIAN`.
pub fn estimate_subgaussian_k(dist: RowDistribution, n: usize, num_samples: usize, seed: u64) -> Result<f64> {
    estimate_subgaussian_k_with(|row, rng| dist.fill_row(row, rng), n, num_samples, seed)
}

/// Same estimator for an arbitrary row sampler.
pub fn estimate_subgaussian_k_with<F>(mut sampler: F, n: usize, num_samples: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&mut [f64], &mut Rng),
{
    if n == 0 {
        return Err(Error::Dimension("dimension must be positive".into()));
    }
    if num_samples < 10_000 {
        return Err(Error::Options("estimator needs at least 10^4 samples".into()));
    }
    let mut dir_rng = seed::stream(seed, 0);
    let thetas: Vec<DVector<f64>> = (0..ESTIMATOR_DIRECTIONS)
        .map(|_| linalg::unit_vector(n, &mut dir_rng))
        .collect();
    let mut sums = vec![[0.0f64; MOMENT_ORDERS.len()]; thetas.len()];
    let mut rng = seed::stream(seed, 1);
    let mut row = vec![0.0; n];
    for _ in 0..num_samples {
        sampler(&mut row, &mut rng);
        for (theta, acc) in thetas.iter().zip(sums.iter_mut()) {
            let proj: f64 = theta.iter().zip(&row).map(|(t, a)| t * a).sum::<f64>().abs();
            let sq = proj * proj;
            let mut pow = sq;
            for slot in acc.iter_mut() {
                *slot += pow;
                pow *= sq;
            }
        }
    }
    let mut best: f64 = 0.0;
    for acc in &sums {
        for (slot, &p) in acc.iter().zip(&MOMENT_ORDERS) {
            let moment = slot / num_samples as f64;
            let value = moment.powf(1.0 / p as f64) / (p as f64).sqrt();
            best = best.max(value);
        }
    }
    Ok(best * K_GAUSSIAN / gaussian_moment_functional())
}

/// Writes a matrix as CSV, row-major, `%.17g` formatted.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| crate::fmt::g17(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_diagonal() {
        let b = build_mixing(&MixingSpec::identity(3)).unwrap();
        assert_eq!(b, DMatrix::identity(3, 3));
        let spec = MixingSpec { rows: 3, cols: 3, kind: MixingKind::Diagonal { spectrum: vec![2.0, 1.0, 1.0] } };
        let b = build_mixing(&spec).unwrap();
        assert_eq!(b, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.0])));
        assert_eq!(stable_rank(&b).unwrap(), 1.5);
    }

    #[test]
    fn rotated_realizes_spectrum() {
        let spec = MixingSpec { rows: 2, cols: 4, kind: MixingKind::Rotated { spectrum: vec![2.0, 1.0], seed: 7 } };
        let b = build_mixing(&spec).unwrap();
        let sv = linalg::singular_values(&b);
        assert!((sv[0] - 2.0).abs() < 2e-10 && (sv[1] - 1.0).abs() < 1e-10, "{sv:?}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = MixingSpec { rows: 2, cols: 3, kind: MixingKind::Identity };
        assert!(matches!(build_mixing(&bad), Err(Error::Dimension(_))));
        let long = MixingSpec { rows: 2, cols: 3, kind: MixingKind::Diagonal { spectrum: vec![3.0, 2.0, 1.0] } };
        assert!(matches!(build_mixing(&long), Err(Error::Dimension(_))));
        let unsorted = MixingSpec { rows: 3, cols: 3, kind: MixingKind::Diagonal { spectrum: vec![1.0, 2.0] } };
        assert!(build_mixing(&unsorted).is_err());
        let zero = MixingSpec { rows: 3, cols: 3, kind: MixingKind::Diagonal { spectrum: vec![0.0] } };
        assert!(build_mixing(&zero).is_err());
    }

    #[test]
    fn stable_rank_examples() {
        assert_eq!(stable_rank(&DMatrix::identity(5, 5)).unwrap(), 5.0);
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![3.0, 1.0]);
        let sr = stable_rank(&(&u * v.transpose())).unwrap();
        assert!((sr - 1.0).abs() < 1e-12);
        assert!(matches!(stable_rank(&DMatrix::zeros(2, 2)), Err(Error::Domain(_))));
    }

    #[test]
    fn rademacher_support_and_sphere_norms() {
        let a = sample_a_seeded(RowDistribution::Rademacher, 2, 2, 11).unwrap();
        assert!(a.iter().all(|v| *v == 1.0 || *v == -1.0));
        let s = sample_a_seeded(RowDistribution::Sphere, 20, 7, 11).unwrap();
        for i in 0..20 {
            assert!((s.row(i).norm() - 7f64.sqrt()).abs() < 1e-12);
        }
        let u = sample_a_seeded(RowDistribution::Uniform, 50, 5, 1).unwrap();
        assert!(u.iter().all(|v| v.abs() <= 3f64.sqrt()));
    }

    #[test]
    fn gaussian_rows_are_isotropic() {
        let a = sample_a_seeded(RowDistribution::Gaussian, 10_000, 4, 5).unwrap();
        let cov = a.transpose() * &a / 10_000.0;
        let dev = linalg::spectral_norm(&(cov - DMatrix::identity(4, 4)));
        assert!(dev < 0.1, "{dev}");
    }

    #[test]
    fn all_kinds_isotropic_within_bound() {
        let (n, big_n) = (6, 20_000usize);
        for dist in RowDistribution::ALL {
            let a = sample_a_seeded(dist, big_n, n, 17).unwrap();
            let cov = a.transpose() * &a / big_n as f64;
            let dev = linalg::spectral_norm(&(cov - DMatrix::identity(n, n)));
            assert!(dev <= 5.0 * (n as f64 / big_n as f64).sqrt(), "{dist:?}: {dev}");
        }
    }

    #[test]
    fn nominal_k_closed_forms() {
        assert!((K_GAUSSIAN - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((K_RADEMACHER - 1.0 / 2f64.ln().sqrt()).abs() < 1e-15);
        // E exp(Z²/t²) = 2 at the nominal values
        let t2 = K_GAUSSIAN * K_GAUSSIAN;
        assert!(((1.0 - 2.0 / t2).powf(-0.5) - 2.0).abs() < 1e-12);
        assert!(((1.0 / (K_RADEMACHER * K_RADEMACHER)).exp() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn estimator_examples() {
        let g = estimate_subgaussian_k(RowDistribution::Gaussian, 8, 20_000, 3).unwrap();
        assert!((g / K_GAUSSIAN - 1.0).abs() < 0.1, "{g}");
        let r = estimate_subgaussian_k(RowDistribution::Rademacher, 8, 20_000, 3).unwrap();
        assert!(r <= g, "{r} > {g}");
        let zero = estimate_subgaussian_k_with(|row, _| row.iter_mut().for_each(|v| *v = 0.0), 8, 10_000, 3).unwrap();
        assert_eq!(zero, 0.0);
        assert!(estimate_subgaussian_k(RowDistribution::Gaussian, 8, 100, 3).is_err());
    }

    #[test]
    fn isotropy_monte_carlo_norm_of_bah() {
        // E‖B A h‖² = ‖B‖_F² for unit h
        let spec = MixingSpec { rows: 6, cols: 10, kind: MixingKind::Rotated { spectrum: vec![3.0, 2.0, 0.5], seed: 1 } };
        let b = build_mixing(&spec).unwrap();
        let fro2 = b.iter().map(|x| x * x).sum::<f64>();
        let h = linalg::unit_vector(5, &mut seed::rng(0));
        for dist in RowDistribution::ALL {
            let vals: Vec<f64> = (0..4000)
                .map(|t| {
                    let a = sample_a_seeded(dist, 10, 5, seed::derive(99, t)).unwrap();
                    (&b * (&a * &h)).norm_squared()
                })
                .collect();
            let (mean, se) = linalg::mean_stderr(&vals);
            assert!((mean - fro2).abs() <= 4.0 * se, "{dist:?}: {mean} vs {fro2} ± {se}");
            let plain: Vec<f64> = (0..4000)
                .map(|t| (sample_a_seeded(dist, 10, 5, seed::derive(7, t)).unwrap() * &h).norm_squared())
                .collect();
            let (mean, se) = linalg::mean_stderr(&plain);
            assert!((mean - 10.0).abs() <= 4.0 * se, "{dist:?}: {mean} ± {se}");
        }
    }

    fn spec_strategy() -> impl Strategy<Value = MixingSpec> {
        (1usize..6, 1usize..6, proptest::collection::vec(0.01f64..10.0, 1..6), any::<u64>(), any::<bool>())
            .prop_map(|(l, m, mut spec, seed, rotate)| {
                spec.truncate(l.min(m));
                spec.sort_by(|a, b| b.total_cmp(a));
                let kind = if rotate {
                    MixingKind::Rotated { spectrum: spec, seed }
                } else {
                    MixingKind::Diagonal { spectrum: spec }
                };
                MixingSpec { rows: l, cols: m, kind }
            })
    }

    proptest! {
        #[test]
        fn stable_rank_chain(spec in spec_strategy()) {
            let b = build_mixing(&spec).unwrap();
            let again = build_mixing(&spec).unwrap();
            prop_assert_eq!(&b, &again);
            let sr = stable_rank(&b).unwrap();
            let rank = linalg::numerical_rank(&b, linalg::RANK_RTOL) as f64;
            prop_assert!(sr >= 1.0 - 1e-12);
            prop_assert!(sr <= rank + 1e-9);
            prop_assert!(rank <= spec.rows.min(spec.cols) as f64);
        }
    }
}
