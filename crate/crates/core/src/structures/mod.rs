//! Structure sets `T` (closed cones in ℝⁿ) with projection, distance, and
//! ground-truth sampling.

mod gnn;
mod regions;

pub use gnn::{latent_search, GnnModel, GnnModelDoc, LatentFit, LatentOptions, LatentSearch, Pattern};
pub use regions::{enumerate_regions, regions_to_csv, Region, MAX_REGION_LATENT, MAX_REGION_UNITS};

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::Rng;

/// Tolerance on `UᵀU = I` for subspace bases.
pub const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum StructureSet {
    /// Vectors with at most `s` nonzero entries.
    SparseCone { n: usize, s: usize },
    /// Column span of an orthonormal `n x d` basis.
    Subspace { basis: DMatrix<f64> },
    /// Union of column spans of orthonormal bases sharing the ambient dimension.
    Union { bases: Vec<DMatrix<f64>> },
    /// Range of a ReLU-family network.
    GnnRange { model: GnnModel },
}

fn check_basis(basis: &DMatrix<f64>) -> Result<()> {
    if basis.nrows() == 0 {
        return Err(Error::Dimension("ambient dimension must be positive".into()));
    }
    let defect = linalg::orthonormality_defect(basis);
    if defect > BASIS_TOL {
        return Err(Error::InvalidSpec(format!("basis is not orthonormal (defect {defect:.3e})")));
    }
    Ok(())
}

impl StructureSet {
    pub fn sparse(n: usize, s: usize) -> Result<Self> {
        if n == 0 || s == 0 || s > n {
            return Err(Error::InvalidSpec(format!("sparse cone needs 1 ≤ s ≤ n, got s={s}, n={n}")));
        }
        Ok(StructureSet::SparseCone { n, s })
    }

    pub fn subspace(basis: DMatrix<f64>) -> Result<Self> {
        check_basis(&basis)?;
        Ok(StructureSet::Subspace { basis })
    }

    /// Subspace spanned by arbitrary vectors (columns of `spanning`).
    pub fn span_of(spanning: &DMatrix<f64>) -> Result<Self> {
        Self::subspace(linalg::orthonormal_basis(spanning, linalg::RANK_RTOL))
    }

    pub fn union(bases: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = bases.first() else {
            return Err(Error::InvalidSpec("union needs at least one member".into()));
        };
        let n = first.nrows();
        for b in &bases {
            if b.nrows() != n {
                return Err(Error::Dimension("union members live in different ambient spaces".into()));
            }
            check_basis(b)?;
        }
        Ok(StructureSet::Union { bases })
    }

    pub fn gnn(model: GnnModel) -> Self {
        StructureSet::GnnRange { model }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            StructureSet::SparseCone { n, .. } => *n,
            StructureSet::Subspace { basis } => basis.nrows(),
            StructureSet::Union { bases } => bases[0].nrows(),
            StructureSet::GnnRange { model } => model.output_dim(),
        }
    }

    /// Whether projection and width suprema are computed exactly.
    pub fn is_exact(&self) -> bool {
        !matches!(self, StructureSet::GnnRange { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            StructureSet::SparseCone { n, s } => format!("sparse n={n} s={s}"),
            StructureSet::Subspace { basis } => format!("subspace n={} dim={}", basis.nrows(), basis.ncols()),
            StructureSet::Union { bases } => {
                let dims: Vec<String> = bases.iter().map(|b| b.ncols().to_string()).collect();
                format!("union n={} members={} dims={}", bases[0].nrows(), bases.len(), dims.join("/"))
            }
            StructureSet::GnnRange { model } => {
                let mut dims = vec![model.latent_dim().to_string()];
                dims.extend(model.widths().iter().map(|p| p.to_string()));
                format!("gnn dims={}", dims.join("/"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub point: DVector<f64>,
    pub distance: f64,
    /// Upper estimate of `distance − inf_{t∈T} ‖v − t‖`; zero for exact variants.
    pub gap: f64,
}

pub type ProjectOptions = LatentOptions;

fn check_len(t: &StructureSet, v: &DVector<f64>) -> Result<()> {
    if v.len() != t.ambient_dim() {
        return Err(Error::Dimension(format!(
            "vector has length {}, structure lives in dimension {}",
            v.len(),
            t.ambient_dim()
        )));
    }
    Ok(())
}

/// Indices of the `s` largest-magnitude entries, ties to the lowest index,
/// returned in increasing index order.
pub fn top_s_support(v: &DVector<f64>, s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    idx.truncate(s);
    idx.sort_unstable();
    idx
}

pub fn hard_threshold(v: &DVector<f64>, s: usize) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for i in top_s_support(v, s) {
        out[i] = v[i];
    }
    out
}

fn project_subspace(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    basis * basis.tr_mul(v)
}

/// Closest point of `t` to `v` (approximate for network ranges).
pub fn project(t: &StructureSet, v: &DVector<f64>, opts: &ProjectOptions) -> Result<Projection> {
    check_len(t, v)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input".into()));
    }
    let exact = |point: DVector<f64>| {
        let distance = (v - &point).norm();
        Projection { point, distance, gap: 0.0 }
    };
    Ok(match t {
        StructureSet::SparseCone { s, .. } => exact(hard_threshold(v, *s)),
        StructureSet::Subspace { basis } => exact(project_subspace(basis, v)),
        StructureSet::Union { bases } => {
            let mut best: Option<Projection> = None;
            for b in bases {
                let cand = exact(project_subspace(b, v));
                if best.as_ref().is_none_or(|p| cand.distance < p.distance) {
                    best = Some(cand);
                }
            }
            best.expect("union is non-empty")
        }
        StructureSet::GnnRange { model } => {
            let search = latent_search(model, v, None, opts)?;
            let distance = search.best.objective.sqrt();
            let gap = distance - search.enlarged_best_objective.sqrt();
            Projection { point: search.best.point, distance, gap: gap.max(0.0) }
        }
    })
}

pub fn distance(t: &StructureSet, x: &DVector<f64>, opts: &ProjectOptions) -> Result<f64> {
    Ok(project(t, x, opts)?.distance)
}

const SAMPLE_ATTEMPTS: usize = 100;

/// Random point of `t`; unit norm when `normalize` is set.
pub fn sample_point(t: &StructureSet, rng: &mut Rng, normalize: bool) -> Result<DVector<f64>> {
    for _ in 0..SAMPLE_ATTEMPTS {
        let v = match t {
            StructureSet::SparseCone { n, s } => {
                let support = index::sample(rng, *n, *s);
                let mut v = DVector::zeros(*n);
                for i in support.iter() {
                    v[i] = rng.sample(rand_distr::StandardNormal);
                }
                v
            }
            StructureSet::Subspace { basis } => basis * linalg::gaussian_vector(basis.ncols(), rng),
            StructureSet::Union { bases } => {
                let b = &bases[rng.random_range(0..bases.len())];
                b * linalg::gaussian_vector(b.ncols(), rng)
            }
            StructureSet::GnnRange { model } => model.forward(&linalg::gaussian_vector(model.latent_dim(), rng))?,
        };
        let norm = v.norm();
        if norm > 0.0 {
            return Ok(if normalize { v / norm } else { v });
        }
    }
    Err(Error::Domain(format!(
        "drew the zero vector {SAMPLE_ATTEMPTS} times from {}",
        t.describe()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_vec(data.to_vec())
    }

    fn e(n: usize, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 1, |r, _| if r == i { 1.0 } else { 0.0 })
    }

    #[test]
    fn projection_examples() {
        let opts = ProjectOptions::default();
        let p = project(&StructureSet::sparse(2, 1).unwrap(), &v(&[3.0, -1.0]), &opts).unwrap();
        assert_eq!((p.point, p.distance, p.gap), (v(&[3.0, 0.0]), 1.0, 0.0));

        let p = project(&StructureSet::subspace(e(2, 0)).unwrap(), &v(&[2.0, 5.0]), &opts).unwrap();
        assert_eq!((p.point, p.distance, p.gap), (v(&[2.0, 0.0]), 5.0, 0.0));

        let u = StructureSet::union(vec![e(2, 0), e(2, 1)]).unwrap();
        let p = project(&u, &v(&[1.0, 4.0]), &opts).unwrap();
        // brute force over both members
        let d0 = (v(&[1.0, 4.0]) - v(&[1.0, 0.0])).norm();
        let d1 = (v(&[1.0, 4.0]) - v(&[0.0, 4.0])).norm();
        assert_eq!(p.distance, d0.min(d1));
        assert_eq!((p.point, p.distance), (v(&[0.0, 4.0]), 1.0));

        assert_eq!(distance(&StructureSet::sparse(2, 1).unwrap(), &v(&[3.0, 4.0]), &opts).unwrap(), 3.0);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        assert_eq!(top_s_support(&v(&[1.0, -2.0, 2.0, 0.5]), 1), vec![1]);
        assert_eq!(top_s_support(&v(&[1.0, 1.0, 1.0]), 2), vec![0, 1]);
    }

    #[test]
    fn validation() {
        assert!(StructureSet::sparse(3, 0).is_err());
        assert!(StructureSet::sparse(3, 4).is_err());
        assert!(StructureSet::subspace(DMatrix::from_element(2, 1, 1.0)).is_err());
        assert!(StructureSet::union(vec![e(2, 0), e(3, 0)]).is_err());
        let t = StructureSet::sparse(3, 1).unwrap();
        assert!(matches!(project(&t, &v(&[1.0]), &ProjectOptions::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn gnn_zero_restarts_rejected() {
        let t = StructureSet::gnn(GnnModel::random(&[1, 3], 0).unwrap());
        let opts = ProjectOptions { restarts: 0, ..Default::default() };
        assert!(matches!(project(&t, &v(&[1.0, 1.0, 1.0]), &opts), Err(Error::Options(_))));
    }

    #[test]
    fn samples_are_members() {
        let mut rng = seed::rng(4);
        let opts = ProjectOptions::default();
        let sparse = StructureSet::sparse(10, 2).unwrap();
        for _ in 0..20 {
            let x = sample_point(&sparse, &mut rng, false).unwrap();
            assert!(x.iter().filter(|v| **v != 0.0).count() <= 2);
            assert_eq!(distance(&sparse, &x, &opts).unwrap(), 0.0);
        }
        let sub = StructureSet::subspace(linalg::random_orthonormal(8, 3, &mut rng)).unwrap();
        let x = sample_point(&sub, &mut rng, true).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-12);
        assert!(distance(&sub, &x, &opts).unwrap() < 1e-10);

        let gnn = StructureSet::gnn(GnnModel::random(&[2, 5, 6], 12).unwrap());
        let x = sample_point(&gnn, &mut rng, false).unwrap();
        assert!(distance(&gnn, &x, &opts).unwrap() < 1e-4);
    }

    #[test]
    fn zero_network_cannot_be_sampled() {
        let t = StructureSet::gnn(GnnModel::relu(vec![DMatrix::zeros(3, 2)]).unwrap());
        assert!(matches!(sample_point(&t, &mut seed::rng(0), true), Err(Error::Domain(_))));
    }

    #[test]
    fn gnn_distance_near_range() {
        let model = GnnModel::random(&[2, 6, 10], 21).unwrap();
        let t = StructureSet::gnn(model.clone());
        let mut rng = seed::rng(77);
        let opts = ProjectOptions::default();
        for _ in 0..5 {
            let base = model.forward(&linalg::gaussian_vector(2, &mut rng)).unwrap();
            let x = &base + linalg::unit_vector(10, &mut rng) * 0.1;
            let d = distance(&t, &x, &opts).unwrap();
            assert!(d <= 0.1 + 1e-6, "{d}");
        }
    }

    #[test]
    fn gnn_range_is_a_cone() {
        let model = GnnModel::random(&[2, 4, 5], 2).unwrap();
        let mut rng = seed::rng(3);
        for _ in 0..10 {
            let z = linalg::gaussian_vector(2, &mut rng);
            let lam = rng.random_range(0.0..5.0);
            let lhs = model.forward(&(&z * lam)).unwrap();
            let rhs = model.forward(&z).unwrap() * lam;
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lam));
        }
    }

    #[test]
    fn gnn_distance_scales_with_cone() {
        let t = StructureSet::gnn(GnnModel::random(&[2, 5, 6], 31).unwrap());
        let mut rng = seed::rng(8);
        let opts = ProjectOptions::default();
        let x = linalg::gaussian_vector(6, &mut rng);
        let d = distance(&t, &x, &opts).unwrap();
        let d3 = distance(&t, &(&x * 3.0), &opts).unwrap();
        assert!((d3 - 3.0 * d).abs() <= 1e-2 * 3.0 * d, "{d3} vs {}", 3.0 * d);
    }

    fn brute_force_sparse(v: &DVector<f64>, s: usize) -> f64 {
        // min over all supports of size s of the residual off the support
        fn rec(v: &DVector<f64>, start: usize, left: usize, chosen: &mut Vec<usize>, best: &mut f64) {
            if left == 0 {
                let r: f64 = (0..v.len()).filter(|i| !chosen.contains(i)).map(|i| v[i] * v[i]).sum();
                *best = best.min(r.sqrt());
                return;
            }
            for i in start..v.len() {
                chosen.push(i);
                rec(v, i + 1, left - 1, chosen, best);
                chosen.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(v, 0, s, &mut Vec::new(), &mut best);
        best
    }

    proptest! {
        #[test]
        fn hard_threshold_is_optimal(data in proptest::collection::vec(-10.0f64..10.0, 1..12), s_raw in 1usize..12) {
            let x = DVector::from_vec(data);
            let s = s_raw.min(x.len());
            let t = StructureSet::sparse(x.len(), s).unwrap();
            let d = distance(&t, &x, &ProjectOptions::default()).unwrap();
            prop_assert!((d - brute_force_sparse(&x, s)).abs() <= 1e-12 * (1.0 + d));
        }

        #[test]
        fn exact_projection_idempotent_and_homogeneous(seed_val in any::<u64>(), lam in 0.0f64..10.0) {
            let mut rng = seed::rng(seed_val);
            let sets = [
                StructureSet::sparse(9, 3).unwrap(),
                StructureSet::subspace(linalg::random_orthonormal(9, 4, &mut rng)).unwrap(),
                StructureSet::union(vec![
                    linalg::random_orthonormal(9, 2, &mut rng),
                    linalg::random_orthonormal(9, 3, &mut rng),
                ]).unwrap(),
            ];
            let opts = ProjectOptions::default();
            for t in &sets {
                let x = linalg::gaussian_vector(9, &mut rng);
                let p = project(t, &x, &opts).unwrap();
                let pp = project(t, &p.point, &opts).unwrap();
                prop_assert!((&pp.point - &p.point).norm() <= 1e-10);
                prop_assert!(pp.distance <= 1e-10);
                let scaled = distance(t, &(&x * lam), &opts).unwrap();
                prop_assert!((scaled - lam * p.distance).abs() <= 1e-6 * (1.0 + lam * p.distance));
            }
        }
    }
}
