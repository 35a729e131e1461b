//! Sparse recovery through mixed measurements y = B A x + w: hard
//! thresholding with debiasing, compared against the exhaustive oracle on a
//! small instance.

use mixsense::ensembles::{build_mixing, sample_a, MixingKind, MixingSpec, RowDistribution};
use mixsense::linalg;
use mixsense::seed;
use mixsense::solvers::{exhaustive_sparse_min, solve_lasso, SolveOptions};
use mixsense::structures::{sample_point, StructureSet};

fn main() -> mixsense::Result<()> {
    let t = StructureSet::sparse(200, 4)?;
    let spectrum: Vec<f64> = (0..80).map(|i| if i < 60 { 1.0 } else { 0.2 }).collect();
    let b = build_mixing(&MixingSpec { rows: 80, cols: 80, kind: MixingKind::Rotated { spectrum, seed: 1 } })?;
    let mut rng = seed::rng(2);
    let x = sample_point(&t, &mut rng, true)?;
    let a = sample_a(RowDistribution::Rademacher, 80, 200, &mut rng)?;
    let m = &b * a;
    let y = &m * &x + linalg::unit_vector(80, &mut rng) * 0.05;
    let report = solve_lasso(&y, &m, &t, &SolveOptions::default())?;
    println!(
        "n=200 s=4: objective {:.3e}, error {:.3e}, {} iterations",
        report.objective,
        (&x - &report.xhat).norm(),
        report.iterations
    );

    let small = StructureSet::sparse(12, 3)?;
    let m = linalg::gaussian_matrix(9, 12, &mut rng);
    let y = &m * sample_point(&small, &mut rng, true)? + linalg::unit_vector(9, &mut rng) * 0.1;
    let report = solve_lasso(&y, &m, &small, &SolveOptions::default())?;
    println!(
        "n=12 s=3: objective {:.6e}, oracle {:.6e}, certified gap {:.1e}",
        report.objective,
        exhaustive_sparse_min(&y, &m, 3),
        report.eps_upper
    );
    Ok(())
}
