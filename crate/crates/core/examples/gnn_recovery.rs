//! Recovering a point in the range of a ReLU network from compressed
//! measurements by multi-restart latent descent.

use mixsense::ensembles::{sample_a, RowDistribution};
use mixsense::linalg;
use mixsense::seed;
use mixsense::solvers::{solve_with_gap_target, SolveOptions};
use mixsense::structures::{GnnModel, LatentOptions, StructureSet};

fn main() -> mixsense::Result<()> {
    let model = GnnModel::random(&[3, 20, 40, 100], 4)?;
    let t = StructureSet::gnn(model.clone());
    let mut rng = seed::rng(5);
    let x = model.forward(&linalg::gaussian_vector(3, &mut rng))?;
    for m in [10, 20, 40] {
        let a = sample_a(RowDistribution::Gaussian, m, 100, &mut seed::stream(6, m as u64))? / (m as f64).sqrt();
        let y = &a * &x;
        let opts = SolveOptions { latent: LatentOptions { restarts: 8, seed: 7, ..LatentOptions::default() }, ..SolveOptions::default() };
        let report = solve_with_gap_target(&y, &a, &t, 1e-10, &opts)?;
        println!(
            "m={m:>3}: relative error {:.3e}, objective {:.2e}, restart gap {:.1e}",
            (&x - &report.xhat).norm() / x.norm(),
            report.objective,
            report.eps_upper
        );
    }
    Ok(())
}
