//! Gaussian mean widths: subspaces against the chi mean, sparse cones, a
//! union of subspaces, and a small ReLU network range with its analytic bound.

use mixsense::geometry::{gnn_width_bound_for, union_width_check, width_mc, width_region_cover, WidthSet};
use mixsense::linalg;
use mixsense::seed;
use mixsense::structures::{GnnModel, LatentOptions, StructureSet};

fn main() -> mixsense::Result<()> {
    let latent = LatentOptions::default();
    let mut rng = seed::rng(1);
    for d in [1, 4, 16] {
        let t = StructureSet::subspace(linalg::random_orthonormal(64, d, &mut rng))?;
        let w = width_mc(&t, WidthSet::Cone, 10_000, 2, &latent)?;
        println!("{:<28} w = {:.4} ± {:.4}", t.describe(), w.mean, w.stderr);
    }
    let sparse = StructureSet::sparse(256, 5)?;
    for which in [WidthSet::Cone, WidthSet::Difference] {
        let w = width_mc(&sparse, which, 5_000, 3, &latent)?;
        println!("{:<28} w({}) = {:.4} ± {:.4}", sparse.describe(), which.label(), w.mean, w.stderr);
    }

    let check = union_width_check(&[2; 64], 32, 20_000, 4)?;
    println!(
        "union of 64 planes in R^32: w = {:.3}, max member = {:.3}, excess/sqrt(log N) = {:.3}",
        check.lhs,
        check.max_width,
        check.excess_ratio()
    );

    let model = GnnModel::random(&[2, 4, 4, 8], 5)?;
    let t = StructureSet::gnn(model.clone());
    let lower = width_mc(&t, WidthSet::Difference, 500, 6, &latent)?;
    let upper = width_region_cover(&model, WidthSet::Difference, 500, 6)?;
    let bound = gnn_width_bound_for(&model);
    println!(
        "{}: latent search {:.3}, region cover {:.3}, bound {:.3}",
        t.describe(),
        lower.mean,
        upper.mean,
        bound.width_bound
    );
    Ok(())
}
