//! Activation regions of a small ReLU network: each region maps its part of
//! latent space linearly onto a subspace of dimension at most k.

use mixsense::geometry::gnn_width_bound_for;
use mixsense::linalg;
use mixsense::seed;
use mixsense::structures::{enumerate_regions, GnnModel};

fn main() -> mixsense::Result<()> {
    let model = GnnModel::random(&[2, 5, 6], 11)?;
    let regions = enumerate_regions(&model)?;
    let bound = gnn_width_bound_for(&model);
    println!("{} regions (bound {:.1})", regions.len(), bound.region_count_bound);
    for (i, r) in regions.iter().enumerate() {
        println!("  {i:>2}  {}  dim {}", r.pattern_string(), r.dim());
    }
    let mut rng = seed::rng(3);
    let worst = (0..1000)
        .map(|_| {
            let x = model.forward(&linalg::gaussian_vector(2, &mut rng)).expect("latent dims match");
            regions.iter().map(|r| r.residual(&x)).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    println!("largest distance of 1000 outputs from the region subspaces: {worst:.2e}");
    Ok(())
}
