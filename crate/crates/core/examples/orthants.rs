//! Closed orthants met by random k-dimensional subspaces of R^n, against the
//! 2^k C(n, k) bound, and the dimension of their ReLU images.

use mixsense::geometry::{count_orthants, orthant_bound, relu_image_dim, OrthantMode};
use mixsense::linalg;
use mixsense::seed;

fn main() -> mixsense::Result<()> {
    let mut rng = seed::rng(8);
    println!("{:>3} {:>3} {:>8} {:>8} {:>8}", "n", "k", "count", "sampled", "bound");
    for (n, k) in [(6, 1), (6, 2), (8, 2), (8, 3), (10, 3)] {
        let basis = linalg::random_orthonormal(n, k, &mut rng);
        let exact = count_orthants(&basis, OrthantMode::Exhaustive)?;
        let sampled = count_orthants(&basis, OrthantMode::Sampled { samples: 20_000, seed: 9 })?;
        println!("{n:>3} {k:>3} {exact:>8} {sampled:>8} {:>8}", orthant_bound(n, k));
    }
    let basis = linalg::random_orthonormal(6, 2, &mut rng);
    let signs = [true, true, true, false, false, false];
    println!("ReLU image of a plane on a 3-positive orthant: dim {}", relu_image_dim(&basis, &signs)?);
    Ok(())
}
