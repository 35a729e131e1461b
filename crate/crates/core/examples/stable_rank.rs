//! Stable rank of a few mixing matrices: identity, a decaying diagonal, a
//! rotated copy of the same spectrum, and a rank-one matrix.

use mixsense::ensembles::{build_mixing, stable_rank, MixingKind, MixingSpec};
use mixsense::linalg;

fn main() -> mixsense::Result<()> {
    let decay: Vec<f64> = (1..=64).map(|i| 1.0 / (i as f64).sqrt()).collect();
    let mut rank_one = vec![vec![0.0; 64]; 64];
    rank_one[0][0] = 3.0;
    let specs = [
        ("identity", MixingSpec::identity(64)),
        ("diag 1/sqrt(i)", MixingSpec { rows: 64, cols: 64, kind: MixingKind::Diagonal { spectrum: decay.clone() } }),
        ("rotated 1/sqrt(i)", MixingSpec { rows: 64, cols: 64, kind: MixingKind::Rotated { spectrum: decay, seed: 7 } }),
        ("rank one", MixingSpec { rows: 64, cols: 64, kind: MixingKind::Explicit { matrix: rank_one } }),
    ];
    println!("{:<20} {:>8} {:>10} {:>8}", "mixing", "sr(B)", "||B||_F", "rank");
    for (name, spec) in specs {
        let b = build_mixing(&spec)?;
        println!(
            "{name:<20} {:>8.3} {:>10.4} {:>8}",
            stable_rank(&b)?,
            linalg::frobenius(&b),
            linalg::numerical_rank(&b, linalg::RANK_RTOL)
        );
    }
    Ok(())
}
