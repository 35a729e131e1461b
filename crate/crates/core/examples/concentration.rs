//! Concentration of ||B A h|| / ||B||_F around 1 for well-spread mixing, and
//! its failure for a rank-one B.

use mixsense::ensembles::{build_mixing, MixingKind, MixingSpec, RowDistribution};
use mixsense::harness::{verify_concentration, Directions};
use mixsense::structures::StructureSet;

fn main() -> mixsense::Result<()> {
    let mut rank_one = vec![vec![0.0; 400]; 400];
    rank_one[0][0] = 1.0;
    let cases = [
        ("identity 400", MixingSpec::identity(400)),
        ("rank one", MixingSpec { rows: 400, cols: 400, kind: MixingKind::Explicit { matrix: rank_one } }),
    ];
    let dirs = Directions::Differences(StructureSet::sparse(100, 5)?);
    println!("{:<14} {:>8} {:>8} {:>8} {:>10}", "mixing", "median", "iqr", "max", "within 0.1");
    for (name, spec) in cases {
        let b = build_mixing(&spec)?;
        let s = verify_concentration(&b, RowDistribution::Uniform, &dirs, 20, 25, 3)?;
        println!("{name:<14} {:>8.4} {:>8.4} {:>8.4} {:>10.3}", s.median, s.iqr(), s.max, s.within_0_1);
    }
    Ok(())
}
