//! Moment-based sub-gaussian parameter estimates for each row ensemble,
//! next to the nominal constants the library carries.

use mixsense::ensembles::{estimate_subgaussian_k, RowDistribution};

fn main() -> mixsense::Result<()> {
    let samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    println!("{:<12} {:>10} {:>10}", "ensemble", "nominal", "estimate");
    for dist in RowDistribution::ALL {
        let k = estimate_subgaussian_k(dist, 16, samples, 2024)?;
        println!("{:<12} {:>10.4} {:>10.4}", format!("{dist:?}"), dist.nominal_k(), k);
    }
    Ok(())
}
