//! Sweep of the number of measurements with fixed-norm noise, followed by a
//! log-log slope fit of the median recovery error.

use mixsense::harness::{fit_slope, sweep, ExperimentConfig};

const CONFIG: &str = r#"
[mixing]
kind = "identity"
rows = 32
cols = 32

[rows]
kind = "gaussian"

[structure]
kind = "sparse"
n = 128
sparsity = 3

[noise]
noise_norm = 1.0
mismatch = 0.0
eps_target = 1e-12

[sweep]
trials = 30
master_seed = 1

[sweep.axes]
sr_b = [32, 64, 128, 256, 512]
"#;

fn main() -> mixsense::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let csv = sweep(&cfg, &[])?;
    let noise = fit_slope(&csv, "sr_b", "recovery_error")?;
    let term = fit_slope(&csv, "sr_b", "term_noise")?;
    for (x, y) in &noise.points {
        println!("sr(B) = {x:>4}: median error {y:.4e}");
    }
    println!("slope of median error {:.3} ± {:.3}; slope of the noise term {:.3}", noise.slope, noise.stderr, term.slope);
    Ok(())
}
