//! Acceptance suite. Runs every criterion at its stated tolerance and
//! runtime budget, prints one PASS/FAIL line each, and exits nonzero if any
//! criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mixsense::ensembles::{MixingKind, MixingSpec, RowDistribution};
use mixsense::geometry::{
    count_orthants, gnn_width_bound, orthant_bound, relu_image_dim, width_mc, width_region_cover, OrthantMode,
    WidthSet,
};
use mixsense::harness::{fit_slope, sweep, verify_concentration, Directions, Experiment, ExperimentConfig};
use mixsense::linalg;
use mixsense::seed;
use mixsense::solvers::{exhaustive_sparse_min, solve_lasso, SolveOptions};
use mixsense::structures::{enumerate_regions, sample_point, GnnModel, LatentOptions, StructureSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn chi_mean(d: usize) -> f64 {
    2f64.sqrt() * (ln_gamma((d as f64 + 1.0) / 2.0) - ln_gamma(d as f64 / 2.0)).exp()
}

fn orthant_bound_holds() -> Outcome {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for i in 0..200u64 {
        let mut rng = seed::stream(101, i);
        let n = rng.random_range(3..=10);
        let k = rng.random_range(1..=3);
        let basis = linalg::random_orthonormal(n, k, &mut rng);
        let count = count_orthants(&basis, OrthantMode::Exhaustive).unwrap() as f64;
        let bound = orthant_bound(n, k);
        worst = worst.max(count / bound);
        if count > bound {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("violations={violations} max count/bound={worst:.3}"))
}

fn relu_image_dimension() -> Outcome {
    let mut violations = 0;
    for i in 0..500u64 {
        let mut rng = seed::stream(202, i);
        let n = rng.random_range(2..=10);
        let k = rng.random_range(1..=n.min(4));
        let basis = linalg::random_orthonormal(n, k, &mut rng);
        let signs: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let q = signs.iter().filter(|s| **s).count();
        if relu_image_dim(&basis, &signs).unwrap() > k.min(q) {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("violations={violations} of 500"))
}

fn region_count() -> Outcome {
    let mut count_violations = 0;
    let mut stray_points = 0;
    let mut worst_residual: f64 = 0.0;
    for i in 0..50u64 {
        let mut rng = seed::stream(303, i);
        let k = rng.random_range(1..=2);
        let d = rng.random_range(1..=2);
        let mut dims = vec![k];
        dims.extend((0..d).map(|_| rng.random_range(1..=6)));
        let model = GnnModel::random(&dims, seed::derive(303, i)).unwrap();
        let regions = enumerate_regions(&model).unwrap();
        let bound = gnn_width_bound(k, &dims[1..]).unwrap().region_count_bound;
        if regions.len() as f64 > bound {
            count_violations += 1;
        }
        for _ in 0..100 {
            let x = model.forward(&linalg::gaussian_vector(k, &mut rng)).unwrap();
            let r = regions.iter().map(|reg| reg.residual(&x)).fold(f64::INFINITY, f64::min);
            worst_residual = worst_residual.max(r);
            if r > 1e-8 {
                stray_points += 1;
            }
        }
    }
    outcome(
        count_violations == 0 && stray_points == 0,
        format!("count violations={count_violations} stray points={stray_points} max residual={worst_residual:.1e}"),
    )
}

fn width_correctness() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let latent = LatentOptions::default();
    for (j, d) in [1usize, 2, 4, 8, 16].into_iter().enumerate() {
        let basis = linalg::random_orthonormal(32, d, &mut seed::stream(404, j as u64));
        let t = StructureSet::subspace(basis).unwrap();
        let est = width_mc(&t, WidthSet::Cone, 10_000, 4040 + j as u64, &latent).unwrap();
        let z = (est.mean - chi_mean(d)) / est.stderr;
        ok &= z.abs() <= 3.0;
        parts.push(format!("d={d}:z={z:+.2}"));
    }
    let mut rng = seed::stream(405, 0);
    let sets = [
        StructureSet::sparse(64, 3).unwrap(),
        StructureSet::subspace(linalg::random_orthonormal(32, 4, &mut rng)).unwrap(),
        StructureSet::union((0..4).map(|_| linalg::random_orthonormal(32, 2, &mut rng)).collect()).unwrap(),
        StructureSet::gnn(GnnModel::random(&[2, 5, 8], 406).unwrap()),
    ];
    let mut mono_violations = 0;
    for (i, t) in sets.iter().enumerate() {
        let s = 4050 + i as u64;
        let (cone, diff) = match t {
            StructureSet::GnnRange { model } => (
                width_region_cover(model, WidthSet::Cone, 2000, s).unwrap(),
                width_region_cover(model, WidthSet::Difference, 2000, s).unwrap(),
            ),
            _ => (
                width_mc(t, WidthSet::Cone, 10_000, s, &latent).unwrap(),
                width_mc(t, WidthSet::Difference, 10_000, s, &latent).unwrap(),
            ),
        };
        if cone.mean > diff.mean + 2.0 * cone.stderr.max(diff.stderr) {
            mono_violations += 1;
        }
    }
    ok &= mono_violations == 0;
    parts.push(format!("monotonicity violations={mono_violations}/{}", sets.len()));
    outcome(ok, parts.join(" "))
}

fn concentration() -> Outcome {
    let b = DMatrix::identity(400, 400);
    let h = DVector::from_fn(50, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let s = verify_concentration(&b, RowDistribution::Gaussian, &Directions::Fixed(h), 1, 500, 505).unwrap();
    outcome((0.95..=1.05).contains(&s.median), format!("median={:.4} iqr={:.4}", s.median, s.iqr()))
}

fn sweep_config(structure: &str, noise: &str, trials: usize, seed: u64, axes: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "[mixing]\nkind = \"identity\"\nrows = 300\ncols = 300\n\n[rows]\nkind = \"gaussian\"\n\n\
         [structure]\n{structure}\n\n[noise]\n{noise}\n\n[sweep]\ntrials = {trials}\nmaster_seed = {seed}\n\n\
         [sweep.axes]\n{axes}\n"
    ))
    .unwrap()
}

fn denoising_law() -> Outcome {
    let cfg = sweep_config(
        "kind = \"sparse\"\nn = 128\nsparsity = 3",
        "noise_norm = 1.0\nmismatch = 0.0\neps_target = 1e-12",
        50,
        606,
        "sr_b = [32, 64, 128, 256, 512]",
    );
    let csv = sweep(&cfg, &[]).unwrap();
    let fit = fit_slope(&csv, "sr_b", "recovery_error").unwrap();

    // diagnostic only: the same sweep with ‖B‖_F held at 1
    let mut medians = Vec::new();
    for sr in [32usize, 64, 128, 256, 512] {
        let mut c = cfg.clone();
        c.sweep.axes.clear();
        c.mixing = MixingSpec {
            rows: sr,
            cols: sr,
            kind: MixingKind::Diagonal { spectrum: vec![1.0 / (sr as f64).sqrt(); sr] },
        };
        let exp = Experiment::new(&c).unwrap();
        let errs: Vec<f64> = exp.run_all().unwrap().iter().map(|r| r.recovery_error).collect();
        medians.push((sr as f64, linalg::median(&errs)));
    }
    let normalized = mixsense::harness::fit_slope_points(&medians).unwrap();
    outcome(
        (-0.65..=-0.35).contains(&fit.slope),
        format!(
            "slope={:.3}±{:.3} (B=I_sr); with ‖B‖_F=1 slope={:.3}; the noise term K·w·‖w‖/(‖B‖_F·√sr) is ∝ 1/sr for B=I_sr",
            fit.slope, fit.stderr, normalized.slope
        ),
    )
}

fn exact_recovery() -> Outcome {
    let mut cfg = sweep_config(
        "kind = \"union\"\nn = 64\ndims = [3, 3, 3, 3, 3, 3, 3, 3]\nseed = 707",
        "noise_norm = 0.0\nmismatch = 0.0\neps_target = 1e-12",
        200,
        708,
        "",
    );
    cfg.sweep.axes.clear();
    let exp = Experiment::new(&cfg).unwrap();
    let rows = exp.run_all().unwrap();
    // ground truth has unit norm, so the error is already relative
    let ok = rows.iter().filter(|r| r.recovery_error <= 1e-6).count();
    outcome(ok * 100 >= 95 * rows.len(), format!("recovered {ok}/{}", rows.len()))
}

fn eps_linearity() -> Outcome {
    let mut cfg = sweep_config(
        "kind = \"subspace\"\nn = 64\ndim = 5\nseed = 808",
        "noise_norm = 0.0\nmismatch = 0.0\neps_target = 1e-12",
        20,
        809,
        "inject_eps = [0.001, 0.01, 0.1, 1.0]",
    );
    cfg.mixing = MixingSpec::identity(200);
    let csv = sweep(&cfg, &[]).unwrap();
    let fit = fit_slope(&csv, "eps_achieved", "recovery_error").unwrap();
    outcome((fit.slope - 1.0).abs() <= 0.15, format!("slope={:.4}±{:.4}", fit.slope, fit.stderr))
}

fn oracle_equivalence() -> Outcome {
    let t = StructureSet::sparse(10, 2).unwrap();
    let mut matches = 0;
    for i in 0..100u64 {
        let mut rng = seed::stream(909, i);
        let m = linalg::gaussian_matrix(8, 10, &mut rng);
        let x = sample_point(&t, &mut rng, true).unwrap();
        let y = &m * &x;
        let report = solve_lasso(&y, &m, &t, &SolveOptions::default()).unwrap();
        let best = exhaustive_sparse_min(&y, &m, 2);
        if (report.objective - best).abs() <= 1e-8 * y.norm_squared() {
            matches += 1;
        }
    }
    outcome(matches >= 95, format!("matched {matches}/100"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_mixsense");
    let slope_cfg = dir.path().join("slope.toml");
    fs::write(&slope_cfg, "[slope]\ninput = \"sweep_gap-1.csv\"\nx_col = \"eps_achieved\"\ny_col = \"recovery_error\"\n").unwrap();
    let runs: Vec<(&str, PathBuf)> = vec![
        ("width", configs_dir().join("width_subspace.toml")),
        ("width", configs_dir().join("width_gnn.toml")),
        ("solve", configs_dir().join("solve_sparse.toml")),
        ("sweep", configs_dir().join("sweep_gap.toml")),
        ("regions", configs_dir().join("regions_small.toml")),
        ("orthants", configs_dir().join("orthants.toml")),
        ("concentration", configs_dir().join("concentration.toml")),
        ("slope", slope_cfg),
    ];
    let mut mismatched = Vec::new();
    for (cmd, cfg) in &runs {
        let stem = cfg.file_stem().unwrap().to_string_lossy().to_string();
        let mut outputs = Vec::new();
        for threads in [1, 4] {
            let out = dir.path().join(format!("{stem}-{threads}.csv"));
            let status = Command::new(bin)
                .args([*cmd, "--config"])
                .arg(cfg)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "31", "--threads", &threads.to_string()])
                .status()
                .unwrap();
            assert!(status.success(), "{cmd} {} failed", cfg.display());
            outputs.push(fs::read(&out).unwrap());
        }
        if outputs[0] != outputs[1] {
            mismatched.push(format!("{cmd}:{stem}"));
        }
    }
    outcome(mismatched.is_empty(), format!("{} invocations, differing: {:?}", runs.len(), mismatched))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 orthant bound", Duration::from_secs(60), orthant_bound_holds),
        ("2 relu image dimension", Duration::from_secs(10), relu_image_dimension),
        ("3 region count", Duration::from_secs(120), region_count),
        ("4 width correctness", Duration::from_secs(60), width_correctness),
        ("5 concentration", Duration::from_secs(30), concentration),
        ("6 denoising law", Duration::from_secs(300), denoising_law),
        ("7 exact recovery", Duration::from_secs(180), exact_recovery),
        ("8 eps-term linearity", Duration::from_secs(120), eps_linearity),
        ("9 oracle equivalence", Duration::from_secs(60), oracle_equivalence),
        ("10 determinism", Duration::from_secs(60), cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        println!(
            "criterion {name}: {} [{:.1}s of {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            o.detail
        );
        if !pass {
            failed.push(name);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
