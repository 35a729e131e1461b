use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mixsense")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn width_matches_chi_mean_and_logs_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let o = run(&["width", "--config", path_str(&config("width_subspace.toml")), "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# mixsense width"));
    assert!(text.contains("# seed = 1\n"));
    assert!(text.contains("# dim = 4\n"));
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 2);
    let mean: f64 = rows[1].split(',').nth(4).unwrap().parse().unwrap();
    let stderr: f64 = rows[1].split(',').nth(5).unwrap().parse().unwrap();
    // E‖g‖ for g ~ N(0, I_4)
    assert!((mean - 1.879_971_206_0).abs() <= 3.0 * stderr, "{mean}");
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg = config("width_subspace.toml");
    run(&["width", "--config", path_str(&cfg), "--out", path_str(&a), "--seed", "5"]);
    run(&["width", "--config", path_str(&cfg), "--out", path_str(&b), "--seed", "6"]);
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert!(ta.contains("# seed = 5\n") && tb.contains("# seed = 6\n"));
    assert_ne!(data_lines(&ta), data_lines(&tb));
}

#[test]
fn usage_errors_exit_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(run(&["frobnicate", "--out", path_str(&out)]).status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(run(&["width", "--out", path_str(&out)]).status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["width", "--config", path_str(&missing), "--out", path_str(&out)]).status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[structure]\nkind = \"sparse\"\n").unwrap();
    assert_eq!(run(&["width", "--config", path_str(&bad), "--out", path_str(&out)]).status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let cfg = dir.path().join("big.toml");
    // exceeds the region enumeration scale guard
    fs::write(&cfg, "[network]\ndims = [2, 12, 12]\nseed = 1\n").unwrap();
    assert_eq!(run(&["regions", "--config", path_str(&cfg), "--out", path_str(&out)]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn solve_writes_report_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = run(&["solve", "--config", path_str(&config("solve_explicit.toml")), "--out", path_str(&out)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let rows = data_lines(&text);
    assert!(rows[0].starts_with("objective,eps_upper"));
    assert!(rows[1].starts_with("0.25,0,true,"));
    let xhat = fs::read_to_string(dir.path().join("s.csv.xhat.csv")).unwrap();
    let values: Vec<f64> = data_lines(&xhat)[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!((values[0] - 2.0).abs() < 1e-12 && (values[1] - 2.0).abs() < 1e-12 && values[2].abs() < 1e-12);
}

#[test]
fn regions_orthants_concentration_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    assert!(run(&["regions", "--config", path_str(&config("regions_small.toml")), "--out", path_str(&out)]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let regions: usize = text.lines().find_map(|l| l.strip_prefix("# regions = ")).unwrap().parse().unwrap();
    assert_eq!(data_lines(&text).len(), regions + 1);

    assert!(run(&["orthants", "--config", path_str(&config("orthants.toml")), "--out", path_str(&out)]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 51);
    assert!(rows[1..].iter().all(|r| r.ends_with(",true")));

    assert!(run(&["concentration", "--config", path_str(&config("concentration.toml")), "--out", path_str(&out)])
        .status
        .success());
    let text = fs::read_to_string(&out).unwrap();
    let median: f64 = data_lines(&text)[1].split(',').nth(3).unwrap().parse().unwrap();
    assert!((median - 1.0).abs() < 0.05);
}

#[test]
fn sweep_resume_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gap.csv");
    let cfg = config("sweep_gap.toml");
    let args = ["sweep", "--config", path_str(&cfg), "--out", path_str(&out)];
    assert!(run(&args).status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(data_lines(&text).len(), 4 * 20 + 1);
    assert!(!dir.path().join("gap.csv.partial").exists());

    // a leftover partial file blocks a fresh run until --resume is given
    let cut = dir.path().join("cut.csv");
    let partial = dir.path().join("cut.csv.partial");
    let header_and_half: String = text.lines().take(text.lines().count() - 40).map(|l| format!("{l}\n")).collect();
    fs::write(&partial, header_and_half).unwrap();
    let base = ["sweep", "--config", path_str(&cfg), "--out", path_str(&cut)];
    assert_eq!(run(&base).status.code(), Some(1));
    assert!(!cut.exists());
    let mut resumed: Vec<&str> = base.to_vec();
    resumed.push("--resume");
    assert!(run(&resumed).status.success());
    assert_eq!(fs::read(&cut).unwrap(), fs::read(&out).unwrap());

    let slope_cfg = dir.path().join("slope.toml");
    fs::write(&slope_cfg, "[slope]\ninput = \"gap.csv\"\nx_col = \"eps_achieved\"\ny_col = \"recovery_error\"\n").unwrap();
    let slope_out = dir.path().join("slope.csv");
    assert!(run(&["slope", "--config", path_str(&slope_cfg), "--out", path_str(&slope_out)]).status.success());
    let text = fs::read_to_string(&slope_out).unwrap();
    let slope: f64 = data_lines(&text)[1].split(',').next().unwrap().parse().unwrap();
    assert!((slope - 1.0).abs() < 0.15);
}

#[test]
fn in_process_entry_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let code = mixsense::cli::run([
        "mixsense",
        "orthants",
        "--config",
        path_str(&config("orthants.toml")),
        "--out",
        path_str(&out),
        "--threads",
        "2",
    ]);
    assert_eq!(code, 0);
    assert!(out.exists());
}
