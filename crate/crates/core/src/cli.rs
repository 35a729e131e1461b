//! Command-line front end. Every subcommand reads a TOML config, writes one
//! CSV file atomically, and prefixes it with `#` lines holding the resolved
//! config and seed.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensembles::{build_mixing, sample_a, MixingSpec, RowDistribution};
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::geometry::{
    count_orthants, gnn_width_bound_for, orthant_bound, width_mc, width_region_cover, OrthantMode, WidthSet,
};
use crate::harness::{
    fit_slope, sweep_to_path, verify_concentration, write_atomic, Directions, ExperimentConfig, RowsSection,
    StructureSpec, SweepOptions,
};
use crate::linalg;
use crate::seed;
use crate::solvers::{solve_with_gap_target, SolveOptions, SolveReport};
use crate::structures::{enumerate_regions, regions_to_csv, sample_point, LatentOptions, StructureSet};

#[derive(Debug, Parser)]
#[command(name = "mixsense", version, about = "Recovery experiments for structured signals under mixed sub-gaussian measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Override the seed in the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub threads: usize,
    /// Continue an interrupted sweep from its `.partial` file.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Print progress to stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Monte Carlo Gaussian mean width of a structure set.
    Width,
    /// Solve the constrained least-squares program once.
    Solve,
    /// Run a seeded parameter sweep of recovery trials.
    Sweep,
    /// Enumerate the activation regions of a small ReLU network.
    Regions,
    /// Count orthants touched by random subspaces.
    Orthants,
    /// Check concentration of ‖BAh‖/‖B‖_F.
    Concentration,
    /// Fit a log-log slope to two columns of a CSV file.
    Slope,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Width => "width",
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Regions => "regions",
            Command::Orthants => "orthants",
            Command::Concentration => "concentration",
            Command::Slope => "slope",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthSection {
    pub set: WidthSet,
    pub num_gaussians: usize,
    pub seed: u64,
    /// Networks only: bound the sup by exact region enumeration instead of
    /// latent search.
    #[serde(default)]
    pub region_cover: bool,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    LatentOptions::default().restarts
}

fn default_max_iters() -> usize {
    SolveOptions::default().max_iters
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthConfig {
    pub structure: StructureSpec,
    pub width: WidthSection,
}

/// Measurements for `solve`: given explicitly, or drawn from the structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    /// `y` and row-major `M`.
    Explicit { y: Vec<f64>, matrix: Vec<Vec<f64>> },
    /// `y = B A x + w` with `x` a unit point of the structure and `‖w‖ = noise_norm`.
    Synthetic { mixing: MixingSpec, rows: RowDistribution, noise_norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub eps_target: f64,
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub structure: StructureSpec,
    pub problem: ProblemSpec,
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSection {
    pub dims: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub leaky_slope: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionsConfig {
    pub network: NetworkSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthantModeName {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthantsSection {
    pub n: usize,
    /// Subspace dimension; each subspace draws it uniformly from `1..=k`
    /// when `vary_dim` is set.
    pub k: usize,
    pub subspaces: usize,
    pub seed: u64,
    pub mode: OrthantModeName,
    #[serde(default)]
    pub vary_dim: bool,
    #[serde(default)]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthantsConfig {
    pub orthants: OrthantsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSection {
    pub num_directions: usize,
    pub trials: usize,
    pub seed: u64,
    /// Used when no `[structure]` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConfig {
    pub mixing: MixingSpec,
    pub rows: RowsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureSpec>,
    pub concentration: ConcentrationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSection {
    /// CSV input; relative paths resolve against the config's directory.
    pub input: PathBuf,
    pub x_col: String,
    pub y_col: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeConfig {
    pub slope: SlopeSection,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage error, 2 numeric or domain error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mixsense {}: {e}", cli.command.name());
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let out = cli.out.as_deref().ok_or_else(|| Error::Config("--out is required".into()))?;
    let text = fs::read_to_string(config).map_err(|e| Error::io(config, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match cli.command {
        Command::Width => width(cli, &text, out),
        Command::Solve => solve(cli, &text, out),
        Command::Sweep => sweep(cli, &text, out),
        Command::Regions => regions(cli, &text, out),
        Command::Orthants => orthants(cli, &text, out),
        Command::Concentration => concentration(cli, &text, out),
        Command::Slope => slope(cli, config, &text, out),
    })
}

fn parse<C: DeserializeOwned>(text: &str) -> Result<C> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

fn header_comments<C: Serialize>(command: Command, seed: Option<u64>, config: &C) -> Vec<String> {
    let resolved = toml::to_string(config).expect("configs are serializable");
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    vec![
        format!("mixsense {} {}", command.name(), env!("CARGO_PKG_VERSION")),
        format!("seed = {seed}"),
        "resolved config:".to_string(),
        resolved.trim_end().to_string(),
    ]
}

fn render(comments: &[String], body: &str) -> String {
    let mut s = String::new();
    for c in comments {
        for line in c.lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
    }
    s.push_str(body);
    s
}

fn log(cli: &Cli, msg: impl AsRef<str>) {
    if cli.verbose > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

fn width(cli: &Cli, text: &str, out: &Path) -> Result<()> {
    let mut cfg: WidthConfig = parse(text)?;
    if let Some(s) = cli.seed {
        cfg.width.seed = s;
    }
    let t = cfg.structure.build()?;
    let w = &cfg.width;
    let latent = LatentOptions { restarts: w.restarts, seed: seed::derive(w.seed, 1), ..LatentOptions::default() };
    let est = match (&t, w.region_cover) {
        (StructureSet::GnnRange { model }, true) => width_region_cover(model, w.set, w.num_gaussians, w.seed)?,
        (_, true) => return Err(Error::Config("region_cover applies to network structures only".into())),
        _ => width_mc(&t, w.set, w.num_gaussians, w.seed, &latent)?,
    };
    let bound = match &t {
        StructureSet::GnnRange { model } => g17(gnn_width_bound_for(model).width_bound),
        _ => String::new(),
    };
    let body = format!(
        "structure,set,sup_solver,num_gaussians,mean,stderr,bound\n{},{},{},{},{},{},{}\n",
        t.describe(),
        w.set.label(),
        est.sup_solver.label(),
        est.num_gaussians,
        g17(est.mean),
        g17(est.stderr),
        bound
    );
    log(cli, format!("width {} ± {}", est.mean, est.stderr));
    write_atomic(out, render(&header_comments(Command::Width, Some(w.seed), &cfg), &body).as_bytes())
}

fn solve(cli: &Cli, text: &str, out: &Path) -> Result<()> {
    let mut cfg: SolveConfig = parse(text)?;
    if let Some(s) = cli.seed {
        cfg.solver.seed = s;
    }
    let t = cfg.structure.build()?;
    let n = t.ambient_dim();
    let seed = cfg.solver.seed;
    let (y, m, truth) = match &cfg.problem {
        ProblemSpec::Explicit { y, matrix } => {
            let rows = matrix.len();
            if rows == 0 || matrix.iter().any(|r| r.len() != n) || y.len() != rows {
                return Err(Error::Config(format!("matrix must be {} rows of length {n} matching y", y.len())));
            }
            (DVector::from_vec(y.clone()), DMatrix::from_fn(rows, n, |r, c| matrix[r][c]), None)
        }
        ProblemSpec::Synthetic { mixing, rows, noise_norm } => {
            if !(*noise_norm >= 0.0) {
                return Err(Error::Config("noise_norm must be nonnegative".into()));
            }
            let b = build_mixing(mixing)?;
            let x = sample_point(&t, &mut seed::stream(seed, 0), true)?;
            let w = linalg::unit_vector(b.nrows(), &mut seed::stream(seed, 1)) * *noise_norm;
            let a = sample_a(*rows, b.ncols(), n, &mut seed::stream(seed, 2))?;
            let m = b * a;
            let y = &m * &x + w;
            (y, m, Some(x))
        }
    };
    let opts = SolveOptions {
        max_iters: cfg.solver.max_iters,
        latent: LatentOptions {
            restarts: cfg.solver.restarts,
            seed: seed::derive(seed, 3),
            ..LatentOptions::default()
        },
        ..SolveOptions::default()
    };
    let report = solve_with_gap_target(&y, &m, &t, cfg.solver.eps_target, &opts)?;
    let mut body = format!("{},recovery_error\n{},", SolveReport::csv_header(), report.csv_row());
    if let Some(x) = &truth {
        body.push_str(&g17((x - &report.xhat).norm()));
    }
    body.push('\n');
    let comments = header_comments(Command::Solve, Some(seed), &cfg);
    let mut xcsv = String::from(if truth.is_some() { "index,xhat,truth\n" } else { "index,xhat\n" });
    for i in 0..n {
        xcsv.push_str(&format!("{i},{}", g17(report.xhat[i])));
        if let Some(x) = &truth {
            xcsv.push_str(&format!(",{}", g17(x[i])));
        }
        xcsv.push('\n');
    }
    let mut xpath = out.as_os_str().to_owned();
    xpath.push(".xhat.csv");
    write_atomic(Path::new(&xpath), render(&comments, &xcsv).as_bytes())?;
    log(cli, format!("objective {} via {}", report.objective, report.strategy.label()));
    write_atomic(out, render(&comments, &body).as_bytes())
}

fn sweep(cli: &Cli, text: &str, out: &Path) -> Result<()> {
    let mut cfg = ExperimentConfig::from_toml(text)?;
    if let Some(s) = cli.seed {
        cfg.sweep.master_seed = s;
    }
    let comments = header_comments(Command::Sweep, Some(cfg.sweep.master_seed), &cfg);
    let opts = SweepOptions { resume: cli.resume, ..SweepOptions::default() };
    let status = sweep_to_path(&cfg, &comments, out, &opts)?;
    log(cli, format!("{} rows ({} resumed)", status.rows, status.resumed_rows));
    Ok(())
}

fn regions(cli: &Cli, text: &str, out: &Path) -> Result<()> {
    let mut cfg: RegionsConfig = parse(text)?;
    if let Some(s) = cli.seed {
        cfg.network.seed = s;
    }
    let net = &cfg.network;
    let spec = StructureSpec::Gnn {
        dims: net.dims.clone(),
        seed: net.seed,
        leaky_slope: net.leaky_slope,
        weights: net.weights.clone(),
    };
    let StructureSet::GnnRange { model } = spec.build()? else { unreachable!("gnn spec builds a network") };
    let regions = enumerate_regions(&model)?;
    let bound = gnn_width_bound_for(&model);
    let mut comments = header_comments(Command::Regions, Some(net.seed), &cfg);
    comments.push(format!("regions = {}", regions.len()));
    comments.push(format!("region_count_bound = {}", g17(bound.region_count_bound)));
    comments.push(format!("width_bound = {}", g17(bound.width_bound)));
    log(cli, format!("{} regions", regions.len()));
    write_atomic(out, render(&comments, &regions_to_csv(&regions)).as_bytes())
}

fn orthants(cli: &Cli, text: &str, out: &Path) -> Result<()> {
    let mut cfg: OrthantsConfig = parse(text)?;
    if let Some(s) = cli.seed {
        cfg.orthants.seed = s;
    }
    let o = &cfg.orthants;
    if o.k == 0 || o.k > o.n || o.subspaces == 0 {
        return Err(Error::Config("orthants needs 1 ≤ k ≤ n and at least one subspace".into()));
    }
    let mode = match o.mode {
        OrthantModeName::Exhaustive => OrthantMode::Exhaustive,
        OrthantModeName::Sampled => {
            if o.samples == 0 {
                return Err(Error::Config("sampled mode needs samples ≥ 1".into()));
            }
            OrthantMode::Sampled { samples: o.samples, seed: seed::derive(o.seed, u64::MAX) }
        }
    };
    use rand::Rng as _;
    let bases: Vec<DMatrix<f64>> = (0..o.subspaces)
        .map(|i| {
            let mut rng = seed::stream(o.seed, i as u64);
            let k = if o.vary_dim { rng.random_range(1..=o.k) } else { o.k };
            linalg::random_orthonormal(o.n, k, &mut rng)
        })
        .collect();
    use rayon::prelude::*;
    let counts = bases.par_iter().map(|b| count_orthants(b, mode)).collect::<Result<Vec<_>>>()?;
    let mut body = String::from("subspace,n,k,count,bound,within_bound\n");
    for (i, (b, c)) in bases.iter().zip(&counts).enumerate() {
        let bound = orthant_bound(o.n, b.ncols());
        body.push_str(&format!("{i},{},{},{c},{},{}\n", o.n, b.ncols(), g17(bound), (*c as f64) <= bound));
    }
    log(cli, format!("{} subspaces counted", counts.len()));
    write_atomic(out, render(&header_comments(Command::Orthants, Some(o.seed), &cfg), &body).as_bytes())
}

fn concentration(cli: &Cli, text: &str, out: &Path) -> Result<()> {
    let mut cfg: ConcentrationConfig = parse(text)?;
    if let Some(s) = cli.seed {
        cfg.concentration.seed = s;
    }
    let b = build_mixing(&cfg.mixing)?;
    let c = &cfg.concentration;
    let dirs = match (&cfg.structure, &c.direction) {
        (Some(spec), _) => Directions::Differences(spec.build()?),
        (None, Some(h)) => Directions::Fixed(DVector::from_vec(h.clone())),
        (None, None) => return Err(Error::Config("give either [structure] or concentration.direction".into())),
    };
    let summary = verify_concentration(&b, cfg.rows.kind, &dirs, c.num_directions, c.trials, c.seed)?;
    let body = format!("{}\n{}\n", crate::harness::ConcentrationSummary::csv_header(), summary.csv_row());
    log(cli, format!("median ratio {}", summary.median));
    write_atomic(out, render(&header_comments(Command::Concentration, Some(c.seed), &cfg), &body).as_bytes())
}

fn slope(cli: &Cli, config: &Path, text: &str, out: &Path) -> Result<()> {
    let cfg: SlopeConfig = parse(text)?;
    let input = if cfg.slope.input.is_absolute() {
        cfg.slope.input.clone()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(&cfg.slope.input)
    };
    let data = fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
    let fit = fit_slope(&data, &cfg.slope.x_col, &cfg.slope.y_col)?;
    let mut body = format!("{}\n{}\n", crate::harness::SlopeFit::csv_header(), fit.csv_row());
    body.push_str("#\n# x,median_y\n");
    for (x, y) in &fit.points {
        body.push_str(&format!("# {},{}\n", g17(*x), g17(*y)));
    }
    log(cli, format!("slope {} ± {}", fit.slope, fit.stderr));
    write_atomic(out, render(&header_comments(Command::Slope, cli.seed, &cfg), &body).as_bytes())
}
