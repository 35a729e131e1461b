//! Seeded Monte Carlo experiments: single trials, resumable sweeps,
//! concentration checks and log-log slope fits.

mod analysis;
mod config;

pub use analysis::{fit_slope, fit_slope_points, verify_concentration, ConcentrationSummary, Directions, SlopeFit};
pub use config::{AxisPoint, ExperimentConfig, NoiseSection, RowsSection, StructureSpec, SweepSection, AXES};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensembles::{build_mixing, sample_a, stable_rank, MixingSpec};
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::geometry::{gnn_width_bound_for, width_mc, WidthSet};
use crate::linalg;
use crate::seed;
use crate::solvers::{inject_gap, solve_with_gap_target, SolveOptions};
use crate::structures::{distance, project, sample_point, LatentOptions, StructureSet};

pub const CSV_HEADER: &str = "axis_point,trial,seed,sr_b,width,width_source,noise_norm,eps_achieved,eps_certified,\
mismatch,recovery_error,term_noise,term_eps,term_mismatch,converged,wall_ms";

/// Random streams of a trial, in the order they are consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truth = 0,
    Noise = 1,
    Matrix = 2,
    Solver = 3,
    Inject = 4,
}

const WIDTH_KEY: u64 = u64::MAX;
const MISMATCH_ATTEMPTS: usize = 50;
const MISMATCH_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthSource {
    /// Monte Carlo estimate of `w((T − T) ∩ S)`.
    MonteCarlo,
    /// Analytic region-count bound for network ranges.
    Bound,
}

impl WidthSource {
    pub fn label(self) -> &'static str {
        match self {
            WidthSource::MonteCarlo => "mc",
            WidthSource::Bound => "bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub axis_point: String,
    pub trial: usize,
    pub seed: u64,
    pub sr_b: f64,
    pub width: f64,
    pub width_source: WidthSource,
    pub noise_norm: f64,
    /// ε, the square root of the achieved objective gap.
    pub eps_achieved: f64,
    pub eps_certified: bool,
    /// Measured dist(x, T).
    pub mismatch: f64,
    pub recovery_error: f64,
    pub term_noise: f64,
    pub term_eps: f64,
    pub term_mismatch: f64,
    pub converged: bool,
    pub wall_ms: f64,
    pub draw_order: Vec<Stream>,
}

impl TrialResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.axis_point,
            self.trial,
            self.seed,
            g17(self.sr_b),
            g17(self.width),
            self.width_source.label(),
            g17(self.noise_norm),
            g17(self.eps_achieved),
            self.eps_certified,
            g17(self.mismatch),
            g17(self.recovery_error),
            g17(self.term_noise),
            g17(self.term_eps),
            g17(self.term_mismatch),
            self.converged,
            g17(self.wall_ms)
        )
    }
}

/// One axis point with everything shared by its trials precomputed.
#[derive(Debug, Clone)]
pub struct PreparedPoint {
    pub point: AxisPoint,
    pub config: ExperimentConfig,
    pub structure: StructureSet,
    pub mixing: DMatrix<f64>,
    pub sr_b: f64,
    pub frobenius: f64,
    pub width: f64,
    pub width_source: WidthSource,
}

/// Width of `(T − T) ∩ S` used in the bound terms.
pub fn width_for(structure: &StructureSet, num_gaussians: usize, master_seed: u64) -> Result<(f64, WidthSource)> {
    match structure {
        StructureSet::GnnRange { model } => Ok((gnn_width_bound_for(model).width_bound, WidthSource::Bound)),
        _ => {
            let est = width_mc(
                structure,
                WidthSet::Difference,
                num_gaussians,
                seed::derive(master_seed, WIDTH_KEY),
                &LatentOptions::default(),
            )?;
            Ok((est.mean, WidthSource::MonteCarlo))
        }
    }
}

impl PreparedPoint {
    fn new(base: &ExperimentConfig, point: AxisPoint, structure: &StructureSet, width: (f64, WidthSource)) -> Result<Self> {
        let mut config = base.at_point(&point)?;
        if let Some(r) = point.get("oversampling") {
            let k = config.rows.kind.nominal_k();
            let scale = k * k * k.ln() * width.0 * width.0;
            if !(r > 0.0) || !(scale > 0.0) {
                return Err(Error::Config(format!("oversampling {r} cannot be resolved to a mixing size")));
            }
            config.mixing = MixingSpec::identity(((r * scale).ceil() as usize).max(1));
        }
        if config.mixing.cols == 0 {
            return Err(Error::Config("mixing needs at least one column".into()));
        }
        let mixing = build_mixing(&config.mixing)?;
        let sr_b = stable_rank(&mixing)?;
        let frobenius = linalg::frobenius(&mixing);
        Ok(PreparedPoint {
            point,
            config,
            structure: structure.clone(),
            mixing,
            sr_b,
            frobenius,
            width: width.0,
            width_source: width.1,
        })
    }

    pub fn label(&self) -> String {
        self.point.label()
    }

    pub fn run_trial(&self, trial: usize, record_timing: bool) -> Result<TrialResult> {
        let start = Instant::now();
        let cfg = &self.config;
        let t = &self.structure;
        let n = t.ambient_dim();
        let trial_seed = seed::derive(cfg.sweep.master_seed, trial as u64);
        let stream = |s: Stream| seed::stream(trial_seed, s as u64);
        let mut draw_order = Vec::with_capacity(5);
        let latent = LatentOptions { seed: seed::derive(trial_seed, Stream::Solver as u64), ..LatentOptions::default() };

        let mut rng = stream(Stream::Truth);
        let x_t = sample_point(t, &mut rng, true)?;
        let x = perturb(t, &x_t, cfg.noise.mismatch, &latent, &mut rng)?;
        draw_order.push(Stream::Truth);

        let l = self.mixing.nrows();
        let w = linalg::unit_vector(l, &mut stream(Stream::Noise)) * cfg.noise.noise_norm;
        draw_order.push(Stream::Noise);

        let a = sample_a(cfg.rows.kind, self.mixing.ncols(), n, &mut stream(Stream::Matrix))?;
        draw_order.push(Stream::Matrix);

        let m = &self.mixing * a;
        let y = &m * &x + w;
        let opts = SolveOptions { latent, ..SolveOptions::default() };
        let mut report = solve_with_gap_target(&y, &m, t, cfg.noise.eps_target, &opts)?;
        draw_order.push(Stream::Solver);
        if cfg.noise.inject_eps > 0.0 {
            report = inject_gap(&report, &y, &m, t, cfg.noise.inject_eps, &mut stream(Stream::Inject))?;
            draw_order.push(Stream::Inject);
        }

        let dist = if cfg.noise.mismatch == 0.0 { 0.0 } else { distance(t, &x, &latent)? };
        let k = cfg.rows.kind.nominal_k();
        let eps = report.eps();
        let sqrt_sr = self.sr_b.sqrt();
        let result = TrialResult {
            axis_point: self.label(),
            trial,
            seed: trial_seed,
            sr_b: self.sr_b,
            width: self.width,
            width_source: self.width_source,
            noise_norm: cfg.noise.noise_norm,
            eps_achieved: eps,
            eps_certified: report.eps_certified,
            mismatch: dist,
            recovery_error: (&x - &report.xhat).norm(),
            term_noise: k * self.width / (self.frobenius * sqrt_sr) * cfg.noise.noise_norm,
            term_eps: eps / self.frobenius,
            term_mismatch: k * (l as f64).sqrt() / sqrt_sr * dist,
            converged: report.converged,
            wall_ms: if record_timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
            draw_order,
        };
        let numbers = [
            result.sr_b,
            result.width,
            result.eps_achieved,
            result.mismatch,
            result.recovery_error,
            result.term_noise,
            result.term_eps,
            result.term_mismatch,
        ];
        if numbers.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trial {trial} at {} produced a non-finite field", result.axis_point)));
        }
        Ok(result)
    }
}

/// `x_t + mismatch·u` with `u` a unit direction pointing away from `T`,
/// retried until dist(x, T) is within 10% of `mismatch`. After the retry
/// budget the closest candidate is kept.
fn perturb(
    t: &StructureSet,
    x_t: &DVector<f64>,
    mismatch: f64,
    latent: &LatentOptions,
    rng: &mut seed::Rng,
) -> Result<DVector<f64>> {
    if mismatch == 0.0 {
        return Ok(x_t.clone());
    }
    let n = x_t.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..MISMATCH_ATTEMPTS {
        let v = linalg::unit_vector(n, rng);
        let u = &v - project(t, &v, latent)?.point;
        let norm = u.norm();
        if norm < 1e-12 {
            continue;
        }
        let x = x_t + u * (mismatch / norm);
        let err = (distance(t, &x, latent)? - mismatch).abs();
        if err <= MISMATCH_TOL * mismatch {
            return Ok(x);
        }
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, x));
        }
    }
    best.map(|(_, x)| x)
        .ok_or_else(|| Error::Domain(format!("no direction leaves {} for the mismatch", t.describe())))
}

/// An experiment with every axis point prepared.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub points: Vec<PreparedPoint>,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let structure = config.structure.build()?;
        let width = width_for(&structure, config.sweep.width_gaussians, config.sweep.master_seed)?;
        let points = config
            .axis_points()
            .into_iter()
            .map(|p| PreparedPoint::new(config, p, &structure, width))
            .collect::<Result<Vec<_>>>()?;
        Ok(Experiment { config: config.clone(), points })
    }

    pub fn num_rows(&self) -> usize {
        self.points.len() * self.config.sweep.trials
    }

    /// Row keys `(point, trial)` in output order.
    pub fn keys(&self) -> Vec<(usize, usize)> {
        (0..self.points.len()).flat_map(|p| (0..self.config.sweep.trials).map(move |t| (p, t))).collect()
    }

    pub fn run(&self, point: usize, trial: usize, record_timing: bool) -> Result<TrialResult> {
        self.points[point].run_trial(trial, record_timing)
    }

    /// All rows, computed in parallel and returned in key order.
    pub fn run_all(&self) -> Result<Vec<TrialResult>> {
        self.keys().par_iter().map(|&(p, t)| self.run(p, t, false)).collect()
    }
}

/// Runs one trial of `config` at its base values (sweep axes ignored).
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    let mut base = config.clone();
    base.sweep.axes.clear();
    let exp = Experiment::new(&base)?;
    exp.run(0, trial, false)
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Continue from an existing `<out>.partial` file.
    pub resume: bool,
    /// Record wall-clock time per trial; makes output nondeterministic.
    pub record_timing: bool,
    /// Trials computed in parallel between checkpoints.
    pub chunk: usize,
    /// Stop after this many rows are checkpointed, leaving the partial file
    /// in place as an interrupted run would.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepStatus {
    pub rows: usize,
    pub resumed_rows: usize,
    pub complete: bool,
}

pub fn partial_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Header lines shared by the partial and final files.
fn header_block(comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        for line in c.lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
    }
    s.push_str(CSV_HEADER);
    s.push('\n');
    s
}

/// In-memory sweep: header plus one row per (axis point, trial).
pub fn sweep(config: &ExperimentConfig, comments: &[String]) -> Result<String> {
    if config.sweep.axes.is_empty() {
        return Err(Error::Config("a sweep needs at least one axis".into()));
    }
    let exp = Experiment::new(config)?;
    let mut out = header_block(comments);
    for r in exp.run_all()? {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    Ok(out)
}

/// Checkpointed sweep writing to `out`. Rows are appended to
/// `<out>.partial` in key order; on completion the full file is written
/// atomically to `out` and the partial file removed.
pub fn sweep_to_path(config: &ExperimentConfig, comments: &[String], out: &Path, opts: &SweepOptions) -> Result<SweepStatus> {
    if config.sweep.axes.is_empty() {
        return Err(Error::Config("a sweep needs at least one axis".into()));
    }
    let exp = Experiment::new(config)?;
    let header = header_block(comments);
    let partial = partial_path(out);
    let keys = exp.keys();
    let label_of = |&(p, t): &(usize, usize)| (exp.points[p].label(), t);

    let mut done: BTreeMap<(String, usize), String> = BTreeMap::new();
    if partial.exists() {
        if !opts.resume {
            return Err(Error::Config(format!("{} exists; pass --resume to continue it", partial.display())));
        }
        let text = fs::read_to_string(&partial).map_err(|e| Error::io(&partial, e))?;
        let body = text
            .strip_prefix(&header)
            .ok_or_else(|| Error::Config(format!("{} was written by a different config", partial.display())))?;
        // a torn final line from a killed writer is dropped and recomputed
        let complete = body.rfind('\n').map_or("", |i| &body[..=i]);
        for line in complete.lines() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != CSV_HEADER.split(',').count() {
                continue;
            }
            let trial = fields[1].parse().map_err(|_| Error::Csv(format!("bad trial index in {line}")))?;
            done.insert((fields[0].to_string(), trial), line.to_string());
        }
    }
    let resumed_rows = done.len();

    // rewrite the partial from the recovered rows so a torn tail is dropped
    let mut body = header.clone();
    for key in &keys {
        if let Some(line) = done.get(&label_of(key)) {
            body.push_str(line);
            body.push('\n');
        }
    }
    fs::write(&partial, &body).map_err(|e| Error::io(&partial, e))?;
    let mut file = fs::OpenOptions::new().append(true).open(&partial).map_err(|e| Error::io(&partial, e))?;

    let todo: Vec<(usize, usize)> = keys.iter().copied().filter(|k| !done.contains_key(&label_of(k))).collect();
    let chunk = if opts.chunk == 0 { 64 } else { opts.chunk };
    let mut written = resumed_rows;
    for batch in todo.chunks(chunk) {
        let limit = opts.stop_after.map(|s| s.saturating_sub(written).min(batch.len())).unwrap_or(batch.len());
        let rows: Vec<TrialResult> =
            batch[..limit].par_iter().map(|&(p, t)| exp.run(p, t, opts.record_timing)).collect::<Result<_>>()?;
        let mut text = String::new();
        for (key, r) in batch.iter().zip(&rows) {
            let line = r.csv_row();
            text.push_str(&line);
            text.push('\n');
            done.insert(label_of(key), line);
        }
        file.write_all(text.as_bytes()).map_err(|e| Error::io(&partial, e))?;
        file.sync_data().map_err(|e| Error::io(&partial, e))?;
        written += rows.len();
        if opts.stop_after.is_some_and(|s| written >= s) && written < keys.len() {
            return Ok(SweepStatus { rows: written, resumed_rows, complete: false });
        }
    }
    drop(file);

    let mut full = header;
    for key in &keys {
        let line = done
            .get(&label_of(key))
            .ok_or_else(|| Error::Domain(format!("row {key:?} missing after sweep")))?;
        full.push_str(line);
        full.push('\n');
    }
    if full.lines().filter(|l| !l.starts_with('#')).count() != keys.len() + 1 {
        return Err(Error::Domain("sweep row count differs from the configured grid".into()));
    }
    write_atomic(out, full.as_bytes())?;
    fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
    Ok(SweepStatus { rows: keys.len(), resumed_rows, complete: true })
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
