use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensembles::{sample_a, RowDistribution};
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::linalg;
use crate::seed;
use crate::structures::{sample_point, StructureSet};

/// Where the test directions `h` come from.
#[derive(Debug, Clone)]
pub enum Directions {
    /// A single fixed direction, normalized before use.
    Fixed(DVector<f64>),
    /// Normalized differences of two random points of an exact structure.
    Differences(StructureSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationSummary {
    pub samples: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub within_0_1: f64,
    pub within_0_3: f64,
}

impl ConcentrationSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn csv_header() -> &'static str {
        "samples,min,q1,median,q3,max,iqr,within_0.1,within_0.3"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.samples,
            g17(self.min),
            g17(self.q1),
            g17(self.median),
            g17(self.q3),
            g17(self.max),
            g17(self.iqr()),
            g17(self.within_0_1),
            g17(self.within_0_3)
        )
    }
}

fn direction(dirs: &Directions, rng: &mut seed::Rng) -> Result<DVector<f64>> {
    match dirs {
        Directions::Fixed(h) => Ok(h / h.norm()),
        Directions::Differences(t) => {
            for _ in 0..100 {
                let d = sample_point(t, rng, false)? - sample_point(t, rng, false)?;
                let norm = d.norm();
                if norm > 0.0 {
                    return Ok(d / norm);
                }
            }
            Err(Error::Domain(format!("{} yielded only zero differences", t.describe())))
        }
    }
}

/// Distribution of `‖B A h‖₂ / ‖B‖_F` over `num_directions` directions and
/// `trials` fresh draws of `A` per direction.
pub fn verify_concentration(
    b: &DMatrix<f64>,
    dist: RowDistribution,
    dirs: &Directions,
    num_directions: usize,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationSummary> {
    let fro = linalg::frobenius(b);
    if !(fro > 0.0) {
        return Err(Error::Domain("‖B‖_F must be positive".into()));
    }
    if num_directions == 0 || trials == 0 {
        return Err(Error::Options("need at least one direction and one trial".into()));
    }
    let n = match dirs {
        Directions::Fixed(h) => {
            if !(h.norm() > 0.0) || h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("fixed direction must be finite and nonzero".into()));
            }
            h.len()
        }
        Directions::Differences(t) => {
            if !t.is_exact() {
                return Err(Error::Options("concentration check needs an exact structure".into()));
            }
            t.ambient_dim()
        }
    };
    let hs = (0..num_directions)
        .map(|j| direction(dirs, &mut seed::stream(seed, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut ratios = (0..num_directions * trials)
        .into_par_iter()
        .map(|i| {
            let (j, t) = (i / trials, i % trials);
            let mut rng = seed::stream(seed::derive(seed, j as u64), t as u64);
            let a = sample_a(dist, b.ncols(), n, &mut rng)?;
            Ok((b * (a * &hs[j])).norm() / fro)
        })
        .collect::<Result<Vec<f64>>>()?;
    ratios.sort_by(f64::total_cmp);
    let frac = |delta: f64| ratios.iter().filter(|r| (**r - 1.0).abs() <= delta).count() as f64 / ratios.len() as f64;
    Ok(ConcentrationSummary {
        samples: ratios.len(),
        min: ratios[0],
        q1: linalg::quantile_sorted(&ratios, 0.25),
        median: linalg::quantile_sorted(&ratios, 0.5),
        q3: linalg::quantile_sorted(&ratios, 0.75),
        max: ratios[ratios.len() - 1],
        within_0_1: frac(0.1),
        within_0_3: frac(0.3),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// `(x, median y)` per distinct `x`, sorted by `x`.
    pub points: Vec<(f64, f64)>,
}

impl SlopeFit {
    pub fn csv_header() -> &'static str {
        "slope,stderr,intercept,points"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", g17(self.slope), g17(self.stderr), g17(self.intercept), self.points.len())
    }
}

/// Ordinary least squares of `log(median y)` on `log x`, grouping by `x`.
pub fn fit_slope_points(data: &[(f64, f64)]) -> Result<SlopeFit> {
    if data.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::Domain("log-log fit needs finite positive data".into()));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = Vec::new();
    for group in sorted.chunk_by(|a, b| a.0 == b.0) {
        let ys: Vec<f64> = group.iter().map(|p| p.1).collect();
        points.push((group[0].0, linalg::median(&ys)));
    }
    if points.len() < 4 {
        return Err(Error::Domain(format!("need at least 4 distinct x values, got {}", points.len())));
    }
    let k = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (sse / (k - 2.0) / sxx).sqrt();
    Ok(SlopeFit { slope, stderr, intercept, points })
}

/// Reads columns `x_col` and `y_col` from CSV text (lines starting with `#`
/// are comments) and fits the log-log slope.
pub fn fit_slope(csv_text: &str, x_col: &str, y_col: &str) -> Result<SlopeFit> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("column '{name}' not found")))
    };
    let (xi, yi) = (col(x_col)?, col(y_col)?);
    let mut data = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Csv(format!("non-numeric value in row {:?}", rec.position().map(|p| p.line()))))
        };
        data.push((parse(xi)?, parse(yi)?));
    }
    fit_slope_points(&data)
}
