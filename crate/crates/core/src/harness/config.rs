//! Experiment configuration, read from TOML with sections `[mixing]`,
//! `[rows]`, `[structure]`, `[noise]` and `[sweep]`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensembles::{MixingSpec, RowDistribution};
use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;
use crate::structures::{GnnModel, GnnModelDoc, StructureSet};

/// Recipe for a structure set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructureSpec {
    Sparse {
        n: usize,
        sparsity: usize,
    },
    /// Random `dim`-dimensional subspace, or the span of `vectors` if given.
    Subspace {
        n: usize,
        dim: usize,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vectors: Option<Vec<Vec<f64>>>,
    },
    /// Random subspaces with the listed dimensions.
    Union {
        n: usize,
        dims: Vec<usize>,
        seed: u64,
    },
    /// Network with widths `dims = [k, p_1, …, p_d]`; random weights from
    /// `seed` unless `weights` are given row-major per layer.
    Gnn {
        dims: Vec<usize>,
        seed: u64,
        #[serde(default)]
        leaky_slope: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<Vec<f64>>>,
    },
}

impl StructureSpec {
    pub fn build(&self) -> Result<StructureSet> {
        match self {
            StructureSpec::Sparse { n, sparsity } => StructureSet::sparse(*n, *sparsity),
            StructureSpec::Subspace { n, dim, seed, vectors } => match vectors {
                Some(vs) => {
                    if vs.is_empty() || vs.iter().any(|v| v.len() != *n) {
                        return Err(Error::Config(format!("subspace vectors must all have length {n}")));
                    }
                    let spanning = DMatrix::from_fn(*n, vs.len(), |r, c| vs[c][r]);
                    let t = StructureSet::span_of(&spanning)?;
                    if let StructureSet::Subspace { basis } = &t {
                        if basis.ncols() != *dim {
                            return Err(Error::Config(format!(
                                "vectors span a {}-dimensional subspace, config says dim = {dim}",
                                basis.ncols()
                            )));
                        }
                    }
                    Ok(t)
                }
                None => {
                    if *dim == 0 || dim > n {
                        return Err(Error::InvalidSpec(format!("subspace dimension {dim} not in 1..={n}")));
                    }
                    StructureSet::subspace(linalg::random_orthonormal(*n, *dim, &mut seed::rng(*seed)))
                }
            },
            StructureSpec::Union { n, dims, seed } => {
                if dims.is_empty() || dims.iter().any(|d| *d == 0 || d > n) {
                    return Err(Error::InvalidSpec(format!("union member dimensions must lie in 1..={n}")));
                }
                let mut rng = seed::rng(*seed);
                StructureSet::union(dims.iter().map(|&d| linalg::random_orthonormal(*n, d, &mut rng)).collect())
            }
            StructureSpec::Gnn { dims, seed, leaky_slope, weights } => {
                let model = match weights {
                    Some(w) => GnnModel::from_doc(&GnnModelDoc {
                        dims: dims.clone(),
                        leaky_slope: *leaky_slope,
                        weights: w.clone(),
                    })?,
                    None => {
                        let random = GnnModel::random(dims, *seed)?;
                        GnnModel::new(random.weights().to_vec(), *leaky_slope)?
                    }
                };
                Ok(StructureSet::gnn(model))
            }
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            StructureSpec::Sparse { n, .. } | StructureSpec::Subspace { n, .. } | StructureSpec::Union { n, .. } => *n,
            StructureSpec::Gnn { dims, .. } => dims.last().copied().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowsSection {
    pub kind: RowDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    /// ‖w‖₂; the direction is drawn per trial before `A`.
    pub noise_norm: f64,
    /// Requested dist(x, T).
    pub mismatch: f64,
    /// Target for the squared optimization gap.
    pub eps_target: f64,
    /// Synthetic gap ε added to every estimate; 0 disables injection.
    #[serde(default)]
    pub inject_eps: f64,
}

fn default_width_gaussians() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_width_gaussians")]
    pub width_gaussians: usize,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mixing: MixingSpec,
    pub rows: RowsSection,
    pub structure: StructureSpec,
    pub noise: NoiseSection,
    pub sweep: SweepSection,
}

/// Axis names understood by [`ExperimentConfig::at_point`].
pub const AXES: [&str; 6] = ["sr_b", "noise_norm", "mismatch", "eps_target", "inject_eps", "oversampling"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        for (name, v) in [("noise_norm", n.noise_norm), ("mismatch", n.mismatch), ("inject_eps", n.inject_eps)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and nonnegative")));
            }
        }
        if !(n.eps_target >= 0.0) {
            return Err(Error::Config("eps_target must be nonnegative".into()));
        }
        if self.sweep.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        for (name, values) in &self.sweep.axes {
            if !AXES.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown sweep axis '{name}' (known: {})", AXES.join(", "))));
            }
            if values.is_empty() {
                return Err(Error::Config(format!("sweep axis '{name}' has no values")));
            }
        }
        self.mixing.validate()?;
        Ok(())
    }

    /// Cartesian product of the sweep axes, last axis varying fastest. A
    /// config without axes has a single unnamed point.
    pub fn axis_points(&self) -> Vec<AxisPoint> {
        let mut points = vec![AxisPoint::default()];
        for (name, values) in &self.sweep.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.coords.push((name.clone(), v));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// Config with the axis values of `point` applied. `oversampling` is
    /// resolved later, once the width of `T′` is known.
    pub fn at_point(&self, point: &AxisPoint) -> Result<ExperimentConfig> {
        let mut cfg = self.clone();
        for (name, v) in &point.coords {
            match name.as_str() {
                "sr_b" => {
                    if *v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::Config(format!("sr_b axis value {v} is not a positive integer")));
                    }
                    cfg.mixing = MixingSpec::identity(*v as usize);
                }
                "noise_norm" => cfg.noise.noise_norm = *v,
                "mismatch" => cfg.noise.mismatch = *v,
                "eps_target" => cfg.noise.eps_target = *v,
                "inject_eps" => cfg.noise.inject_eps = *v,
                "oversampling" => {}
                other => return Err(Error::Config(format!("unknown sweep axis '{other}'"))),
            }
        }
        cfg.sweep.axes.clear();
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxisPoint {
    pub coords: Vec<(String, f64)>,
}

impl AxisPoint {
    pub fn label(&self) -> String {
        if self.coords.is_empty() {
            return "base".into();
        }
        self.coords.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(";")
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.coords.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
[mixing]
kind = "identity"
rows = 40
cols = 40

[rows]
kind = "gaussian"

[structure]
kind = "sparse"
n = 64
sparsity = 3

[noise]
noise_norm = 1.0
mismatch = 0.0
eps_target = 1e-9

[sweep]
trials = 3
master_seed = 17

[sweep.axes]
sr_b = [32, 64]
noise_norm = [0.5, 1.0, 2.0]
"#;

    #[test]
    fn parses_and_expands_axes() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let points = cfg.axis_points();
        assert_eq!(points.len(), 6);
        // BTreeMap order: noise_norm before sr_b; sr_b varies fastest
        assert_eq!(points[0].label(), "noise_norm=0.5;sr_b=32");
        assert_eq!(points[1].label(), "noise_norm=0.5;sr_b=64");
        let at = cfg.at_point(&points[1]).unwrap();
        assert_eq!(at.mixing, MixingSpec::identity(64));
        assert_eq!(at.noise.noise_norm, 0.5);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml(&SAMPLE.replace("trials = 3", "trials = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&SAMPLE.replace("sr_b =", "bogus =")).is_err());
        assert!(ExperimentConfig::from_toml(&SAMPLE.replace("[noise]\nnoise_norm = 1.0\n", "[noise]\n")).is_err());
        let missing_section = SAMPLE.replace("[rows]\nkind = \"gaussian\"\n", "");
        assert!(matches!(ExperimentConfig::from_toml(&missing_section), Err(Error::Config(_))));
    }

    #[test]
    fn structure_specs_build() {
        let sub = StructureSpec::Subspace { n: 3, dim: 1, seed: 0, vectors: Some(vec![vec![1.0, 1.0, 0.0]]) };
        assert_eq!(sub.build().unwrap().ambient_dim(), 3);
        let wrong = StructureSpec::Subspace { n: 3, dim: 2, seed: 0, vectors: Some(vec![vec![1.0, 1.0, 0.0]]) };
        assert!(wrong.build().is_err());
        let gnn = StructureSpec::Gnn { dims: vec![1, 2], seed: 0, leaky_slope: 0.0, weights: Some(vec![vec![1.0, -1.0]]) };
        assert!(matches!(gnn.build().unwrap(), StructureSet::GnnRange { .. }));
        let union = StructureSpec::Union { n: 5, dims: vec![2, 6], seed: 0 };
        assert!(union.build().is_err());
    }
}
