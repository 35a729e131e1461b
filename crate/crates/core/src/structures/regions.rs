//! Exhaustive enumeration of the linear regions of a small network.
//!
//! Units are branched one at a time, layer by layer. Each partial pattern
//! defines a polyhedral cone in latent space; it is kept only if a point
//! of that cone inside `[-1, 1]^k` satisfies every sign constraint, with
//! active units required to clear a small margin.

use nalgebra::{DMatrix, DVector};

use super::gnn::{GnnModel, Pattern};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp;

pub const MAX_REGION_LATENT: usize = 3;
pub const MAX_REGION_UNITS: usize = 20;
const ACTIVE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub pattern: Pattern,
    /// Orthonormal basis of `G` restricted to this region (n x dim).
    pub basis: DMatrix<f64>,
    /// Latent point realizing the pattern.
    pub witness: DVector<f64>,
}

impl Region {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Bits per layer, layers separated by `|`.
    pub fn pattern_string(&self) -> String {
        self.pattern
            .iter()
            .map(|layer| layer.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        (x - &self.basis * self.basis.tr_mul(x)).norm()
    }
}

struct Search<'a> {
    model: &'a GnnModel,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    out: Vec<Region>,
}

impl Search<'_> {
    fn feasible(&self) -> Option<Vec<f64>> {
        let k = self.model.latent_dim();
        lp::maximize_in_box(&vec![0.0; k], &self.rows, &self.rhs).map(|(z, _)| z)
    }

    /// `pre` maps latent space to the pre-activations of `layer`, one row
    /// per unit; units before `unit` already have a sign in `pattern`.
    fn branch(&mut self, layer: usize, unit: usize, pre: &DMatrix<f64>, pattern: &mut Pattern, witness: &[f64]) {
        let width = pre.nrows();
        if unit == width {
            let mut next = pre.clone();
            for (i, &on) in pattern[layer].iter().enumerate() {
                if !on {
                    next.row_mut(i).scale_mut(self.model.leaky_slope());
                }
            }
            if layer + 1 == self.model.depth() {
                self.out.push(Region {
                    pattern: pattern.clone(),
                    basis: linalg::orthonormal_basis(&next, linalg::RANK_RTOL),
                    witness: DVector::from_row_slice(witness),
                });
            } else {
                let pre_next = &self.model.weights()[layer + 1] * next;
                pattern.push(Vec::new());
                self.branch(layer + 1, 0, &pre_next, pattern, witness);
                pattern.pop();
            }
            return;
        }
        let row: Vec<f64> = pre.row(unit).iter().copied().collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            pattern[layer].push(false);
            self.branch(layer, unit + 1, pre, pattern, witness);
            pattern[layer].pop();
            return;
        }
        // inactive first: r·z ≤ 0
        let scaled: Vec<f64> = row.iter().map(|v| v / norm).collect();
        for active in [false, true] {
            let (g, h) = if active {
                (scaled.iter().map(|v| -v).collect(), -ACTIVE_MARGIN)
            } else {
                (scaled.clone(), 0.0)
            };
            self.rows.push(g);
            self.rhs.push(h);
            if let Some(z) = self.feasible() {
                pattern[layer].push(active);
                self.branch(layer, unit + 1, pre, pattern, &z);
                pattern[layer].pop();
            }
            self.rows.pop();
            self.rhs.pop();
        }
    }
}

/// Lists every feasible activation pattern of `model` with the image span
/// of its linear piece. Limited to `k ≤ 3` and at most 20 units in total.
pub fn enumerate_regions(model: &GnnModel) -> Result<Vec<Region>> {
    let k = model.latent_dim();
    let units: usize = model.widths().iter().sum();
    if k > MAX_REGION_LATENT || units > MAX_REGION_UNITS {
        return Err(Error::ScaleGuard(format!(
            "region enumeration supports k ≤ {MAX_REGION_LATENT} and at most {MAX_REGION_UNITS} units, got k={k} with {units} units"
        )));
    }
    let mut search = Search { model, rows: Vec::new(), rhs: Vec::new(), out: Vec::new() };
    let pre = model.weights()[0].clone();
    let mut pattern: Pattern = vec![Vec::new()];
    search.branch(0, 0, &pre, &mut pattern, &vec![0.0; k]);
    Ok(search.out)
}

/// CSV listing of regions: `region,pattern,dimension`.
pub fn regions_to_csv(regions: &[Region]) -> String {
    let mut out = String::from("region,pattern,dimension\n");
    for (i, r) in regions.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", r.pattern_string(), r.dim()));
    }
    out
}
