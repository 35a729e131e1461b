//! Small dense two-phase simplex for the feasibility problems that show up
//! in region enumeration and orthant counting (a handful of variables, a
//! few dozen constraints).
//!
//! Problem form: maximize `c·x` subject to `A x ≤ b`, `x ≥ 0`.
//! Bland's rule is used throughout, so the method terminates on degenerate
//! problems, which are common here (cones through the origin).

const PIVOT_EPS: f64 = 1e-12;
const FEAS_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.width - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes the objective row over the allowed columns. Returns false
    /// when unbounded.
    fn run(&mut self, allowed: usize) -> bool {
        let rhs = self.rhs();
        loop {
            let Some(enter) = (0..allowed).find(|&j| self.obj[j] < -PIVOT_EPS) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_EPS {
                    let ratio = row[rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-15
                                || ((ratio - lr).abs() <= 1e-15 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return false,
            }
        }
    }
}

/// Solves `max c·x  s.t.  a x ≤ b, x ≥ 0`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    assert_eq!(b.len(), m, "one right-hand side per constraint");
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = negative.len();
    // columns: originals | slacks | artificials | rhs
    let width = n + m + n_art + 1;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art_col = n + m;
    for i in 0..m {
        assert_eq!(a[i].len(), n, "constraint width must match objective");
        let mut row = vec![0.0; width];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = sign;
        row[width - 1] = sign * b[i];
        if b[i] < 0.0 {
            row[art_col] = 1.0;
            basis.push(art_col);
            art_col += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        obj: vec![0.0; width],
        basis,
        width,
    };

    if n_art > 0 {
        // phase 1: maximize -sum(artificials)
        for j in n + m..n + m + n_art {
            t.obj[j] = 1.0;
        }
        for i in 0..m {
            if t.basis[i] >= n + m {
                for j in 0..width {
                    t.obj[j] -= t.rows[i][j];
                }
            }
        }
        t.run(n + m + n_art);
        if t.obj[width - 1] < -FEAS_EPS {
            return LpOutcome::Infeasible;
        }
        // drive zero-level artificials out of the basis
        for i in 0..m {
            if t.basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t.rows[i][j].abs() > PIVOT_EPS) {
                    t.pivot(i, j);
                }
            }
        }
    }

    // phase 2
    t.obj = vec![0.0; width];
    for (o, cj) in t.obj.iter_mut().zip(c) {
        *o = -cj;
    }
    for i in 0..m {
        let bcol = t.basis[i];
        if bcol < n && c[bcol] != 0.0 {
            let f = c[bcol];
            for j in 0..width {
                t.obj[j] += f * t.rows[i][j];
            }
        }
    }
    if !t.run(n + m) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bcol) in t.basis.iter().enumerate() {
        if bcol < n {
            x[bcol] = t.rows[i][width - 1];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}

/// Linear system over box-bounded free variables: finds `z ∈ [-1, 1]^k`
/// with `g_i·z ≤ h_i` for every row, maximizing `c·z`. Returns `None` when
/// infeasible.
pub fn maximize_in_box(c: &[f64], g: &[Vec<f64>], h: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = c.len();
    // z = u - 1 with 0 ≤ u ≤ 2
    let mut a = Vec::with_capacity(g.len() + k);
    let mut b = Vec::with_capacity(g.len() + k);
    for (row, &hi) in g.iter().zip(h) {
        let shift: f64 = row.iter().sum();
        a.push(row.clone());
        b.push(hi + shift);
    }
    for j in 0..k {
        let mut row = vec![0.0; k];
        row[j] = 1.0;
        a.push(row);
        b.push(2.0);
    }
    match maximize(c, &a, &b) {
        LpOutcome::Optimal { x, .. } => {
            let z: Vec<f64> = x.iter().map(|u| u - 1.0).collect();
            let value = c.iter().zip(&z).map(|(ci, zi)| ci * zi).sum();
            Some((z, value))
        }
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => unreachable!("box constraints bound every variable"),
    }
}
