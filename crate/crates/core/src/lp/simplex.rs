//! Dense two-phase tableau simplex for `max cᵀx` subject to linear rows and
//! `x ≥ 0`.

use serde::{Deserialize, Serialize};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLp {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs; a column may enter while its entry is negative.
    z: Vec<f64>,
    value: f64,
    blocked: Vec<bool>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let cols = self.cols;
        let p = self.at(r, e);
        for j in 0..cols {
            self.a[r * cols + j] /= p;
        }
        self.b[r] /= p;
        let (before, rest) = self.a.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        let br = self.b[r];
        for (i, row) in before.chunks_exact_mut(cols).enumerate().chain(
            after
                .chunks_exact_mut(cols)
                .enumerate()
                .map(|(k, row)| (k + r + 1, row)),
        ) {
            let f = row[e];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[e] = 0.0;
                self.b[i] -= f * br;
            }
        }
        let f = self.z[e];
        if f != 0.0 {
            for (x, y) in self.z.iter_mut().zip(prow.iter()) {
                *x -= f * y;
            }
            self.z[e] = 0.0;
            self.value -= f * br;
        }
        self.basis[r] = e;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 0..self.cols {
            if self.blocked[j] || self.z[j] >= -COST_EPS {
                continue;
            }
            if bland {
                return Some(j);
            }
            match best {
                Some(k) if self.z[k] <= self.z[j] => {}
                _ => best = Some(j),
            }
        }
        best
    }

    fn leaving(&self, e: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let aij = self.at(i, e);
            if aij <= PIVOT_EPS {
                continue;
            }
            let ratio = self.b[i].max(0.0) / aij;
            best = match best {
                None => Some((i, ratio)),
                Some((k, r)) => {
                    if ratio < r - 1e-12 || (ratio <= r + 1e-12 && self.basis[i] < self.basis[k]) {
                        Some((i, ratio))
                    } else {
                        Some((k, r))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    /// Runs pivots until optimal. Dantzig pricing, switching to Bland's
    /// rule after a run of degenerate pivots.
    fn optimize(&mut self, max_iter: usize) -> Result<(), SimplexOutcome> {
        let mut degenerate = 0usize;
        for _ in 0..max_iter {
            let bland = degenerate > self.rows.max(10);
            let Some(e) = self.entering(bland) else {
                return Ok(());
            };
            let Some(r) = self.leaving(e) else {
                return Err(SimplexOutcome::Unbounded);
            };
            if self.b[r].abs() <= FEAS_EPS {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
        }
        Err(SimplexOutcome::IterationLimit)
    }
}

/// Maximizes `objective · x` over `x ≥ 0` subject to `constraints`.
pub fn maximize(lp: &DenseLp) -> SimplexOutcome {
    let n = lp.objective.len();
    let m = lp.constraints.len();

    // Flip rows so every right-hand side is nonnegative.
    let rows: Vec<(Vec<f64>, Sense, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let sense = match c.sense {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), sense, -c.rhs)
            } else {
                (c.coeffs.clone(), c.sense, c.rhs)
            }
        })
        .collect();

    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let cols = n + n_slack + n_art;
    let art_start = n + n_slack;

    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; m * cols],
        b: vec![0.0; m],
        basis: vec![0; m],
        z: vec![0.0; cols],
        value: 0.0,
        blocked: vec![false; cols],
    };
    let (mut s, mut art) = (n, art_start);
    for (i, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        t.a[i * cols..i * cols + n].copy_from_slice(coeffs);
        t.b[i] = *rhs;
        match sense {
            Sense::Le => {
                t.a[i * cols + s] = 1.0;
                t.basis[i] = s;
                s += 1;
            }
            Sense::Ge => {
                t.a[i * cols + s] = -1.0;
                s += 1;
                t.a[i * cols + art] = 1.0;
                t.basis[i] = art;
                art += 1;
            }
            Sense::Eq => {
                t.a[i * cols + art] = 1.0;
                t.basis[i] = art;
                art += 1;
            }
        }
    }
    let max_iter = 50 * (m + cols) + 1000;

    if n_art > 0 {
        // Phase 1: maximize −Σ artificials.
        for i in 0..m {
            if t.basis[i] >= art_start {
                for j in 0..art_start {
                    t.z[j] -= t.at(i, j);
                }
                t.value -= t.b[i];
            }
        }
        if let Err(out) = t.optimize(max_iter) {
            return out;
        }
        let scale = 1.0 + rows.iter().map(|r| r.2).fold(0.0, f64::max);
        if t.value < -FEAS_EPS * scale {
            return SimplexOutcome::Infeasible;
        }
        // Drive artificials out of the basis where possible.
        for i in 0..m {
            if t.basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| t.at(i, j).abs() > 1e-9) {
                    t.pivot(i, j);
                }
            }
        }
        for j in art_start..cols {
            t.blocked[j] = true;
        }
    }

    // Phase 2 reduced costs from the original objective.
    let cost = |j: usize| if j < n { lp.objective[j] } else { 0.0 };
    for j in 0..cols {
        t.z[j] = -cost(j);
    }
    t.value = 0.0;
    for i in 0..m {
        let cb = cost(t.basis[i]);
        if cb != 0.0 {
            for j in 0..cols {
                t.z[j] += cb * t.at(i, j);
            }
            t.value += cb * t.b[i];
        }
    }
    if let Err(out) = t.optimize(max_iter) {
        return out;
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.b[i].max(0.0);
        }
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    SimplexOutcome::Optimal { x, value }
}
