//! Dense tableau simplex for packing LPs: maximize `c·x` s.t. `A x <= b`, `x >= 0`, `b >= 0`.
//!
//! The origin is always feasible, so no phase one is needed. Every solution
//! comes with its dual prices and the duality gap, which certify optimality
//! independently of the pivoting path.

use crate::error::PredictorError;

/// Relative tolerance on the objective (duality gap over `1 + |objective|`).
pub const LP_TOLERANCE: f64 = 1e-6;

const PIVOT_EPS: f64 = 1e-9;
const ZERO_EPS: f64 = 1e-12;
/// Tableau cells above which a dense solve is refused.
const MAX_CELLS: usize = 60_000_000;

#[derive(Clone, Debug, Default)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual price per constraint.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of `A x <= b` or `x >= 0`.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            worst = worst.max(lhs - row.bound);
        }
        worst
    }

    /// Largest violation of `A^T y >= c` or `y >= 0`.
    pub fn dual_residual(&self, y: &[f64]) -> f64 {
        let mut reduced = self.objective.clone();
        for (row, &yi) in self.constraints.iter().zip(y) {
            for &(j, a) in &row.coeffs {
                reduced[j] -= a * yi;
            }
        }
        let worst_col = reduced.iter().copied().fold(0.0, f64::max);
        let worst_sign = y.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        worst_col.max(worst_sign)
    }

    pub fn solve(&self) -> Result<LpSolution, PredictorError> {
        let n = self.num_vars();
        let m = self.constraints.len();
        if m == 0 || n == 0 {
            // Nothing binds; any variable with positive profit would be unbounded,
            // but packing rows always cover every variable in practice.
            if self.objective.iter().any(|&c| c > 0.0) && m == 0 {
                return Err(PredictorError::NotConverged { iterations: 0, primal_residual: 0.0, duality_gap: f64::INFINITY });
            }
            return Ok(LpSolution {
                x: vec![0.0; n],
                objective: 0.0,
                duals: vec![0.0; m],
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: self.dual_residual(&vec![0.0; m]),
                duality_gap: 0.0,
            });
        }
        let width = n + m + 1;
        if m.saturating_mul(width) > MAX_CELLS {
            return Err(PredictorError::InvalidCurve(format!("LP with {n} variables and {m} constraints exceeds the dense solver limit")));
        }
        let mut tab = vec![0.0f64; m * width];
        for (i, row) in self.constraints.iter().enumerate() {
            assert!(row.bound >= 0.0, "packing LP requires nonnegative bounds");
            let r = &mut tab[i * width..(i + 1) * width];
            for &(j, a) in &row.coeffs {
                r[j] += a;
            }
            r[n + i] = 1.0;
            r[width - 1] = row.bound;
        }
        let mut reduced: Vec<f64> = self.objective.iter().copied().chain(std::iter::repeat_n(0.0, m)).collect();
        let mut z = 0.0;
        let mut basis: Vec<usize> = (n..n + m).collect();

        let max_iter = 50 * (n + m) + 1_000;
        let mut iterations = 0;
        let mut degenerate_run = 0usize;
        let mut pivot_cols: Vec<usize> = Vec::with_capacity(width);
        let mut pivot_row = vec![0.0f64; width];
        loop {
            let bland = degenerate_run > 50;
            let entering = if bland {
                (0..n + m).find(|&j| reduced[j] > PIVOT_EPS)
            } else {
                let mut best = None;
                let mut best_val = PIVOT_EPS;
                for (j, &d) in reduced.iter().enumerate() {
                    if d > best_val {
                        best_val = d;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(col) = entering else { break };
            if iterations >= max_iter {
                let x = extract(&tab, &basis, n, width);
                let y: Vec<f64> = (0..m).map(|i| -reduced[n + i]).collect();
                let gap = dot_bounds(self, &y) - self.value(&x);
                return Err(PredictorError::NotConverged { iterations, primal_residual: self.primal_residual(&x), duality_gap: gap });
            }
            // Ratio test; ties go to the smallest basic variable index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = tab[i * width + col];
                if a > PIVOT_EPS {
                    let ratio = tab[i * width + width - 1] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - ZERO_EPS || (ratio <= lr + ZERO_EPS && basis[i] < basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(PredictorError::NotConverged { iterations, primal_residual: 0.0, duality_gap: f64::INFINITY });
            };
            degenerate_run = if ratio.abs() <= ZERO_EPS { degenerate_run + 1 } else { 0 };

            let pr = row * width;
            let inv = 1.0 / tab[pr + col];
            pivot_cols.clear();
            for j in 0..width {
                let v = tab[pr + j] * inv;
                let v = if v.abs() < ZERO_EPS { 0.0 } else { v };
                tab[pr + j] = v;
                pivot_row[j] = v;
                if v != 0.0 {
                    pivot_cols.push(j);
                }
            }
            tab[pr + col] = 1.0;
            pivot_row[col] = 1.0;
            for i in 0..m {
                if i == row {
                    continue;
                }
                let f = tab[i * width + col];
                if f == 0.0 {
                    continue;
                }
                let r = &mut tab[i * width..(i + 1) * width];
                for &j in &pivot_cols {
                    let v = r[j] - f * pivot_row[j];
                    r[j] = if v.abs() < ZERO_EPS { 0.0 } else { v };
                }
                r[col] = 0.0;
            }
            let f = reduced[col];
            for &j in &pivot_cols {
                if j < n + m {
                    reduced[j] -= f * pivot_row[j];
                }
            }
            reduced[col] = 0.0;
            z += f * pivot_row[width - 1];
            basis[row] = col;
            iterations += 1;
        }

        let x = extract(&tab, &basis, n, width);
        let duals: Vec<f64> = (0..m).map(|i| (-reduced[n + i]).max(0.0)).collect();
        let objective = self.value(&x);
        let gap = dot_bounds(self, &duals) - objective;
        let sol = LpSolution {
            primal_residual: self.primal_residual(&x),
            dual_residual: self.dual_residual(&duals),
            duality_gap: gap,
            x,
            objective,
            duals,
            iterations,
        };
        debug_assert!((z - objective).abs() <= 1e-6 * (1.0 + objective.abs()));
        let scale = 1.0 + objective.abs();
        if sol.primal_residual > LP_TOLERANCE * scale || gap.abs() > LP_TOLERANCE * scale || sol.dual_residual > LP_TOLERANCE * scale {
            return Err(PredictorError::NotConverged { iterations, primal_residual: sol.primal_residual, duality_gap: gap });
        }
        Ok(sol)
    }
}

fn dot_bounds(lp: &LinearProgram, y: &[f64]) -> f64 {
    lp.constraints.iter().zip(y).map(|(r, v)| r.bound * v).sum()
}

fn extract(tab: &[f64], basis: &[usize], n: usize, width: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[i * width + width - 1].max(0.0);
        }
    }
    x
}
