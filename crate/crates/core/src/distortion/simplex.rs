//! Dense two-phase tableau simplex for `min cᵀx` subject to `Ax = b`, `x ≥ 0`.
//!
//! Entering columns are chosen by the most negative reduced cost; after a run
//! of degenerate pivots the solver switches to Bland's rule for the rest of
//! the solve.

use crate::error::{Error, Result};

const EPS: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // (rows + 1) × (cols + 1), row-major; last row holds reduced costs, last
    // column the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    bland: bool,
    degenerate: usize,
    pivots: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.at(r, c);
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn entering(&self, allowed: usize) -> Option<usize> {
        let obj = self.rows;
        if self.bland {
            (0..allowed).find(|&j| self.at(obj, j) < -EPS)
        } else {
            let mut best = None;
            let mut most = -EPS;
            for j in 0..allowed {
                let d = self.at(obj, j);
                if d < most {
                    most = d;
                    best = Some(j);
                }
            }
            best
        }
    }

    fn leaving(&self, c: usize) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.rows {
            let a = self.at(i, c);
            if a > EPS {
                let ratio = self.rhs(i) / a;
                let better = match best {
                    None => true,
                    Some((r, bi)) => ratio < r - EPS || (ratio <= r + EPS && self.basis[i] < self.basis[bi]),
                };
                if better {
                    best = Some((ratio, i));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// Optimize over the first `allowed` columns.
    fn optimize(&mut self, allowed: usize, max_pivots: usize) -> Result<()> {
        while let Some(c) = self.entering(allowed) {
            let Some(r) = self.leaving(c) else {
                return Err(Error::Internal("linear program is unbounded".into()));
            };
            if self.rhs(r).abs() <= EPS {
                self.degenerate += 1;
                if self.degenerate >= DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                self.degenerate = 0;
            }
            self.pivot(r, c);
            if self.pivots > max_pivots {
                return Err(Error::Budget(format!("simplex exceeded {max_pivots} pivots")));
            }
        }
        Ok(())
    }
}

/// Solve `min cᵀx` subject to `Ax = b`, `x ≥ 0`, where `a` is row-major
/// `m × n`. Returns an internal error if the problem is infeasible or
/// unbounded.
pub(crate) fn minimize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Internal("inconsistent LP dimensions".into()));
    }
    let cols = n + m;
    let w = cols + 1;
    let mut data = vec![0.0; (m + 1) * w];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            data[i * w + j] = sign * a[i][j];
        }
        data[i * w + n + i] = 1.0;
        data[i * w + cols] = sign * b[i];
    }
    // Phase I objective: sum of artificials, expressed in nonbasic columns.
    for i in 0..m {
        for j in 0..n {
            data[m * w + j] -= data[i * w + j];
        }
        data[m * w + cols] -= data[i * w + cols];
    }
    let mut t = Tableau { rows: m, cols, data, basis: (n..n + m).collect(), bland: false, degenerate: 0, pivots: 0 };
    let max_pivots = 50 * (m + n) + 1000;
    t.optimize(n, max_pivots)?;
    let infeasibility = -t.at(m, cols);
    if infeasibility > 1e-8 {
        return Err(Error::Internal(format!("linear program is infeasible (phase I residual {infeasibility:e})")));
    }
    // Drive remaining artificials out of the basis; rows where that is
    // impossible are redundant and stay inert.
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t.at(i, j).abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }
    // Phase II reduced costs.
    for j in 0..=cols {
        let base = if j < n { c[j] } else { 0.0 };
        t.data[m * w + j] = base;
    }
    for i in 0..m {
        let bi = t.basis[i];
        let cb = if bi < n { c[bi] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..=cols {
                t.data[m * w + j] -= cb * t.data[i * w + j];
            }
        }
    }
    t.bland = false;
    t.degenerate = 0;
    t.optimize(n, max_pivots)?;
    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs(i).max(0.0);
        }
    }
    let value = x.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, value, pivots: t.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_transport_problem() {
        // Supplies (0.3, 0.7), demands (0.5, 0.5), cost [[0, 1], [2, 0]].
        let a = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ];
        let sol = minimize(&a, &[0.3, 0.7, 0.5, 0.5], &[0.0, 1.0, 2.0, 0.0]).unwrap();
        assert!((sol.value - 0.4).abs() < 1e-12);
        assert!((sol.x[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn textbook_lp_with_slacks() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6).
        let a = vec![
            vec![1.0, 0.0, 1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0, 1.0, 0.0],
            vec![3.0, 2.0, 0.0, 0.0, 1.0],
        ];
        let sol = minimize(&a, &[4.0, 12.0, 18.0], &[-3.0, -5.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((sol.value + 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9 && (sol.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = vec![vec![1.0, 1.0]];
        assert!(minimize(&a, &[-1.0], &[1.0, 1.0]).is_err());
        let a = vec![vec![1.0, -1.0]];
        assert!(minimize(&a, &[1.0], &[0.0, -1.0]).is_err());
    }

    #[test]
    fn redundant_and_negative_rows() {
        let a = vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0], vec![-1.0, 0.0, 0.0]];
        let sol = minimize(&a, &[1.0, 2.0, -0.25], &[3.0, 1.0, 2.0]).unwrap();
        assert!((sol.value - 1.5).abs() < 1e-12, "{}", sol.value);
    }

    #[test]
    fn degenerate_assignment_terminates() {
        // 6×6 assignment LP with all-equal costs is highly degenerate.
        let k = 6;
        let mut a = Vec::new();
        for i in 0..k {
            let mut row = vec![0.0; k * k];
            for j in 0..k {
                row[i * k + j] = 1.0;
            }
            a.push(row);
        }
        for j in 0..k {
            let mut row = vec![0.0; k * k];
            for i in 0..k {
                row[i * k + j] = 1.0;
            }
            a.push(row);
        }
        let sol = minimize(&a, &vec![1.0; 2 * k], &vec![1.0; k * k]).unwrap();
        assert!((sol.value - k as f64).abs() < 1e-9);
    }
}
