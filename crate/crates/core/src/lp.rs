//! Smallest-cost convex combination hitting a target point, by a two-phase
//! revised simplex method with a dense basis. Intended for few rows
//! (dimension plus one) and many columns.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    /// `(column, weight)` with positive weights, at most `dim + 1` of them.
    pub parts: Vec<(usize, f64)>,
    pub cost: f64,
}

struct Tableau<'a> {
    points: &'a [Vec<f64>],
    rows: usize,
    /// Row signs making the right-hand side nonnegative.
    signs: Vec<f64>,
    basis: Vec<usize>,
    inverse: Vec<Vec<f64>>,
    x_b: Vec<f64>,
}

impl Tableau<'_> {
    fn column(&self, j: usize) -> Vec<f64> {
        let k = self.points.len();
        if j >= k {
            let mut e = vec![0.0; self.rows];
            e[j - k] = 1.0;
            return e;
        }
        let p = &self.points[j];
        (0..self.rows).map(|r| self.signs[r] * if r + 1 < self.rows { p[r] } else { 1.0 }).collect()
    }

    fn solve_column(&self, a: &[f64]) -> Vec<f64> {
        self.inverse.iter().map(|row| row.iter().zip(a).map(|(x, y)| x * y).sum()).collect()
    }

    fn pivot(&mut self, r: usize, entering: usize, d: &[f64]) {
        let piv = d[r];
        let pivot_row: Vec<f64> = self.inverse[r].iter().map(|v| v / piv).collect();
        let theta = self.x_b[r] / piv;
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = d[i];
            for (c, pr) in pivot_row.iter().enumerate() {
                self.inverse[i][c] -= f * pr;
            }
            self.x_b[i] -= f * theta;
        }
        self.inverse[r] = pivot_row;
        self.x_b[r] = theta;
        self.basis[r] = entering;
    }

    /// Minimizes `cost` over the current feasible basis. Columns with
    /// `allowed(j) == false` never enter.
    fn optimize(&mut self, cost: &dyn Fn(usize) -> f64, allowed: &dyn Fn(usize) -> bool, ncols: usize) -> Result<()> {
        let scale = (0..ncols).filter(|&j| allowed(j)).fold(1.0_f64, |m, j| m.max(cost(j).abs()));
        let tol = 1e-12 * scale;
        for iter in 0..20_000 {
            let c_b: Vec<f64> = self.basis.iter().map(|&j| cost(j)).collect();
            let duals: Vec<f64> =
                (0..self.rows).map(|c| (0..self.rows).map(|r| c_b[r] * self.inverse[r][c]).sum()).collect();
            let bland = iter > 200;
            let mut entering = None;
            let mut best = -tol;
            for j in 0..ncols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let a = self.column(j);
                let reduced = cost(j) - duals.iter().zip(&a).map(|(y, v)| y * v).sum::<f64>();
                if reduced < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = reduced;
                }
            }
            let Some(j) = entering else { return Ok(()) };
            let d = self.solve_column(&self.column(j));
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                if d[r] > 1e-12 {
                    let ratio = self.x_b[r] / d[r];
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => ratio < lratio || (ratio == lratio && self.basis[r] < self.basis[lr]),
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::LinearSolver("unbounded convex-combination program".into()));
            };
            self.pivot(r, j, &d);
        }
        Err(Error::LinearSolver("simplex iteration limit reached".into()))
    }
}

/// Minimizes `sum w_j costs[j]` over `w >= 0` with `sum w_j = 1` and
/// `sum w_j points[j] = target`. Fails when the target is outside the
/// convex hull of the points.
pub fn min_cost_combination(points: &[Vec<f64>], costs: &[f64], target: &[f64]) -> Result<Combination> {
    if points.is_empty() || points.len() != costs.len() {
        return Err(Error::InvalidArgument("need one cost per point and at least one point".into()));
    }
    let n = target.len();
    if let Some(bad) = points.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
    }
    let rows = n + 1;
    let k = points.len();
    let rhs: Vec<f64> = target.iter().copied().chain(std::iter::once(1.0)).collect();
    let signs: Vec<f64> = rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut t = Tableau {
        points,
        rows,
        x_b: rhs.iter().zip(&signs).map(|(b, s)| b * s).collect(),
        signs,
        basis: (k..k + rows).collect(),
        inverse: (0..rows).map(|r| (0..rows).map(|c| if r == c { 1.0 } else { 0.0 }).collect()).collect(),
    };
    let ncols = k + rows;
    t.optimize(&|j| if j >= k { 1.0 } else { 0.0 }, &|_| true, ncols)?;
    let infeasibility: f64 = t.basis.iter().zip(&t.x_b).filter(|(&j, _)| j >= k).map(|(_, v)| v.abs()).sum();
    let spread = points.iter().flatten().fold(1.0_f64, |m, v| m.max(v.abs()));
    if infeasibility > 1e-9 * spread {
        return Err(Error::InvalidArgument(format!("target {target:?} lies outside the convex hull of the points")));
    }
    for r in 0..rows {
        if t.basis[r] < k {
            continue;
        }
        let replacement = (0..k).filter(|j| !t.basis.contains(j)).find_map(|j| {
            let d = t.solve_column(&t.column(j));
            (d[r].abs() > 1e-9).then_some((j, d))
        });
        if let Some((j, d)) = replacement {
            t.pivot(r, j, &d);
        }
    }
    t.optimize(&|j| if j >= k { 0.0 } else { costs[j] }, &|j| j < k, ncols)?;
    let mut parts: Vec<(usize, f64)> =
        t.basis.iter().zip(&t.x_b).filter(|(&j, &w)| j < k && w > 0.0).map(|(&j, &w)| (j, w)).collect();
    let total: f64 = parts.iter().map(|p| p.1).sum();
    parts.iter_mut().for_each(|p| p.1 /= total);
    parts.sort_by_key(|p| p.0);
    let cost = parts.iter().map(|&(j, w)| w * costs[j]).sum();
    Ok(Combination { parts, cost })
}
