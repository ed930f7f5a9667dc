//! Quadrature, norms and extrema of grid functions over subdomains.

use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction, MultiIndex};

/// Visits every grid cell whose center lies in the closure of `domain`,
/// passing the cell-center value (mean of the 2^n corners).
fn for_each_cell(u: &GridFunction, domain: &Domain, mut f: impl FnMut(f64)) -> usize {
    let g = u.grid();
    let n = g.dim();
    let cells = g.points_per_axis() - 1;
    let h = g.spacing();
    let total = cells.pow(n as u32);
    let corners = 1usize << n;
    let mut count = 0;
    let mut center = [0.0; 3];
    for c in 0..total {
        let mut base: MultiIndex = [0; 3];
        let mut rest = c;
        for k in (0..n).rev() {
            base[k] = rest % cells;
            rest /= cells;
        }
        for k in 0..n {
            center[k] = g.lower(k) + (base[k] as f64 + 0.5) * h;
        }
        if !domain.contains(&center[..n]) {
            continue;
        }
        let mut acc = 0.0;
        for corner in 0..corners {
            let mut m = base;
            for (k, mk) in m.iter_mut().enumerate().take(n) {
                *mk += corner >> k & 1;
            }
            acc += u.at(&m);
        }
        f(acc / corners as f64);
        count += 1;
    }
    count
}

/// `L^p` norm over `domain` by the midpoint rule on grid cells. Any `p > 0`
/// is accepted (for `p < 1` this is the usual quasi-norm); `p = inf` is the
/// maximum of `|u|` over nodes in the closed domain.
pub fn lp_norm(u: &GridFunction, p: f64, domain: &Domain) -> Result<f64> {
    if u.grid().dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: u.grid().dim(), found: domain.dim() });
    }
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("exponent p must be positive, got {p}")));
    }
    if p == f64::INFINITY {
        let (sup, inf, _) = sup_inf_osc(u, domain)?;
        return Ok(sup.abs().max(inf.abs()));
    }
    let mut sum = 0.0;
    let count = for_each_cell(u, domain, |v| sum += v.abs().powf(p));
    if count == 0 {
        return Err(Error::EmptyIntersection);
    }
    let vol = u.grid().spacing().powi(u.grid().dim() as i32);
    Ok((sum * vol).powf(1.0 / p))
}

/// `|{u >= t} cap domain|` for every `t`, counting cells centered in the
/// domain by their corner mean.
pub fn superlevel_measures(u: &GridFunction, domain: &Domain, ts: &[f64]) -> Result<Vec<f64>> {
    if u.grid().dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: u.grid().dim(), found: domain.dim() });
    }
    let mut values = Vec::new();
    for_each_cell(u, domain, |v| values.push(v));
    if values.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    values.sort_by(f64::total_cmp);
    let vol = u.grid().spacing().powi(u.grid().dim() as i32);
    Ok(ts.iter().map(|&t| (values.len() - values.partition_point(|&v| v < t)) as f64 * vol).collect())
}

/// Measure of `domain` as seen by the cell-center rule.
pub fn discrete_measure(u: &GridFunction, domain: &Domain) -> f64 {
    let count = for_each_cell(u, domain, |_| {});
    count as f64 * u.grid().spacing().powi(u.grid().dim() as i32)
}

/// `(sup, inf, sup - inf)` over grid nodes in the closed domain.
pub fn sup_inf_osc(u: &GridFunction, domain: &Domain) -> Result<(f64, f64, f64)> {
    let g = u.grid();
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    for i in 0..g.len() {
        if domain.contains(&g.point(i)[..g.dim()]) {
            let v = u.value(i);
            sup = sup.max(v);
            inf = inf.min(v);
        }
    }
    if sup == f64::NEG_INFINITY {
        return Err(Error::EmptyIntersection);
    }
    Ok((sup, inf, sup - inf))
}
