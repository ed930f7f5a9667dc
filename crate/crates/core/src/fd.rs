//! Central finite differences on grid functions.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, MultiIndex};
use crate::linalg::SymMatrix;

fn require_interior(u: &GridFunction, m: &MultiIndex) -> Result<()> {
    if u.grid().is_interior(m) {
        Ok(())
    } else {
        Err(Error::BoundaryPoint(m[..u.grid().dim()].to_vec()))
    }
}

fn shifted(u: &GridFunction, m: &MultiIndex, steps: &[(usize, i64)]) -> f64 {
    let mut s = [0i64; 3];
    for &(k, d) in steps {
        s[k] += d;
    }
    u.at(&u.grid().offset(m, &s).expect("interior stencil"))
}

pub fn fd_gradient(u: &GridFunction, m: &MultiIndex) -> Result<[f64; 3]> {
    require_interior(u, m)?;
    let h = u.grid().spacing();
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate().take(u.grid().dim()) {
        *gk = (shifted(u, m, &[(k, 1)]) - shifted(u, m, &[(k, -1)])) / (2.0 * h);
    }
    Ok(g)
}

pub fn fd_hessian(u: &GridFunction, m: &MultiIndex) -> Result<SymMatrix> {
    require_interior(u, m)?;
    let n = u.grid().dim();
    let h = u.grid().spacing();
    let c = u.at(m);
    let mut hess = SymMatrix::zeros(n);
    for i in 0..n {
        hess.set(i, i, (shifted(u, m, &[(i, 1)]) - 2.0 * c + shifted(u, m, &[(i, -1)])) / (h * h));
        for j in (i + 1)..n {
            let pp = shifted(u, m, &[(i, 1), (j, 1)]);
            let pm = shifted(u, m, &[(i, 1), (j, -1)]);
            let mp = shifted(u, m, &[(i, -1), (j, 1)]);
            let mm = shifted(u, m, &[(i, -1), (j, -1)]);
            hess.set(i, j, (pp - pm - mp + mm) / (4.0 * h * h));
        }
    }
    Ok(hess)
}
