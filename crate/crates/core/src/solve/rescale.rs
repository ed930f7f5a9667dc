use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::params::StructureParams;

/// `T(y) = x0 + t0 y`, with values divided by `m0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub x0: Vec<f64>,
    pub t0: f64,
    pub m0: f64,
}

impl Rescaling {
    pub fn new(x0: &[f64], t0: f64, m0: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0.is_finite() && m0 > 0.0 && m0.is_finite()) {
            return Err(Error::InvalidArgument(format!("t0 and M0 must be positive, got t0 = {t0}, M0 = {m0}")));
        }
        Ok(Self { x0: x0.to_vec(), t0, m0 })
    }

    pub fn map(&self, y: &[f64]) -> Vec<f64> {
        self.x0.iter().zip(y).map(|(a, b)| a + self.t0 * b).collect()
    }

    /// Applying `self` and then `next` (in the scaled coordinates).
    pub fn then(&self, next: &Rescaling) -> Rescaling {
        Rescaling { x0: self.map(&next.x0), t0: self.t0 * next.t0, m0: self.m0 * next.m0 }
    }
}

/// Structure data of `F_s(y, v, q, Y) = (t0^2/M0) F(T y, M0 v, M0 q / t0, M0 Y / t0^2)`:
/// `M_s = t0 M_F / M0`, `gamma_s = t0^2 gamma`, `sigma_s = t0 sigma o T`,
/// `f_s = (t0^2 / M0) f o T`, and `sigma2_s = M0 sigma2` for the quadratic
/// growth term. Grid-valued fields are resampled on `target`.
pub fn rescale_params(params: &StructureParams, s: &Rescaling, target: &Grid) -> Result<StructureParams> {
    let t0 = s.t0;
    let mut out = params.clone();
    out.m_f = t0 * params.m_f / s.m0;
    out.gamma = t0 * t0 * params.gamma;
    out.sigma2 = s.m0 * params.sigma2;
    out.sigma = params.sigma.compose_affine(t0, &s.x0, t0, target, "sigma_s")?;
    out.f = params.f.compose_affine(t0 * t0 / s.m0, &s.x0, t0, target, "f_s")?;
    out.validated()
}

/// `u_s(y) = u(x0 + t0 y) / M0` sampled on `target` by multilinear
/// interpolation, together with the rescaled structure data.
pub fn rescale(
    u: &GridFunction,
    params: &StructureParams,
    s: &Rescaling,
    target: &Grid,
) -> Result<(GridFunction, StructureParams)> {
    let n = u.grid().dim();
    if target.dim() != n || s.x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: target.dim().min(s.x0.len()) });
    }
    let source = u.grid().bounding_cube();
    let mut values = Vec::with_capacity(target.len());
    for i in 0..target.len() {
        let x = s.map(&target.point(i)[..n]);
        if !source.contains(&x) {
            return Err(Error::EscapesGrid);
        }
        values.push(u.interpolate_clamped(&x) / s.m0);
    }
    let us = GridFunction::from_values(target.clone(), format!("{}_s", u.name()), values)?;
    Ok((us, rescale_params(params, s, target)?))
}
