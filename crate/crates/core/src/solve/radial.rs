use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{norm, Grid, GridFunction};
use crate::linalg::SymMatrix;
use crate::pucci::Core;

type Scalar = dyn Fn(f64) -> f64 + Send + Sync;

/// `u(x) = g(|x - center|)` with closed-form `g'` and `g''`.
#[derive(Clone)]
pub struct RadialProfile {
    pub name: String,
    pub g: Arc<Scalar>,
    pub dg: Arc<Scalar>,
    pub d2g: Arc<Scalar>,
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialProfile").field("name", &self.name).finish_non_exhaustive()
    }
}

impl RadialProfile {
    pub fn new(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2g: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), g: Arc::new(g), dg: Arc::new(dg), d2g: Arc::new(d2g) }
    }

    /// `coef * rho^beta`.
    pub fn power(coef: f64, beta: f64) -> Self {
        Self::new(
            format!("{coef}*rho^{beta}"),
            move |r| coef * r.powf(beta),
            move |r| coef * beta * r.powf(beta - 1.0),
            move |r| coef * beta * (beta - 1.0) * r.powf(beta - 2.0),
        )
    }

    /// `a + b rho^2`.
    pub fn quadratic(a: f64, b: f64) -> Self {
        Self::new(format!("{a}+{b}*rho^2"), move |r| a + b * r * r, move |r| 2.0 * b * r, move |_| 2.0 * b)
    }
}

/// Exact derivatives of a radial function.
#[derive(Debug, Clone)]
pub struct RadialOracle {
    pub profile: RadialProfile,
    pub center: Vec<f64>,
}

impl RadialOracle {
    pub fn new(profile: RadialProfile, center: &[f64]) -> Self {
        Self { profile, center: center.to_vec() }
    }

    fn offset(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.center.len() {
            return Err(Error::DimensionMismatch { expected: self.center.len(), found: x.len() });
        }
        let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r = norm(&y);
        Ok((y, r))
    }

    fn check_origin(&self) -> Result<()> {
        let slope = (self.profile.dg)(0.0);
        if !(slope.abs() <= 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "{} is not differentiable at the center: g'(0+) = {slope}",
                self.profile.name
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let (_, r) = self.offset(x)?;
        Ok((self.profile.g)(r))
    }

    /// `g'(rho) x^`; zero at the center when `g'(0+) = 0`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (y, r) = self.offset(x)?;
        if r == 0.0 {
            self.check_origin()?;
            return Ok(vec![0.0; y.len()]);
        }
        let s = (self.profile.dg)(r) / r;
        Ok(y.iter().map(|v| s * v).collect())
    }

    /// Eigenvalues `g''(rho)` along `x^` and `g'(rho)/rho` across it; at the
    /// center the even extension gives `g''(0) I`.
    pub fn hessian(&self, x: &[f64]) -> Result<SymMatrix> {
        let (y, r) = self.offset(x)?;
        let n = y.len();
        if r == 0.0 {
            self.check_origin()?;
            return Ok(SymMatrix::identity(n).scale((self.profile.d2g)(0.0)));
        }
        let tangential = (self.profile.dg)(r) / r;
        let radial = (self.profile.d2g)(r);
        let hat: Vec<f64> = y.iter().map(|v| v / r).collect();
        Ok(SymMatrix::identity(n).scale(tangential) + SymMatrix::outer(&hat, radial - tangential))
    }
}

/// Samples `g(|x - center|)` on the grid.
pub fn generate_radial(profile: &RadialProfile, grid: &Grid, center: &[f64]) -> Result<(GridFunction, RadialOracle)> {
    let oracle = RadialOracle { profile: profile.clone(), center: center.to_vec() };
    if center.len() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: center.len() });
    }
    let u = GridFunction::from_fn(grid, profile.name.clone(), |x| {
        let r = norm(&x.iter().zip(center).map(|(a, b)| a - b).collect::<Vec<_>>());
        (profile.g)(r)
    })?;
    Ok((u, oracle))
}

/// `u = sign * rho^beta` with `core(D^2 u) = 0` away from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSolution {
    pub sign: f64,
    pub beta: f64,
}

/// All nonconstant radial power solutions of `M^+(D^2u) = 0` or
/// `M^-(D^2u) = 0` in dimension `n`. The Hessian of `s rho^beta` has
/// eigenvalues `s beta (beta - 1) rho^(beta-2)` (once) and
/// `s beta rho^(beta-2)` (n - 1 times); the operator vanishes only when they
/// have opposite signs, which gives one linear equation per ordering.
pub fn pucci_radial_solutions(core: Core, n: usize, lambda: f64, big_lambda: f64) -> Vec<RadialSolution> {
    let k = (n as f64) - 1.0;
    let mut out = Vec::new();
    // M^+ with the radial eigenvalue negative: Lambda |r| = lambda k t.
    let b = 1.0 - lambda * k / big_lambda;
    if b > 0.0 && b < 1.0 {
        out.push(RadialSolution { sign: 1.0, beta: b });
    }
    let b = lambda * k / big_lambda - 1.0;
    if b > 0.0 {
        out.push(RadialSolution { sign: -1.0, beta: -b });
    }
    // M^+ with the radial eigenvalue positive: lambda r = Lambda k |t|.
    let b = big_lambda * k / lambda - 1.0;
    if b > 0.0 {
        out.push(RadialSolution { sign: 1.0, beta: -b });
    }
    let b = 1.0 - big_lambda * k / lambda;
    if b > 0.0 && b < 1.0 {
        out.push(RadialSolution { sign: -1.0, beta: b });
    }
    if core == Core::PucciMinus {
        for s in &mut out {
            s.sign = -s.sign;
        }
    }
    out
}
