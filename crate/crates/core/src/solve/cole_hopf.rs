use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// `h(t) = -(lambda / sigma2) ln(1 - sigma2 t / lambda)` on
/// `0 <= t < lambda / sigma2`, the solution of `lambda h'' = sigma2 h'^2`
/// with `h(0) = 0`, `h'(0) = 1`. With `sigma2 = 0` it is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColeHopf {
    pub lambda: f64,
    pub sigma2: f64,
}

impl ColeHopf {
    pub fn new(lambda: f64, sigma2: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("need lambda > 0 and sigma2 >= 0, got {lambda}, {sigma2}")));
        }
        Ok(Self { lambda, sigma2 })
    }

    /// Upper end of the domain of `h`.
    pub fn t_max(&self) -> f64 {
        if self.sigma2 == 0.0 {
            f64::INFINITY
        } else {
            self.lambda / self.sigma2
        }
    }

    fn k(&self) -> f64 {
        self.sigma2 / self.lambda
    }

    pub fn h(&self, t: f64) -> f64 {
        if self.sigma2 == 0.0 {
            return t;
        }
        -(-self.k() * t).ln_1p() / self.k()
    }

    pub fn dh(&self, t: f64) -> f64 {
        1.0 / (1.0 - self.k() * t)
    }

    pub fn d2h(&self, t: f64) -> f64 {
        let s = 1.0 - self.k() * t;
        self.k() / (s * s)
    }

    /// `h^{-1}(u) = (lambda / sigma2)(1 - exp(-sigma2 u / lambda))`.
    pub fn inverse(&self, u: f64) -> f64 {
        if self.sigma2 == 0.0 {
            return u;
        }
        -(-self.k() * u).exp_m1() / self.k()
    }
}

/// Pointwise `v = h^{-1}(u)` for a nonnegative `u`.
pub fn cole_hopf(u: &GridFunction, lambda: f64, sigma2: f64) -> Result<GridFunction> {
    let ch = ColeHopf::new(lambda, sigma2)?;
    if let Some((i, v)) = u.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::InvalidArgument(format!("Cole-Hopf needs u >= 0, found {v} at node {i}")));
    }
    u.map(format!("{}_ch", u.name()), |t| ch.inverse(t))
}
