use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;

/// Ellipticity and growth data of an operator: `lambda <= Lambda`,
/// gradient threshold `M_F`, zeroth-order constant `gamma`, quadratic
/// growth `sigma2`, plus the coefficient fields `sigma(x) >= 0` and `f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureParams {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub m_f: f64,
    pub gamma: f64,
    pub sigma2: f64,
    pub sigma: Field,
    pub f: Field,
}

impl StructureParams {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self> {
        Self {
            lambda,
            big_lambda,
            m_f: 0.0,
            gamma: 0.0,
            sigma2: 0.0,
            sigma: Field::Constant(0.0),
            f: Field::Constant(0.0),
        }
        .validated()
    }

    pub fn with_m_f(mut self, m_f: f64) -> Result<Self> {
        self.m_f = m_f;
        self.validated()
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validated()
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        self.sigma2 = sigma2;
        self.validated()
    }

    pub fn with_sigma(mut self, sigma: Field) -> Result<Self> {
        self.sigma = sigma;
        self.validated()
    }

    pub fn with_f(mut self, f: Field) -> Result<Self> {
        self.f = f;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let bad = |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} = {v}")));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive, got lambda", self.lambda);
        }
        if !(self.big_lambda >= self.lambda && self.big_lambda.is_finite()) {
            return bad("Lambda must be >= lambda, got Lambda", self.big_lambda);
        }
        for (name, v) in [("M_F", self.m_f), ("gamma", self.gamma), ("sigma2", self.sigma2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and >= 0, got {name}"), v);
            }
        }
        if self.sigma.min_value() < 0.0 {
            return bad("sigma field must be nonnegative, min", self.sigma.min_value());
        }
        Ok(self)
    }
}
