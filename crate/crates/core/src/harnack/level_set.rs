//! Polynomial decay of superlevel sets, `|{u >= t} cap Q_r| <= d t^(-eps)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction};
use crate::measure::superlevel_measures;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub d_fit: f64,
    /// `inf` when the sampled measures show no decay before vanishing.
    pub eps_fit: f64,
    pub samples: Vec<(f64, f64)>,
    /// `ln(d t^-eps) - ln |{u >= t}|` at every sample with positive measure.
    pub residuals: Vec<f64>,
    /// Samples with zero measure, left out of the fit.
    pub zero_tail: usize,
}

impl DecayFit {
    pub fn is_step(&self) -> bool {
        self.eps_fit.is_infinite()
    }

    pub fn bound(&self, t: f64) -> f64 {
        self.d_fit * t.powf(-self.eps_fit)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# d = {:.16e}, eps = {:.16e}\nt,measure\n", self.d_fit, self.eps_fit);
        for (t, m) in &self.samples {
            s.push_str(&format!("{t:.16e},{m:.16e}\n"));
        }
        s
    }
}

/// Measures the superlevel sets of `u` on the cube and fits the upper
/// envelope `d t^-eps`.
pub fn level_set_decay(u: &GridFunction, cube: &Domain, ts: &[f64]) -> Result<DecayFit> {
    if ts.len() < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 levels, got {}", ts.len())));
    }
    if ts.iter().any(|&t| !(t > 0.0 && t.is_finite())) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("levels must be positive, finite and increasing".into()));
    }
    let measures = superlevel_measures(u, cube, ts)?;
    fit_decay(ts.iter().copied().zip(measures).collect())
}

/// The line `ln m = ln d - eps ln t` that lies above every sample with
/// positive measure and has the least total gap. It supports the upper
/// concave hull at the mean abscissa; at a hull vertex the larger `eps` is
/// taken.
pub fn fit_decay(samples: Vec<(f64, f64)>) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.1 > 0.0).map(|&(t, m)| (t.ln(), m.ln())).collect();
    let zero_tail = samples.len() - pts.len();
    let flat = pts.iter().all(|p| p.1 == pts[0].1);
    if pts.len() < 2 || flat {
        let d = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        let residuals = pts.iter().map(|p| d.ln() - p.1).collect();
        return Ok(DecayFit { d_fit: d, eps_fit: f64::INFINITY, samples, residuals, zero_tail });
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let slopes: Vec<f64> = hull.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    // Segments cover [x_0, x_last]; take the steepest segment touching xbar.
    let slope = hull
        .windows(2)
        .zip(&slopes)
        .filter(|(w, _)| w[0].0 <= xbar && xbar <= w[1].0)
        .map(|(_, &s)| s)
        .fold(f64::INFINITY, f64::min);
    let eps = -slope;
    let ln_d = pts.iter().map(|p| p.1 + eps * p.0).fold(f64::NEG_INFINITY, f64::max);
    let residuals = pts.iter().map(|p| ln_d - eps * p.0 - p.1).collect();
    Ok(DecayFit { d_fit: ln_d.exp(), eps_fit: eps, samples, residuals, zero_tail })
}

/// `n` levels from `t0` to `t1`, equally spaced in `ln t`.
pub fn log_levels(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t0.ln(), t1.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
