//! Explicit radial barrier with a cutoff, and a sampled verifier for its
//! five defining properties.
//!
//! Outside `B_{r/4}` the barrier is the power law `M1 - M2 |x|^(-alpha)`;
//! inside it is the even quartic in `|x|` matching value, slope and
//! curvature at `r/4`. With `M1 = 1`, `M2 = 3((3r/2) sqrt n)^alpha` and
//! `R = 3^(1/alpha) (3r/2) sqrt n`, the bounds at `|x| = R` and on `Q_{3r}`
//! hold with equality, and `r` is the smallest radius keeping the slope
//! below `eps0` everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, sup_norm};
use crate::linalg::SymMatrix;
use crate::pucci::pucci_minus;
use crate::report::VerificationReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub n: usize,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub eps0: f64,
    pub alpha: f64,
    pub q: f64,
    pub r: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub m1: f64,
    pub m2: f64,
    pub m_b: f64,
    pub c_b: f64,
    /// Radius where the power law hands over to the quartic.
    pub rho_match: f64,
    /// Quartic coefficients in `t = |x| / rho_match`: `c0 + c1 t^2 + c2 t^4`.
    pub quartic: [f64; 3],
}

/// Value, gradient and Hessian of the barrier at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: [f64; 3],
    pub hessian: SymMatrix,
}

/// Peak of `P'(rho) / P'(rho_match)` for the matching quartic, as a function of `alpha`.
fn slope_overshoot(alpha: f64) -> f64 {
    let t = ((alpha + 4.0) / (3.0 * (alpha + 2.0))).sqrt();
    if t >= 1.0 {
        1.0
    } else {
        (alpha + 4.0) / 2.0 * t - (alpha + 2.0) / 2.0 * t.powi(3)
    }
}

pub fn build_barrier(n: usize, lambda: f64, big_lambda: f64, eps0: f64) -> Result<BarrierSpec> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("dimension must be 1, 2 or 3, got {n}")));
    }
    if !(lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < lambda <= Lambda, got {lambda}, {big_lambda}")));
    }
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps0 must be positive, got {eps0}")));
    }
    let nf = n as f64;
    let alpha = ((big_lambda / lambda) * (nf - 1.0) - 1.0).max(0.0) + 1.0;
    let q = 3f64.powf(1.0 / alpha);
    let corner = 1.5 * nf.sqrt();
    let r = 3.0 * slope_overshoot(alpha) * alpha * 4f64.powf(alpha + 1.0) * corner.powf(alpha) / eps0;
    let big_r = q * corner * r;
    let m1 = 1.0;
    let m2 = 3.0 * (corner * r).powf(alpha);
    let rho_match = r / 4.0;
    let a = m2 * rho_match.powf(-alpha);
    let c1 = alpha * a * (alpha + 4.0) / 4.0;
    let c2 = -alpha * (alpha + 2.0) * a / 8.0;
    let c0 = m1 - a - c1 - c2;
    let mut spec = BarrierSpec {
        n,
        lambda,
        big_lambda,
        eps0,
        alpha,
        q,
        r,
        big_r,
        m1,
        m2,
        m_b: -c0,
        c_b: 0.0,
        rho_match,
        quartic: [c0, c1, c2],
    };
    spec.c_b = (-spec.inner_pucci_min()).max(0.0);
    Ok(spec)
}

impl BarrierSpec {
    /// `(phi'(rho), phi''(rho))` along the radius.
    fn radial_derivatives(&self, rho: f64) -> (f64, f64) {
        if rho >= self.rho_match {
            let d1 = self.alpha * self.m2 * rho.powf(-self.alpha - 1.0);
            (d1, -(self.alpha + 1.0) * d1 / rho)
        } else {
            let [_, c1, c2] = self.quartic;
            let t = rho / self.rho_match;
            let s = self.rho_match;
            ((2.0 * c1 * t + 4.0 * c2 * t.powi(3)) / s, (2.0 * c1 + 12.0 * c2 * t * t) / (s * s))
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let rho = norm(x);
        if rho >= self.rho_match {
            self.m1 - self.m2 * rho.powf(-self.alpha)
        } else {
            let [c0, c1, c2] = self.quartic;
            let t2 = (rho / self.rho_match).powi(2);
            c0 + c1 * t2 + c2 * t2 * t2
        }
    }

    /// Closed-form value, gradient and Hessian.
    pub fn jet(&self, x: &[f64]) -> Jet {
        let n = x.len();
        let rho = norm(x);
        let (d1, d2) = self.radial_derivatives(rho);
        let mut gradient = [0.0; 3];
        let hessian = if rho == 0.0 {
            SymMatrix::identity(n).scale(2.0 * self.quartic[1] / (self.rho_match * self.rho_match))
        } else {
            let hat: Vec<f64> = x.iter().map(|v| v / rho).collect();
            for k in 0..n {
                gradient[k] = d1 * hat[k];
            }
            let tangential = d1 / rho;
            SymMatrix::identity(n).scale(tangential) + SymMatrix::outer(&hat, d2 - tangential)
        };
        Jet { value: self.value(x), gradient, hessian }
    }

    /// Cutoff equal to 1 on `Q_{r/2}`, 0 outside `Q_r`, smoothstep between.
    pub fn xi(&self, x: &[f64]) -> f64 {
        let s = sup_norm(x);
        let inner = self.r / 4.0;
        let outer = self.r / 2.0;
        if s <= inner {
            1.0
        } else if s >= outer {
            0.0
        } else {
            let tau = (outer - s) / (outer - inner);
            tau * tau * (3.0 - 2.0 * tau)
        }
    }

    /// Exact minimum of `M-(D^2 phi)` over the quartic core. Both radial
    /// eigenvalues are affine in `s = (|x|/rho_match)^2`, so the minimum of
    /// the piecewise-linear Pucci value sits at an endpoint or a sign change.
    fn inner_pucci_min(&self) -> f64 {
        let [_, c1, c2] = self.quartic;
        let k = 1.0 / (self.rho_match * self.rho_match);
        let radial = |s: f64| k * (2.0 * c1 + 12.0 * c2 * s);
        let tangential = |s: f64| k * (2.0 * c1 + 4.0 * c2 * s);
        let tangential_count = (self.n - 1) as f64;
        let pm = |s: f64| {
            let part = |e: f64| {
                if e < 0.0 {
                    -self.lambda * e
                } else {
                    -self.big_lambda * e
                }
            };
            part(radial(s)) + tangential_count * part(tangential(s))
        };
        let mut candidates = vec![0.0, 1.0];
        for (c, slope) in [(2.0 * c1, 12.0 * c2), (2.0 * c1, 4.0 * c2)] {
            if slope != 0.0 {
                let s = -c / slope;
                if (0.0..=1.0).contains(&s) {
                    candidates.push(s);
                }
            }
        }
        candidates.into_iter().map(pm).fold(f64::INFINITY, f64::min)
    }

    /// Upper and lower ends of the admissible interval for `M2`:
    /// `(lower, M1 R^alpha, slope bound)`; the slope bound is the one that
    /// keeps `|D phi| <= eps0` including the overshoot of the quartic core.
    pub fn admissibility(&self) -> (f64, f64, f64) {
        let corner = 1.5 * (self.n as f64).sqrt() * self.r;
        let lower = corner.powf(self.alpha) * (self.m1 + 2.0);
        let outer = self.m1 * self.big_r.powf(self.alpha);
        let slope = self.eps0 * self.rho_match.powf(self.alpha + 1.0) / (self.alpha * slope_overshoot(self.alpha));
        (lower, outer, slope)
    }

    /// Flat `key = value` listing of the constants.
    pub fn constants_table(&self) -> String {
        let rows = [
            ("alpha", self.alpha),
            ("q", self.q),
            ("r", self.r),
            ("R", self.big_r),
            ("M1", self.m1),
            ("M2", self.m2),
            ("M_B", self.m_b),
            ("C_B", self.c_b),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v:.10}\n")).collect()
    }
}

/// One report per defining property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierCheck {
    pub reports: Vec<VerificationReport>,
}

impl BarrierCheck {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(VerificationReport::passed)
    }

    pub fn total_violations(&self) -> usize {
        self.reports.iter().map(|r| r.violations.len()).sum()
    }
}

pub const BARRIER_TOL: f64 = 1e-8;

/// Deterministic sample set: landmarks (origin, matching radius, `r`,
/// corners of `Q_{3r}`, the sphere `|x| = R`) plus seeded uniform draws from
/// boxes at every relevant scale.
fn sample_points(spec: &BarrierSpec, count: usize, seed: u64) -> Vec<[f64; 3]> {
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<[f64; 3]> = vec![[0.0; 3]];
    let half3 = 1.5 * spec.r;
    for corner in 0..(1usize << n) {
        let mut p = [0.0; 3];
        for (k, pk) in p.iter_mut().enumerate().take(n) {
            *pk = if corner >> k & 1 == 1 { half3 } else { -half3 };
        }
        pts.push(p);
    }
    let direction = |rng: &mut ChaCha8Rng| {
        let mut v = [0.0; 3];
        loop {
            for vk in v.iter_mut().take(n) {
                *vk = rng.random_range(-1.0..1.0);
            }
            let l = norm(&v[..n]);
            if l > 1e-3 && l <= 1.0 {
                for vk in v.iter_mut().take(n) {
                    *vk /= l;
                }
                return v;
            }
        }
    };
    for radius in [spec.rho_match, spec.r / 2.0, spec.r, spec.big_r] {
        for _ in 0..8 {
            let d = direction(&mut rng);
            pts.push([d[0] * radius, d[1] * radius, d[2] * radius]);
        }
    }
    let scales = [spec.rho_match, spec.r / 2.0, spec.r, 1.5 * spec.r, spec.big_r, 1.5 * spec.big_r];
    while pts.len() < count {
        let s = scales[pts.len() % scales.len()];
        let mut p = [0.0; 3];
        for pk in p.iter_mut().take(n) {
            *pk = rng.random_range(-s..=s);
        }
        pts.push(p);
    }
    pts.truncate(count.max(1));
    pts
}

/// Checks the five barrier properties on `samples` points, all with the
/// closed-form jet and relative tolerance `1e-8`:
/// `phi >= 0` off `B_R`, `phi <= -2` on `Q_{3r}`, `phi >= -M_B`,
/// `|D phi| <= eps0`, and `M-(D^2 phi) + C_B xi >= 0`.
pub fn verify_barrier(spec: &BarrierSpec, samples: usize, seed: u64) -> BarrierCheck {
    let n = spec.n;
    let names = [
        "nonnegative_outside_big_ball",
        "at_most_minus_two_on_triple_cube",
        "bounded_below_by_m_b",
        "gradient_bounded_by_eps0",
        "pucci_minus_with_cutoff_nonnegative",
    ];
    let mut reports: Vec<VerificationReport> = names.iter().map(|s| VerificationReport::new(*s, BARRIER_TOL)).collect();
    for (i, p) in sample_points(spec, samples, seed).iter().enumerate() {
        let x = &p[..n];
        let jet = spec.jet(x);
        let rho = norm(x);
        let phi = jet.value;
        let detail = || format!("x = {x:?}, phi = {phi:e}");
        if rho >= spec.big_r * (1.0 - 1e-15) {
            let scale = spec.m1 + spec.m2 * rho.powf(-spec.alpha);
            reports[0].record(i, phi / scale, detail);
        } else {
            reports[0].skip();
        }
        if sup_norm(x) <= 1.5 * spec.r {
            reports[1].record(i, (-2.0 - phi) / (2.0 + phi.abs()), detail);
        } else {
            reports[1].skip();
        }
        reports[2].record(i, (phi + spec.m_b) / spec.m_b, detail);
        let g = norm(&jet.gradient[..n]);
        reports[3].record(i, (spec.eps0 - g) / spec.eps0, || format!("x = {x:?}, |D phi| = {g:e}"));
        let pm = pucci_minus(&jet.hessian, spec.lambda, spec.big_lambda);
        let xi = spec.xi(x);
        let scale = 1.0 + pm.abs() + spec.c_b;
        reports[4].record(i, (pm + spec.c_b * xi) / scale, || format!("x = {x:?}, M- = {pm:e}, xi = {xi}"));
    }
    BarrierCheck { reports }
}
