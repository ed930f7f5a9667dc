//! Harnack-type diagnostics on concentric cubes `Q_1`, `Q_1/2`, `Q_1/4`:
//! the Harnack, weak Harnack and local maximum quotients, Holder seminorms,
//! oscillation decay, level-set decay and the cube decomposition.

mod czd;
mod level_set;

pub use czd::{czd, random_instance, stopped_cubes, CellSet, CzdReport, CzdVerdict, DyadicCube};
pub use level_set::{fit_decay, level_set_decay, log_levels, DecayFit};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, Domain, DomainKind, Grid, GridFunction};
use crate::measure::{lp_norm, sup_inf_osc};
use crate::params::StructureParams;
use crate::solve::{rescale, Rescaling};

pub const DEFAULT_P0: f64 = 0.5;
pub const DEFAULT_P: f64 = 1.0;

fn cube_side(q1: &Domain) -> Result<f64> {
    match q1.kind() {
        DomainKind::Cube { side } => Ok(side),
        DomainKind::Ball { .. } => Err(Error::InvalidDomain("Harnack windows are cubes".into())),
    }
}

/// The concentric cube with `fraction` of the side of `q1`.
pub fn subcube(q1: &Domain, fraction: f64) -> Result<Domain> {
    Domain::cube(q1.center(), cube_side(q1)? * fraction)
}

/// `max(M_F, ||f||_{L^n(Q_1)})`.
pub fn forcing_term(u: &GridFunction, q1: &Domain, params: &StructureParams) -> Result<f64> {
    let n = u.grid().dim();
    let f = params.f.sample_on(u.grid(), "f")?;
    Ok(params.m_f.max(lp_norm(&f, n as f64, q1)?))
}

fn check_nonnegative(u: &GridFunction, q1: &Domain) -> Result<()> {
    let (_, inf, _) = sup_inf_osc(u, q1)?;
    if inf < 0.0 {
        return Err(Error::InvalidArgument(format!("u must be nonnegative on Q_1, found {inf}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuotientKind {
    /// `sup_{Q_1/2} u / (inf_{Q_1/2} u + forcing)`.
    Harnack,
    /// `||u||_{L^p0(Q_1/4)} / (inf_{Q_1/2} u + forcing)`.
    WeakHarnack,
    /// `sup_{Q_1/4} u / (||u^+||_{L^p(Q_1/2)} + forcing)`.
    LocalMax,
}

/// `lhs <= C (base + forcing)` with the observed quotient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientReport {
    pub kind: QuotientKind,
    pub lhs: f64,
    pub base: f64,
    pub forcing: f64,
    /// `lhs / (base + forcing)`; `inf` when the denominator vanishes and
    /// `lhs > 0`.
    pub quotient: f64,
    pub infinite: bool,
    /// `p0` or `p` for the integral versions.
    pub exponent: Option<f64>,
    pub c_hypothesis: Option<f64>,
    pub passed: Option<bool>,
}

fn quotient_report(
    kind: QuotientKind,
    lhs: f64,
    base: f64,
    forcing: f64,
    exponent: Option<f64>,
    c_hypothesis: Option<f64>,
) -> QuotientReport {
    let denom = base + forcing;
    let (quotient, infinite) = if lhs <= 0.0 {
        (0.0, false)
    } else if denom > 0.0 {
        (lhs / denom, false)
    } else {
        (f64::INFINITY, true)
    };
    let passed = c_hypothesis.map(|c| lhs <= c * denom * (1.0 + 1e-12));
    QuotientReport { kind, lhs, base, forcing, quotient, infinite, exponent, c_hypothesis, passed }
}

/// `sup_{Q_1/2} u <= C (inf_{Q_1/2} u + max(M_F, ||f||_{L^n(Q_1)}))` for
/// `u >= 0` on `Q_1`.
pub fn harnack_report(
    u: &GridFunction,
    q1: &Domain,
    params: &StructureParams,
    c_hypothesis: Option<f64>,
) -> Result<QuotientReport> {
    check_nonnegative(u, q1)?;
    let (sup, inf, _) = sup_inf_osc(u, &subcube(q1, 0.5)?)?;
    Ok(quotient_report(QuotientKind::Harnack, sup, inf, forcing_term(u, q1, params)?, None, c_hypothesis))
}

/// `||u||_{L^p0(Q_1/4)} <= C (inf_{Q_1/2} u + forcing)` for a nonnegative
/// supersolution.
pub fn weak_harnack_report(
    u: &GridFunction,
    q1: &Domain,
    params: &StructureParams,
    p0: f64,
    c_hypothesis: Option<f64>,
) -> Result<QuotientReport> {
    check_nonnegative(u, q1)?;
    let lhs = lp_norm(u, p0, &subcube(q1, 0.25)?)?;
    let (_, inf, _) = sup_inf_osc(u, &subcube(q1, 0.5)?)?;
    Ok(quotient_report(QuotientKind::WeakHarnack, lhs, inf, forcing_term(u, q1, params)?, Some(p0), c_hypothesis))
}

/// `sup_{Q_1/4} u <= C(p) (||u^+||_{L^p(Q_1/2)} + forcing)` for a
/// subsolution.
pub fn local_max_report(
    u: &GridFunction,
    q1: &Domain,
    params: &StructureParams,
    p: f64,
    c_hypothesis: Option<f64>,
) -> Result<QuotientReport> {
    let (sup, _, _) = sup_inf_osc(u, &subcube(q1, 0.25)?)?;
    let plus = u.map(format!("{}_plus", u.name()), |v| v.max(0.0))?;
    let base = lp_norm(&plus, p, &subcube(q1, 0.5)?)?;
    Ok(quotient_report(QuotientKind::LocalMax, sup, base, forcing_term(u, q1, params)?, Some(p), c_hypothesis))
}

/// The largest Harnack quotient of `u - inf_{Q_1} u` and `sup_{Q_1} u - u`,
/// the two nonnegative functions the oscillation argument feeds into the
/// Harnack inequality.
pub fn empirical_harnack_constant(u: &GridFunction, q1: &Domain, params: &StructureParams) -> Result<f64> {
    let (sup, inf, _) = sup_inf_osc(u, q1)?;
    let below = u.map("u_minus_inf", |v| (v - inf).max(0.0))?;
    let above = u.map("sup_minus_u", |v| (sup - v).max(0.0))?;
    let a = harnack_report(&below, q1, params, None)?.quotient;
    let b = harnack_report(&above, q1, params, None)?.quotient;
    Ok(a.max(b))
}

const PAIR_SAMPLES: usize = 1_000_000;
const EXHAUSTIVE_POINTS: usize = 65;

/// `sup |u(x) - u(y)| / |x - y|^alpha` over grid nodes in the closed domain:
/// every pair when the grid has at most 65 points per axis, otherwise a
/// seeded sample of 10^6 pairs stratified over dyadic distance shells.
pub fn holder_seminorm(u: &GridFunction, alpha: f64, domain: &Domain) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let grid = u.grid();
    let n = grid.dim();
    if domain.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: domain.dim() });
    }
    let nodes: Vec<usize> = grid.nodes_in(domain);
    if nodes.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let quotient = |i: usize, j: usize| {
        let d = norm(&grid.point(i)[..n].iter().zip(&grid.point(j)[..n]).map(|(a, b)| a - b).collect::<Vec<_>>());
        if d == 0.0 {
            0.0
        } else {
            (u.value(i) - u.value(j)).abs() / d.powf(alpha)
        }
    };
    if grid.points_per_axis() <= EXHAUSTIVE_POINTS {
        let best = (0..nodes.len())
            .into_par_iter()
            .map(|a| ((a + 1)..nodes.len()).map(|b| quotient(nodes[a], nodes[b])).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        return Ok(best);
    }
    Ok(sampled_holder(grid, &nodes, domain, quotient))
}

fn sampled_holder(grid: &Grid, nodes: &[usize], domain: &Domain, quotient: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
    let n = grid.dim();
    let max_offset = grid.points_per_axis() as i64;
    let shells = (max_offset as f64).log2().ceil() as usize + 1;
    let per_shell = PAIR_SAMPLES / shells;
    (0..shells)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ s as u64);
            let lo = if s == 0 { 1 } else { 1i64 << (s - 1) };
            let hi = (1i64 << s).max(1);
            let mut best = 0.0f64;
            for _ in 0..per_shell {
                let i = nodes[rng.random_range(0..nodes.len())];
                let m = grid.multi(i);
                let mut step = [0i64; 3];
                for sk in step.iter_mut().take(n) {
                    *sk = rng.random_range(-hi..=hi);
                }
                let k = rng.random_range(0..n);
                let sign = if rng.random::<bool>() { 1 } else { -1 };
                step[k] = sign * rng.random_range(lo..=hi);
                if let Some(mm) = grid.offset(&m, &step) {
                    let j = grid.flat(&mm);
                    if domain.contains(&grid.point(j)[..n]) {
                        best = best.max(quotient(i, j));
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// One dyadic step of the oscillation recursion on the window of side
/// `side` around the center of `Q_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscStep {
    pub step: usize,
    pub side: f64,
    pub osc_outer: f64,
    pub osc_inner: f64,
    /// `2 max(M_F, ||f||_{L^n} + gamma ||u||_inf)` in the rescaled window.
    pub forcing: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscDecayReport {
    pub c_hypothesis: f64,
    /// `(C - 1) / (C + 1)`.
    pub theta: f64,
    /// `-log2 theta`.
    pub alpha_hypothesis: f64,
    /// Least-squares slope of `-log2 osc` against the step number.
    pub alpha_measured: Option<f64>,
    pub steps: Vec<OscStep>,
    pub passed: bool,
}

fn osc_step(u: &GridFunction, params: &StructureParams, theta: f64, step: usize, side: f64) -> Result<OscStep> {
    let n = u.grid().dim();
    let q1 = Domain::cube(&vec![0.0; n], 1.0)?;
    let (_, _, outer) = sup_inf_osc(u, &q1)?;
    let (_, _, inner) = sup_inf_osc(u, &subcube(&q1, 0.5)?)?;
    let f = params.f.sample_on(u.grid(), "f")?;
    let sup_abs = {
        let (s, i, _) = sup_inf_osc(u, &q1)?;
        s.abs().max(i.abs())
    };
    let forcing = 2.0 * params.m_f.max(lp_norm(&f, n as f64, &q1)? + params.gamma * sup_abs);
    let bound = theta * outer + forcing;
    Ok(OscStep {
        step,
        side,
        osc_outer: outer,
        osc_inner: inner,
        forcing,
        bound,
        holds: inner <= bound * (1.0 + 1e-12) + 1e-14,
    })
}

/// `osc_{Q_1/2} u <= (C-1)/(C+1) osc_{Q_1} u + 2 max(M_F, ||f|| + gamma ||u||)`
/// on `Q_1` and then on the windows `Q_{2^-j}` for `j < steps`, each
/// rescaled onto the unit cube with the matching structure data. A window
/// is only used while it still spans at least 4 source cells.
pub fn osc_decay_check(
    u: &GridFunction,
    q1: &Domain,
    params: &StructureParams,
    c_hypothesis: f64,
    steps: usize,
) -> Result<OscDecayReport> {
    if !(c_hypothesis > 1.0) {
        return Err(Error::InvalidArgument(format!("C must exceed 1, got {c_hypothesis}")));
    }
    let side = cube_side(q1)?;
    let grid = u.grid();
    let h = grid.spacing();
    let theta = (c_hypothesis - 1.0) / (c_hypothesis + 1.0);
    let mut out = Vec::new();
    for j in 0..steps.max(1) {
        let window = side * 0.5f64.powi(j as i32);
        let cells = (window / h).round();
        if cells < 4.0 {
            break;
        }
        let target = Grid::new(&vec![0.0; grid.dim()], 1.0, cells as usize + 1)?;
        let s = Rescaling::new(q1.center(), window, 1.0)?;
        let (us, ps) = rescale(u, params, &s, &target)?;
        out.push(osc_step(&us, &ps, theta, j, window)?);
    }
    if out.is_empty() {
        return Err(Error::InvalidGrid("Q_1 spans fewer than 4 cells".into()));
    }
    let alpha_measured = {
        let pts: Vec<(f64, f64)> =
            out.iter().filter(|s| s.osc_outer > 0.0).map(|s| (s.step as f64, -s.osc_outer.log2())).collect();
        (pts.len() >= 2).then(|| {
            let m = pts.len() as f64;
            let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
            let (mx, my) = (sx / m, sy / m);
            let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            num / den
        })
    };
    let passed = out.iter().all(|s| s.holds);
    Ok(OscDecayReport { c_hypothesis, theta, alpha_hypothesis: -theta.log2(), alpha_measured, steps: out, passed })
}
