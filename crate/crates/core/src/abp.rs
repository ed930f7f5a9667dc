//! The ABP maximum principle for equations that are strictly elliptic only
//! for large gradients, checked on grid functions.

use serde::{Deserialize, Serialize};

use crate::envelope::{convex_envelope, EnvelopeResult};
use crate::error::{Error, Result};
use crate::fd::{fd_gradient, fd_hessian};
use crate::grid::{norm, unit_ball_volume, Domain, DomainKind, Grid, GridFunction, MultiIndex};
use crate::linalg::SymMatrix;
use crate::measure::lp_norm;
use crate::params::StructureParams;
use crate::report::VerificationReport;

/// `C_ABP = n 2^(n-2) / (omega_n lambda^n)`.
pub fn c_abp(n: usize, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda_F must be positive, got {lambda}")));
    }
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("dimension must be 1, 2 or 3, got {n}")));
    }
    let nf = n as f64;
    Ok(nf * 2f64.powi(n as i32 - 2) / (unit_ball_volume(n) * lambda.powi(n as i32)))
}

/// `C = 3 exp(C_ABP (1 + s^n))` where `s` is the `L^n(B_d)` norm of sigma.
pub fn abp_constant(n: usize, lambda: f64, sigma_ln: f64) -> Result<f64> {
    if !(sigma_ln >= 0.0 && sigma_ln.is_finite()) {
        return Err(Error::InvalidArgument(format!("the norm of sigma must be finite and >= 0, got {sigma_ln}")));
    }
    Ok(3.0 * (c_abp(n, lambda)? * (1.0 + sigma_ln.powi(n as i32))).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbpReport {
    pub dim: usize,
    pub d: f64,
    pub h: f64,
    pub m_f: f64,
    /// `sup_{B_d} u^-` over grid nodes.
    pub lhs: f64,
    /// `sup u^-` over the boundary ring.
    pub m_partial: f64,
    /// `(int_{B_d and contact} (f^+)^n)^(1/n)` with `f = g(x, -M_partial)`.
    pub contact_integral: f64,
    /// The contact integral with the contact tolerance halved and doubled.
    pub contact_integral_half_tol: f64,
    pub contact_integral_double_tol: f64,
    pub tol_contact: f64,
    pub contact_nodes: usize,
    pub c_abp: f64,
    pub sigma_ln: f64,
    pub c_used: f64,
    pub rhs: f64,
    /// `rhs - lhs`, never clipped.
    pub margin: f64,
}

impl AbpReport {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }

    pub fn csv_header() -> &'static str {
        "dim,d,h,M_F,lhs,M_partial,contact_integral,C_ABP,sigma_Ln,C,rhs,margin"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.dim,
            self.d,
            self.h,
            self.m_f,
            self.lhs,
            self.m_partial,
            self.contact_integral,
            self.c_abp,
            self.sigma_ln,
            self.c_used,
            self.rhs,
            self.margin
        )
    }
}

fn ball_radius(ball: &Domain) -> Result<f64> {
    match ball.kind() {
        DomainKind::Ball { radius } => Ok(radius),
        DomainKind::Cube { .. } => Err(Error::InvalidDomain("the ABP estimate is stated on a ball".into())),
    }
}

/// Corner offsets of the cells adjacent to a node, as `2^n` cell origins.
fn cell_origins(grid: &Grid, m: &MultiIndex) -> Vec<MultiIndex> {
    let n = grid.dim();
    (0..1usize << n)
        .filter_map(|s| {
            let mut step = [0i64; 3];
            for (k, sk) in step.iter_mut().enumerate().take(n) {
                *sk = -((s >> k & 1) as i64);
            }
            let o = grid.offset(m, &step)?;
            (0..n).all(|k| o[k] + 1 < grid.points_per_axis()).then_some(o)
        })
        .collect()
}

/// Nodes that are a corner of some cell meeting the sphere `|x - c| = d`.
pub fn boundary_ring(grid: &Grid, ball: &Domain) -> Result<Vec<usize>> {
    let d = ball_radius(ball)?;
    let n = grid.dim();
    let c = ball.center();
    let h = grid.spacing();
    let mut ring = Vec::new();
    for i in 0..grid.len() {
        let m = grid.multi(i);
        let touches = cell_origins(grid, &m).iter().any(|o| {
            let (mut near, mut far) = (0.0, 0.0);
            for k in 0..n {
                let lo = grid.axis_coord(k, o[k]) - c[k];
                let hi = lo + h;
                let closest = if lo > 0.0 {
                    lo
                } else if hi < 0.0 {
                    hi
                } else {
                    0.0
                };
                near += closest * closest;
                far += lo.abs().max(hi.abs()).powi(2);
            }
            near.sqrt() <= d && d <= far.sqrt()
        });
        if touches {
            ring.push(i);
        }
    }
    if ring.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(ring)
}

/// `f(x) = g(x, -M_partial)`, where the large-gradient condition reads
/// `-lambda tr X + sigma |p| + g(x, u) >= 0` with `g(x, u) = gamma u + f(x)`.
fn forcing(params: &StructureParams, m_partial: f64, x: &[f64]) -> f64 {
    params.f.at(x) - params.gamma * m_partial
}

/// `(int (1_contact (f^+)^n))^(1/n)` over the cells centered in the ball,
/// with the cell value taken as the mean over its corners.
fn contact_integral(env: &EnvelopeResult, params: &StructureParams, tol: f64) -> f64 {
    let grid = &env.grid;
    let n = grid.dim();
    let h = grid.spacing();
    let pn = n as i32;
    let integrand: Vec<f64> = (0..grid.len())
        .map(|i| {
            let contact = env.active[i] && (env.obstacle.value(i) - env.gamma.value(i)).abs() <= tol;
            if contact {
                forcing(params, env.m_partial, &grid.point(i)[..n]).max(0.0).powi(pn)
            } else {
                0.0
            }
        })
        .collect();
    let cells = grid.points_per_axis() - 1;
    let mut sum = 0.0;
    for c in 0..cells.pow(n as u32) {
        let mut base: MultiIndex = [0; 3];
        let mut rest = c;
        for k in (0..n).rev() {
            base[k] = rest % cells;
            rest /= cells;
        }
        let center: Vec<f64> = (0..n).map(|k| grid.axis_coord(k, base[k]) + 0.5 * h - env.center[k]).collect();
        if norm(&center) > env.radius {
            continue;
        }
        let mut acc = 0.0;
        for corner in 0..1usize << n {
            let mut m = base;
            for (k, mk) in m.iter_mut().enumerate().take(n) {
                *mk += corner >> k & 1;
            }
            acc += integrand[grid.flat(&m)];
        }
        sum += acc / (1usize << n) as f64;
    }
    (sum * h.powi(pn)).powf(1.0 / n as f64)
}

/// Assembles both sides of the ABP estimate for `u` on the ball. A negative
/// margin is reported, not raised.
pub fn abp_check(u: &GridFunction, ball: &Domain, params: &StructureParams) -> Result<AbpReport> {
    let d = ball_radius(ball)?;
    let grid = u.grid();
    let n = grid.dim();
    if ball.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: ball.dim() });
    }
    let neg = |i: usize| (-u.value(i)).max(0.0);
    let m_partial = boundary_ring(grid, ball)?.into_iter().map(neg).fold(0.0, f64::max);
    let lhs = (0..grid.len()).filter(|&i| ball.contains(&grid.point(i)[..n])).map(neg).fold(0.0, f64::max);
    let env = convex_envelope(u, ball, m_partial)?;
    let tol = env.tol_contact;
    let k = contact_integral(&env, params, tol);
    let sigma = params.sigma.sample_on(grid, "sigma")?;
    let sigma_ln = lp_norm(&sigma, n as f64, ball)?;
    let c_abp = c_abp(n, params.lambda)?;
    let c_used = abp_constant(n, params.lambda, sigma_ln)?;
    let rhs = m_partial + c_used * d * (params.m_f + k);
    Ok(AbpReport {
        dim: n,
        d,
        h: grid.spacing(),
        m_f: params.m_f,
        lhs,
        m_partial,
        contact_integral: k,
        contact_integral_half_tol: contact_integral(&env, params, tol / 2.0),
        contact_integral_double_tol: contact_integral(&env, params, tol * 2.0),
        tol_contact: tol,
        contact_nodes: env.contact_nodes_in_ball().len(),
        c_abp,
        sigma_ln,
        c_used,
        rhs,
        margin: rhs - lhs,
    })
}

/// Minimizer of `M + K / M^alpha` over `M > 0`: `(alpha K)^(1/(1+alpha))`.
/// For `alpha = 0` or `K = 0` the infimum is approached as `M -> 0`.
pub fn abp_singular_minimizer(k: f64, alpha: f64) -> Result<f64> {
    check_singular(k, alpha)?;
    Ok((alpha * k).powf(1.0 / (1.0 + alpha)))
}

fn check_singular(k: f64, alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Unsupported(format!(
            "the optimized bound needs alpha >= 0, got {alpha}; the singular range uses a different weight"
        )));
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("the contact integral must be finite and >= 0, got {k}")));
    }
    Ok(())
}

/// `inf_{M_F > 0} C d (M_F + K / M_F^alpha)`, which is
/// `C d K^(1/(1+alpha)) (alpha^(1/(1+alpha)) + alpha^(-alpha/(1+alpha)))`
/// for `alpha > 0` and `C d K` for `alpha = 0`.
pub fn abp_singular_bound(k: f64, alpha: f64, d: f64, c: f64) -> Result<f64> {
    check_singular(k, alpha)?;
    if k == 0.0 {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return Ok(c * d * k);
    }
    let e = 1.0 / (1.0 + alpha);
    Ok(c * d * k.powf(e) * (alpha.powf(e) + alpha.powf(-alpha * e)))
}

/// A second-order subjet surrogate at an interior node: the central
/// gradient and Hessian, kept only when the paraboloid they define lies
/// below `u` on the `3^n` neighborhood up to `tol h^2`.
pub fn subjet_surrogate(u: &GridFunction, m: &MultiIndex, tol: f64) -> Result<Option<([f64; 3], SymMatrix)>> {
    let grid = u.grid();
    let n = grid.dim();
    let p = fd_gradient(u, m)?;
    let a = fd_hessian(u, m)?;
    let h = grid.spacing();
    let c = u.at(m);
    for s in 0..3usize.pow(n as u32) {
        let mut step = [0i64; 3];
        let mut rest = s;
        for sk in step.iter_mut().take(n) {
            *sk = (rest % 3) as i64 - 1;
            rest /= 3;
        }
        let y = grid.offset(m, &step).expect("interior node");
        let dy: Vec<f64> = step[..n].iter().map(|&k| k as f64 * h).collect();
        let lin: f64 = p[..n].iter().zip(&dy).map(|(a, b)| a * b).sum();
        let para = c + lin + 0.5 * a.quad(&dy);
        if u.at(&y) < para - tol * h * h {
            return Ok(None);
        }
    }
    Ok(Some((p, a)))
}

/// `lambda tr A <= sigma(x)|p| + f(x)` at nodes of the domain where a
/// subjet surrogate exists with `u <= 0`, `A >= 0` and `|p| >= M_F`. Nodes
/// failing a hypothesis are skipped.
pub fn pointwise_condition_check(
    u: &GridFunction,
    domain: &Domain,
    params: &StructureParams,
) -> Result<VerificationReport> {
    let grid = u.grid();
    let n = grid.dim();
    if domain.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: domain.dim() });
    }
    let h = grid.spacing();
    let mut rep = VerificationReport::new("abp_pointwise", 10.0 * h);
    for i in 0..grid.len() {
        let x = grid.point(i);
        let x = &x[..n];
        if !domain.contains_open(x) {
            continue;
        }
        let m = grid.multi(i);
        if !grid.is_interior(&m) || u.value(i) > 0.0 {
            rep.skip();
            continue;
        }
        let Some((p, a)) = subjet_surrogate(u, &m, 1e-9)? else {
            rep.skip();
            continue;
        };
        let pn = norm(&p[..n]);
        if pn < params.m_f || a.min_eigenvalue() < 0.0 {
            rep.skip();
            continue;
        }
        let lhs = params.lambda * a.trace();
        let rhs = params.sigma.at(x) * pn + params.f.at(x);
        rep.record(i, rhs - lhs, || format!("x = {x:?}: lambda tr A = {lhs:e} > {rhs:e}"));
    }
    Ok(rep.sorted())
}
