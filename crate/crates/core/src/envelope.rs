//! Convex envelope of `min(u + M_partial, 0)` on a ball, extended by zero to
//! the doubled ball, with contact set, witness decompositions and
//! gradient-image coverage.
//!
//! The envelope is computed on a cube of side `4d` with the spacing of the
//! input grid. Each relaxation step replaces the current values by the exact
//! lower hull along every lattice line in a fixed set of directions and
//! keeps the pointwise minimum (a Jacobi update, so the result does not
//! depend on scheduling), until a sweep lowers nothing. In one dimension a
//! single step is the exact hull.
//!
//! Witnesses come from a small linear program over the contact nodes, whose
//! optimal value is the convex envelope of the lifted nodes itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{fd_gradient, fd_hessian};
use crate::grid::{norm, Domain, DomainKind, Grid, GridFunction, MultiIndex};
use crate::lp::{min_cost_combination, Combination};
use crate::params::StructureParams;
use crate::report::VerificationReport;

/// Lattice directions used by the line relaxation.
pub fn stencil_directions(n: usize) -> Vec<[i64; 3]> {
    match n {
        1 => vec![[1, 0, 0]],
        2 => vec![[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0], [1, 2, 0], [2, 1, 0], [1, -2, 0], [2, -1, 0]],
        _ => vec![
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [1, 1, 0],
            [1, -1, 0],
            [1, 0, 1],
            [1, 0, -1],
            [0, 1, 1],
            [0, 1, -1],
            [1, 1, 1],
            [1, 1, -1],
            [1, -1, 1],
            [-1, 1, 1],
        ],
    }
}

/// A node lies on the segment `[a, b]` of a hull line: `x = (1 - t) a + t b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub t: f64,
    pub direction: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Cube of side about `4d` on which `gamma` and `obstacle` live.
    pub grid: Grid,
    pub gamma: GridFunction,
    /// `min(u + M_partial, 0)` on `B_d`, zero on the rest of `B_{2d}`.
    pub obstacle: GridFunction,
    /// Nodes of the closed doubled ball.
    pub active: Vec<bool>,
    pub in_ball: Vec<bool>,
    pub contact_mask: Vec<bool>,
    pub tol_contact: f64,
    pub m_partial: f64,
    /// `(sup_{B_d} u^- - M_partial)^+`.
    pub m: f64,
    /// Cell-averaged gradients of `gamma` over cells centered in `B_d`.
    pub gradient_samples: Vec<[f64; 3]>,
    pub edges: Vec<Option<Edge>>,
    pub sweeps: usize,
}

const LOWER_SLACK: f64 = 1e-14;

/// Lower convex hull vertices of `(k, y[k])`, collinear points dropped.
fn hull_vertices(y: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(y.len());
    for k in 0..y.len() {
        while hull.len() >= 2 {
            let i = hull[hull.len() - 2];
            let j = hull[hull.len() - 1];
            let lhs = (y[j] - y[i]) * (k - i) as f64;
            let rhs = (y[k] - y[i]) * (j - i) as f64;
            if lhs >= rhs {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    hull
}

struct Lattice<'a> {
    grid: &'a Grid,
    active: &'a [bool],
}

impl Lattice<'_> {
    fn step(&self, i: usize, dir: &[i64; 3], sign: i64) -> Option<usize> {
        let m = self.grid.multi(i);
        let s = [dir[0] * sign, dir[1] * sign, dir[2] * sign];
        let j = self.grid.flat(&self.grid.offset(&m, &s)?);
        self.active[j].then_some(j)
    }

    /// Every maximal run of active nodes along `dir`.
    fn lines(&self, dir: &[i64; 3]) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for s in 0..self.grid.len() {
            if !self.active[s] || self.step(s, dir, -1).is_some() {
                continue;
            }
            let mut line = vec![s];
            let mut cur = s;
            while let Some(next) = self.step(cur, dir, 1) {
                line.push(next);
                cur = next;
            }
            out.push(line);
        }
        out
    }
}

fn scale_of(v: &[f64]) -> f64 {
    v.iter().fold(1.0_f64, |m, x| m.max(x.abs()))
}

/// One Jacobi relaxation step. Returns the new values and whether any
/// node was lowered.
fn relax_once(lines: &[Vec<Vec<usize>>], w: &[f64]) -> (Vec<f64>, bool) {
    let slack = LOWER_SLACK * scale_of(w);
    let per_direction: Vec<Vec<f64>> = lines
        .par_iter()
        .map(|dir_lines| {
            let mut out = w.to_vec();
            let mut y = Vec::new();
            for line in dir_lines {
                y.clear();
                y.extend(line.iter().map(|&i| w[i]));
                let hull = hull_vertices(&y);
                for seg in hull.windows(2) {
                    let (i, j) = (seg[0], seg[1]);
                    for k in (i + 1)..j {
                        let t = (k - i) as f64 / (j - i) as f64;
                        let v = y[i] + t * (y[j] - y[i]);
                        if v < y[k] - slack {
                            out[line[k]] = v;
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut out = w.to_vec();
    let mut moved = false;
    for candidate in &per_direction {
        for (o, c) in out.iter_mut().zip(candidate) {
            if *c < *o {
                *o = *c;
                moved = true;
            }
        }
    }
    (out, moved)
}

/// Relaxes `values` (on active nodes) to their directional convex envelope:
/// the largest function below them that is convex along every stencil line.
/// Stops when a sweep lowers nothing. Returns the envelope and the number
/// of sweeps.
pub fn lower_envelope(grid: &Grid, active: &[bool], values: &[f64]) -> (Vec<f64>, usize) {
    let lattice = Lattice { grid, active };
    let lines: Vec<Vec<Vec<usize>>> = stencil_directions(grid.dim()).iter().map(|d| lattice.lines(d)).collect();
    let mut w = values.to_vec();
    let mut sweeps = 0;
    loop {
        let (next, moved) = relax_once(&lines, &w);
        sweeps += 1;
        w = next;
        if !moved || sweeps >= 100_000 {
            return (w, sweeps);
        }
    }
}

/// For each node strictly inside a hull segment along some direction, the
/// longest such segment.
fn hull_edges(grid: &Grid, active: &[bool], w: &[f64]) -> Vec<Option<Edge>> {
    let lattice = Lattice { grid, active };
    let mut edges: Vec<Option<Edge>> = vec![None; grid.len()];
    let mut best_len = vec![0usize; grid.len()];
    for (d, dir) in stencil_directions(grid.dim()).iter().enumerate() {
        for line in lattice.lines(dir) {
            let y: Vec<f64> = line.iter().map(|&i| w[i]).collect();
            let hull = hull_vertices(&y);
            for seg in hull.windows(2) {
                let (i, j) = (seg[0], seg[1]);
                for k in (i + 1)..j {
                    let node = line[k];
                    if j - i > best_len[node] {
                        best_len[node] = j - i;
                        edges[node] =
                            Some(Edge { a: line[i], b: line[j], t: (k - i) as f64 / (j - i) as f64, direction: d });
                    }
                }
            }
        }
    }
    edges
}

fn cell_gradients(gamma: &GridFunction, include: impl Fn(&[f64]) -> bool) -> Vec<[f64; 3]> {
    let g = gamma.grid();
    let n = g.dim();
    let cells = g.points_per_axis() - 1;
    let h = g.spacing();
    let mut out = Vec::new();
    for c in 0..cells.pow(n as u32) {
        let mut base: MultiIndex = [0; 3];
        let mut rest = c;
        for k in (0..n).rev() {
            base[k] = rest % cells;
            rest /= cells;
        }
        let mut center = [0.0; 3];
        for k in 0..n {
            center[k] = g.lower(k) + (base[k] as f64 + 0.5) * h;
        }
        if !include(&center[..n]) {
            continue;
        }
        let mut grad = [0.0; 3];
        let half = 1usize << (n - 1);
        for (k, gk) in grad.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for corner in 0..(1usize << n) {
                if corner >> k & 1 == 1 {
                    continue;
                }
                let mut lo = base;
                for (j, lj) in lo.iter_mut().enumerate().take(n) {
                    *lj += corner >> j & 1;
                }
                let mut hi = lo;
                hi[k] += 1;
                acc += (gamma.at(&hi) - gamma.at(&lo)) / h;
            }
            *gk = acc / half as f64;
        }
        out.push(grad);
    }
    out
}

/// Convex envelope of `min(u + m_partial, 0)` over the ball, extended by 0
/// on the doubled ball. `u` must be defined on a grid covering the ball.
pub fn convex_envelope(u: &GridFunction, ball: &Domain, m_partial: f64) -> Result<EnvelopeResult> {
    let d = match ball.kind() {
        DomainKind::Ball { radius } => radius,
        DomainKind::Cube { .. } => return Err(Error::InvalidDomain("envelope needs a ball".into())),
    };
    let n = u.grid().dim();
    if ball.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: ball.dim() });
    }
    if !u.grid().covers(ball) {
        return Err(Error::InvalidDomain("the ball is not covered by the grid of u".into()));
    }
    if !m_partial.is_finite() {
        return Err(Error::InvalidArgument(format!("M_partial must be finite, got {m_partial}")));
    }
    let h = u.grid().spacing();
    let half_cells = (2.0 * d / h - 1e-9).ceil() as usize;
    let grid = Grid::new(ball.center(), 2.0 * half_cells as f64 * h, 2 * half_cells + 1)?;
    let c = ball.center();
    let dist = |i: usize| norm(&sub(&grid.point(i)[..n], c));
    let active: Vec<bool> = (0..grid.len()).map(|i| dist(i) <= 2.0 * d * (1.0 + 1e-12)).collect();
    let in_ball: Vec<bool> = (0..grid.len()).map(|i| dist(i) <= d * (1.0 + 1e-12)).collect();
    let obstacle_values: Vec<f64> = (0..grid.len())
        .map(|i| if in_ball[i] { (u.interpolate_clamped(&grid.point(i)[..n]) + m_partial).min(0.0) } else { 0.0 })
        .collect();
    let (mut w, sweeps) = lower_envelope(&grid, &active, &obstacle_values);
    for (wi, &a) in w.iter_mut().zip(&active) {
        if !a {
            *wi = 0.0;
        }
    }
    let tol_contact = 10.0 * h * h;
    let contact_mask: Vec<bool> =
        (0..grid.len()).map(|i| active[i] && (obstacle_values[i] - w[i]).abs() <= tol_contact).collect();
    let m = -(0..grid.len()).filter(|&i| in_ball[i]).map(|i| obstacle_values[i]).fold(0.0_f64, f64::min);
    let edges = hull_edges(&grid, &active, &w);
    let gamma = GridFunction::from_values(grid.clone(), "gamma", w)?;
    let gradient_samples = cell_gradients(&gamma, |x| ball.contains(x));
    Ok(EnvelopeResult {
        center: c.to_vec(),
        radius: d,
        obstacle: GridFunction::from_values(grid.clone(), "obstacle", obstacle_values)?,
        grid,
        gamma,
        active,
        in_ball,
        contact_mask,
        tol_contact,
        m_partial,
        m,
        gradient_samples,
        edges,
        sweeps,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl EnvelopeResult {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn is_contact(&self, i: usize) -> bool {
        self.contact_mask[i]
    }

    /// Contact nodes inside the closed ball `B_d`.
    pub fn contact_nodes_in_ball(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.in_ball[i] && self.contact_mask[i]).collect()
    }

    /// Locates a node of the envelope grid at `x` (within `1e-9 h`).
    pub fn node_at(&self, x: &[f64]) -> Result<usize> {
        let m = self.grid.nearest(x).ok_or(Error::EscapesGrid)?;
        let i = self.grid.flat(&m);
        let p = self.grid.point(i);
        if norm(&sub(&p[..self.dim()], x)) > 1e-9 * self.grid.spacing() {
            return Err(Error::InvalidArgument(format!("{x:?} is not a node of the envelope grid")));
        }
        Ok(i)
    }

    /// Cheapest convex combination of contact nodes reaching node `i`,
    /// priced by the obstacle: the vertices of the supporting facet below
    /// `i`, at most `n + 1` of them. A contact node decomposes into itself.
    pub fn decompose_node(&self, i: usize) -> Result<Combination> {
        if self.contact_mask[i] {
            return Ok(Combination { parts: vec![(i, 1.0)], cost: self.obstacle.value(i) });
        }
        let n = self.dim();
        let candidates: Vec<usize> = (0..self.grid.len()).filter(|&j| self.contact_mask[j]).collect();
        let points: Vec<Vec<f64>> = candidates.iter().map(|&j| sub(&self.grid.point(j)[..n], &self.center)).collect();
        let costs: Vec<f64> = candidates.iter().map(|&j| self.obstacle.value(j)).collect();
        let target = sub(&self.grid.point(i)[..n], &self.center);
        let c = min_cost_combination(&points, &costs, &target)?;
        Ok(Combination { parts: c.parts.into_iter().map(|(k, w)| (candidates[k], w)).collect(), cost: c.cost })
    }

    /// Writes a non-contact node of `B_d` as a convex combination of contact
    /// points on which the envelope is affine.
    pub fn witness_decomposition(&self, x: &[f64]) -> Result<Vec<Witness>> {
        let i = self.node_at(x)?;
        if !self.in_ball[i] {
            return Err(Error::InvalidArgument(format!("{x:?} lies outside the ball")));
        }
        if self.contact_mask[i] {
            return Err(Error::WitnessTrivial(i));
        }
        let n = self.dim();
        Ok(self
            .decompose_node(i)?
            .parts
            .into_iter()
            .map(|(j, w)| Witness { point: self.grid.point(j)[..n].to_vec(), weight: w })
            .collect())
    }

    /// `(x, q, x_i, lambda_i)` rows for every non-contact node of `B_d`.
    pub fn witness_table_csv(&self) -> String {
        let n = self.dim();
        let mut s = String::from("x,q,x_i,lambda_i\n");
        for i in 0..self.grid.len() {
            if !self.in_ball[i] || self.contact_mask[i] {
                continue;
            }
            let Ok(c) = self.decompose_node(i) else {
                continue;
            };
            let parts = c.parts;
            let fmt = |p: &[f64]| p.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(" ");
            for (j, w) in &parts {
                s.push_str(&format!(
                    "{},{},{},{w:.17e}\n",
                    fmt(&self.grid.point(i)[..n]),
                    parts.len(),
                    fmt(&self.grid.point(*j)[..n])
                ));
            }
        }
        s
    }

    pub fn contact_mask_grid(&self) -> GridFunction {
        let v = self.contact_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        GridFunction::from_values(self.grid.clone(), "contact", v).expect("finite mask")
    }

    /// `sup |D gamma|` over the cell gradient samples.
    pub fn max_gradient(&self) -> f64 {
        self.gradient_samples.iter().map(|g| norm(&g[..self.dim()])).fold(0.0, f64::max)
    }

    /// Largest magnitude of a cell gradient among the cells touching node `i`.
    fn max_adjacent_gradient(&self, i: usize) -> f64 {
        let n = self.dim();
        let h = self.grid.spacing();
        let m = self.grid.multi(i);
        let mut best: f64 = 0.0;
        for corner in 0..(1usize << n) {
            let mut base = m;
            let mut ok = true;
            for k in 0..n {
                if corner >> k & 1 == 1 {
                    if base[k] == 0 {
                        ok = false;
                    } else {
                        base[k] -= 1;
                    }
                } else if base[k] + 1 >= self.grid.points_per_axis() {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            let mut g = [0.0; 3];
            for (k, gk) in g.iter_mut().enumerate().take(n) {
                let mut acc = 0.0;
                for c2 in 0..(1usize << n) {
                    if c2 >> k & 1 == 1 {
                        continue;
                    }
                    let mut lo = base;
                    for (j, lj) in lo.iter_mut().enumerate().take(n) {
                        *lj += c2 >> j & 1;
                    }
                    let mut hi = lo;
                    hi[k] += 1;
                    acc += (self.gamma.at(&hi) - self.gamma.at(&lo)) / h;
                }
                *gk = acc / (1usize << (n - 1)) as f64;
            }
            best = best.max(norm(&g[..n]));
        }
        best
    }

    /// Nodes of `B_d` whose adjacent cell gradients reach `m_f`.
    pub fn large_gradient_set(&self, m_f: f64) -> Vec<bool> {
        (0..self.grid.len()).map(|i| self.in_ball[i] && (m_f <= 0.0 || self.max_adjacent_gradient(i) >= m_f)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub outer_radius: f64,
    pub inner_radius: f64,
    pub annulus_empty: bool,
    pub samples: usize,
    pub covered: usize,
    pub fraction: f64,
    /// Samples not covered (at most 32 listed).
    pub uncovered_examples: Vec<Vec<f64>>,
}

/// Fraction of a regular sample of the annulus `B_{M/(3d)} \ B_{M_F}`
/// whose slopes support the envelope at some node of the large-gradient set.
/// A slope `p` is supported at `x` when `gamma(y) - p.y` is minimized over
/// the doubled ball at `y = x` (up to the contact tolerance).
pub fn gradient_image(env: &EnvelopeResult, m_f: f64, per_axis: usize) -> CoverageReport {
    let n = env.dim();
    let outer = env.m / (3.0 * env.radius);
    if outer <= m_f || outer == 0.0 {
        return CoverageReport {
            outer_radius: outer,
            inner_radius: m_f,
            annulus_empty: true,
            samples: 0,
            covered: 0,
            fraction: 1.0,
            uncovered_examples: vec![],
        };
    }
    let per_axis = per_axis.max(2);
    let mut slopes = Vec::new();
    let total = per_axis.pow(n as u32);
    for s in 0..total {
        let mut rest = s;
        let mut p = vec![0.0; n];
        for pk in p.iter_mut() {
            let k = rest % per_axis;
            rest /= per_axis;
            *pk = -outer + 2.0 * outer * k as f64 / (per_axis - 1) as f64;
        }
        let r = norm(&p);
        if r <= outer && r >= m_f {
            slopes.push(p);
        }
    }
    let nodes: Vec<(usize, Vec<f64>)> = (0..env.grid.len())
        .filter(|&i| env.active[i])
        .map(|i| (i, sub(&env.grid.point(i)[..n], &env.center)))
        .collect();
    let eligible = env.large_gradient_set(m_f);
    let tol = env.tol_contact;
    let covered_flags: Vec<bool> = slopes
        .par_iter()
        .map(|p| {
            let mut global = f64::INFINITY;
            let mut best_eligible = f64::INFINITY;
            for (i, y) in &nodes {
                let v = env.gamma.value(*i) - p.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
                global = global.min(v);
                if eligible[*i] {
                    best_eligible = best_eligible.min(v);
                }
            }
            best_eligible <= global + tol
        })
        .collect();
    let covered = covered_flags.iter().filter(|&&c| c).count();
    let uncovered_examples =
        slopes.iter().zip(&covered_flags).filter(|(_, &c)| !c).take(32).map(|(p, _)| p.clone()).collect();
    CoverageReport {
        outer_radius: outer,
        inner_radius: m_f,
        annulus_empty: false,
        samples: slopes.len(),
        covered,
        fraction: if slopes.is_empty() { 1.0 } else { covered as f64 / slopes.len() as f64 },
        uncovered_examples,
    }
}

/// Discrete Hessian bounds on the large-gradient set: at contact nodes
/// whose stencil is all contact, `max eig(D^2 gamma) <= (sigma|D gamma| +
/// f^+)/lambda + 10h`; at non-contact nodes the second difference along the
/// supporting segment vanishes to the same tolerance. Here `f` is
/// `params.f - gamma_F M_partial`.
pub fn hessian_contact_check(env: &EnvelopeResult, params: &StructureParams) -> VerificationReport {
    let n = env.dim();
    let h = env.grid.spacing();
    let tol = 10.0 * h;
    let mut rep = VerificationReport::new("envelope_hessian", tol);
    let eligible = env.large_gradient_set(params.m_f);
    let dirs = stencil_directions(n);
    for i in 0..env.grid.len() {
        if !eligible[i] {
            continue;
        }
        let m = env.grid.multi(i);
        if !env.grid.is_interior(&m) {
            rep.skip();
            continue;
        }
        let x = env.grid.point(i);
        let x = &x[..n];
        if env.contact_mask[i] {
            let all_contact = (0..3usize.pow(n as u32)).all(|s| {
                let mut step = [0i64; 3];
                let mut rest = s;
                for sk in step.iter_mut().take(n) {
                    *sk = (rest % 3) as i64 - 1;
                    rest /= 3;
                }
                env.grid.offset(&m, &step).map(|mm| env.contact_mask[env.grid.flat(&mm)]).unwrap_or(false)
            });
            if !all_contact {
                rep.skip();
                continue;
            }
            let hess = fd_hessian(&env.gamma, &m).expect("interior");
            let grad = fd_gradient(&env.gamma, &m).expect("interior");
            let f_eff = (params.f.at(x) - params.gamma * env.m_partial).max(0.0);
            let bound = (params.sigma.at(x) * norm(&grad[..n]) + f_eff) / params.lambda;
            let top = hess.max_eigenvalue();
            rep.record(i, bound - top, || format!("x = {x:?}: max eig {top:e} > bound {bound:e}"));
        } else {
            match env.edges[i] {
                Some(edge) => {
                    let dir = dirs[edge.direction];
                    let (Some(p), Some(q)) =
                        (env.grid.offset(&m, &dir), env.grid.offset(&m, &[-dir[0], -dir[1], -dir[2]]))
                    else {
                        rep.skip();
                        continue;
                    };
                    let len2 = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]) as f64 * h * h;
                    let second = (env.gamma.at(&p) - 2.0 * env.gamma.value(i) + env.gamma.at(&q)) / len2;
                    rep.record(i, -second.abs(), || format!("x = {x:?}: second difference {second:e} along segment"));
                }
                None => rep.skip(),
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_vertices_of_a_v() {
        assert_eq!(hull_vertices(&[0.0, -0.5, -1.0, -0.5, 0.0]), vec![0, 2, 4]);
        assert_eq!(hull_vertices(&[0.0, 1.0, 0.0]), vec![0, 2]);
    }

    #[test]
    fn nonnegative_input_gives_zero_envelope() {
        let g = Grid::new(&[0.0, 0.0], 2.0, 17).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| 1.0 + x[0] * x[0]).unwrap();
        let env = convex_envelope(&u, &Domain::ball(&[0.0, 0.0], 1.0).unwrap(), 0.0).unwrap();
        assert!(env.gamma.values().iter().all(|&v| v == 0.0));
        assert_eq!(env.m, 0.0);
        assert!(gradient_image(&env, 0.0, 11).annulus_empty);
    }
}
