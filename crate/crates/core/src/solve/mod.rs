//! Numerical solutions of `F(x, u, Du, D^2u) = 0` with Dirichlet data, the
//! rescaling calculus and the Cole-Hopf change of variables.

mod cole_hopf;
mod radial;
mod rescale;
mod scheme;

pub use cole_hopf::{cole_hopf, ColeHopf};
pub use radial::{generate_radial, pucci_radial_solutions, RadialOracle, RadialProfile, RadialSolution};
pub use rescale::{rescale, rescale_params, Rescaling};

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction};
use crate::pucci::OperatorSpec;
use scheme::{node_stencil, NodeStencil, Scheme};

/// Dirichlet problem: `operator = 0` in the open domain, `boundary` values
/// on every other node of its grid. Values of `boundary` inside the domain
/// serve as the initial guess.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub operator: OperatorSpec,
    pub domain: Domain,
    pub boundary: GridFunction,
}

impl ProblemSpec {
    pub fn new(operator: OperatorSpec, domain: Domain, boundary: GridFunction) -> Result<Self> {
        let n = boundary.grid().dim();
        if domain.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: domain.dim() });
        }
        let problem = Self { operator, domain, boundary };
        problem.unknowns()?;
        Ok(problem)
    }

    fn unknowns(&self) -> Result<Vec<NodeStencil>> {
        let grid = self.boundary.grid();
        let scheme = Scheme::new(&self.operator, grid)?;
        let nodes: Vec<usize> =
            (0..grid.len()).filter(|&i| self.domain.contains_open(&grid.point(i)[..grid.dim()])).collect();
        if nodes.is_empty() {
            return Err(Error::EmptyIntersection);
        }
        nodes.into_iter().map(|i| node_stencil(grid, &scheme.stencil, i)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Policy iteration: freeze the active frame, coefficient choice and
    /// gradient weights, solve the linear system exactly, repeat.
    #[default]
    Howard,
    /// Damped explicit sweeps `u -= damping * F(u) / D`, where `D` bounds the
    /// center coefficient over all policies. For `damping <= 1` the update
    /// is monotone and the sup of the residual never increases.
    Jacobi { damping: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub u: GridFunction,
    pub residual_sup: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub method: Method,
}

fn evaluate(scheme: &Scheme, nodes: &[NodeStencil], u: &[f64]) -> Vec<scheme::Local> {
    nodes.par_iter().map(|ns| scheme.local(ns, u)).collect()
}

fn sup_residual(locals: &[scheme::Local]) -> f64 {
    locals.iter().map(|l| l.value.abs()).fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
}

/// Sup norm of the discrete operator over the domain nodes.
pub fn residual(problem: &ProblemSpec, u: &GridFunction) -> Result<f64> {
    if !u.grid().same_layout(problem.boundary.grid()) {
        return Err(Error::InvalidGrid("u and the problem live on different grids".into()));
    }
    let scheme = Scheme::new(&problem.operator, u.grid())?;
    let nodes = problem.unknowns()?;
    Ok(sup_residual(&evaluate(&scheme, &nodes, u.values())))
}

pub fn solve(problem: &ProblemSpec, tol_solve: f64, max_iter: usize) -> Result<SolveResult> {
    solve_with(problem, tol_solve, max_iter, Method::Howard)
}

pub fn solve_with(problem: &ProblemSpec, tol_solve: f64, max_iter: usize, method: Method) -> Result<SolveResult> {
    if let Method::Jacobi { damping } = method {
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {damping}")));
        }
    }
    let grid = problem.boundary.grid();
    let scheme = Scheme::new(&problem.operator, grid)?;
    let nodes = problem.unknowns()?;
    let mut position = vec![usize::MAX; grid.len()];
    for (r, ns) in nodes.iter().enumerate() {
        position[ns.node] = r;
    }
    let mut u = problem.boundary.values().to_vec();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let locals = evaluate(&scheme, &nodes, &u);
        let res = sup_residual(&locals);
        history.push(res);
        if res <= tol_solve {
            converged = true;
            break;
        }
        if iterations >= max_iter || !res.is_finite() {
            break;
        }
        iterations += 1;
        match method {
            Method::Howard => howard_step(&nodes, &position, &locals, &mut u)?,
            Method::Jacobi { damping } => {
                for (ns, l) in nodes.iter().zip(&locals) {
                    if l.diag_bound > 0.0 {
                        u[ns.node] -= damping * l.value / l.diag_bound;
                    }
                }
            }
        }
    }
    let residual_sup = *history.last().expect("at least one evaluation");
    Ok(SolveResult {
        u: GridFunction::from_values(grid.clone(), "u", u)?,
        residual_sup,
        iterations,
        converged,
        residual_history: history,
        method,
    })
}

fn howard_step(nodes: &[NodeStencil], position: &[usize], locals: &[scheme::Local], u: &mut [f64]) -> Result<()> {
    let k = nodes.len();
    let mut triplets = Vec::with_capacity(locals.iter().map(|l| l.entries.len()).sum());
    let mut rhs = vec![0.0; k];
    for (r, l) in locals.iter().enumerate() {
        let linear_at_u: f64 = l.entries.iter().map(|&(j, a)| a * u[j]).sum();
        rhs[r] = linear_at_u - l.value;
        for &(j, a) in &l.entries {
            if position[j] == usize::MAX {
                rhs[r] -= a * u[j];
            } else {
                triplets.push(Triplet::new(r, position[j], a));
            }
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(k, k, &triplets)
        .map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::LinearSolver(format!("{e:?}")))?;
    let sol = lu.solve(Mat::from_fn(k, 1, |i, _| rhs[i]));
    for (r, ns) in nodes.iter().enumerate() {
        u[ns.node] = sol[(r, 0)];
    }
    Ok(())
}
