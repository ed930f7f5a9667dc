//! Monotone wide-stencil discretization. Second derivatives are taken along
//! the axes and face diagonals, grouped into orthonormal frames; a Pucci
//! operator is the extremum over frames of its value on the frame-diagonal
//! part of the Hessian. Every local operator is nondecreasing in the center
//! value and nonincreasing in the neighbors.

use crate::error::{Error, Result};
use crate::grid::{Grid, MultiIndex};
use crate::pucci::{Core, OperatorKind, OperatorSpec};

pub(crate) struct Stencil {
    pub dirs: Vec<[i64; 3]>,
    pub frames: Vec<Vec<usize>>,
}

impl Stencil {
    pub fn new(n: usize) -> Self {
        match n {
            1 => Self { dirs: vec![[1, 0, 0]], frames: vec![vec![0]] },
            2 => Self { dirs: vec![[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0]], frames: vec![vec![0, 1], vec![2, 3]] },
            _ => Self {
                dirs: vec![
                    [1, 0, 0],
                    [0, 1, 0],
                    [0, 0, 1],
                    [1, 1, 0],
                    [1, -1, 0],
                    [1, 0, 1],
                    [1, 0, -1],
                    [0, 1, 1],
                    [0, 1, -1],
                ],
                frames: vec![vec![0, 1, 2], vec![3, 4, 2], vec![5, 6, 1], vec![7, 8, 0]],
            },
        }
    }

    fn len2(&self, k: usize) -> f64 {
        self.dirs[k].iter().map(|v| (v * v) as f64).sum()
    }

    fn unit(&self, k: usize, n: usize) -> Vec<f64> {
        let l = self.len2(k).sqrt();
        self.dirs[k][..n].iter().map(|&v| v as f64 / l).collect()
    }
}

/// Neighbor indices of one unknown node.
#[derive(Clone)]
pub(crate) struct NodeStencil {
    pub node: usize,
    /// `(plus, minus)` flat indices for every stencil direction.
    pub pairs: Vec<(usize, usize)>,
}

pub(crate) fn node_stencil(grid: &Grid, stencil: &Stencil, node: usize) -> Result<NodeStencil> {
    let m: MultiIndex = grid.multi(node);
    let mut pairs = Vec::with_capacity(stencil.dirs.len());
    for d in &stencil.dirs {
        let plus = grid.offset(&m, d);
        let minus = grid.offset(&m, &[-d[0], -d[1], -d[2]]);
        match (plus, minus) {
            (Some(p), Some(q)) => pairs.push((grid.flat(&p), grid.flat(&q))),
            _ => {
                return Err(Error::InvalidGrid(format!(
                    "stencil of the domain node {:?} leaves the grid; enlarge the grid by two cells",
                    &grid.point(node)[..grid.dim()]
                )))
            }
        }
    }
    Ok(NodeStencil { node, pairs })
}

/// `F` at a node together with a linearization `sum a_j u_j + c` that
/// agrees with it at the current iterate.
pub(crate) struct Local {
    pub value: f64,
    pub entries: Vec<(usize, f64)>,
    /// Largest center coefficient over all policies at this node, with the
    /// current gradient weights.
    pub diag_bound: f64,
}

struct Builder {
    entries: Vec<(usize, f64)>,
}

impl Builder {
    /// Adds `-a * (second difference along direction k)`.
    fn second(&mut self, ns: &NodeStencil, k: usize, a: f64, scale: f64) {
        let c = a / scale;
        self.entries.push((ns.pairs[k].0, -c));
        self.entries.push((ns.pairs[k].1, -c));
        self.entries.push((ns.node, 2.0 * c));
    }
}

fn sign_pow(t: f64, e: f64) -> f64 {
    t.signum() * t.abs().powf(e)
}

pub(crate) struct Scheme<'a> {
    pub spec: &'a OperatorSpec,
    pub grid: &'a Grid,
    pub stencil: Stencil,
    pub eps: f64,
}

impl<'a> Scheme<'a> {
    pub fn new(spec: &'a OperatorSpec, grid: &'a Grid) -> Result<Self> {
        if let OperatorKind::QuasiLinear(q) = &spec.kind {
            return Err(Error::Unsupported(format!("no monotone stencil for the quasi-linear operator {}", q.label)));
        }
        Ok(Self { spec, grid, stencil: Stencil::new(grid.dim()), eps: grid.spacing() })
    }

    fn second_differences(&self, ns: &NodeStencil, u: &[f64]) -> Vec<f64> {
        let h2 = self.grid.spacing().powi(2);
        ns.pairs
            .iter()
            .enumerate()
            .map(|(k, &(p, m))| (u[p] - 2.0 * u[ns.node] + u[m]) / (self.stencil.len2(k) * h2))
            .collect()
    }

    fn central_gradient(&self, ns: &NodeStencil, u: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        (0..self.grid.dim()).map(|k| (u[ns.pairs[k].0] - u[ns.pairs[k].1]) / (2.0 * h)).collect()
    }

    fn pucci_diag_bound(&self, weight: f64) -> f64 {
        let h2 = self.grid.spacing().powi(2);
        let big = self.spec.big_lambda();
        self.stencil
            .frames
            .iter()
            .map(|f| f.iter().map(|&k| 2.0 * weight * big / (self.stencil.len2(k) * h2)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Frame-extremal Pucci value and its active linear policy.
    fn pucci(&self, core: Core, ns: &NodeStencil, d: &[f64], weight: f64, b: &mut Builder) -> f64 {
        let (lam, big) = (self.spec.lambda(), self.spec.big_lambda());
        let h2 = self.grid.spacing().powi(2);
        let coeff = |dk: f64| match core {
            Core::PucciPlus => {
                if dk >= 0.0 {
                    lam
                } else {
                    big
                }
            }
            Core::PucciMinus => {
                if dk >= 0.0 {
                    big
                } else {
                    lam
                }
            }
        };
        let frame_value = |f: &Vec<usize>| f.iter().map(|&k| -coeff(d[k]) * d[k]).sum::<f64>();
        let mut best = 0;
        for f in 1..self.stencil.frames.len() {
            let (v, cur) = (frame_value(&self.stencil.frames[f]), frame_value(&self.stencil.frames[best]));
            let better = match core {
                Core::PucciPlus => v > cur,
                Core::PucciMinus => v < cur,
            };
            if better {
                best = f;
            }
        }
        for &k in &self.stencil.frames[best] {
            b.second(ns, k, weight * coeff(d[k]), self.stencil.len2(k) * h2);
        }
        weight * frame_value(&self.stencil.frames[best])
    }

    pub fn local(&self, ns: &NodeStencil, u: &[f64]) -> Local {
        let n = self.grid.dim();
        let h = self.grid.spacing();
        let h2 = h * h;
        let x = self.grid.point(ns.node);
        let x = &x[..n];
        let d = self.second_differences(ns, u);
        let mut b = Builder { entries: Vec::with_capacity(4 * self.stencil.dirs.len() + 2) };
        let ui = u[ns.node];
        let mut value = self.spec.source.at(x);
        let mut bound = 0.0;
        let lam = self.spec.lambda();
        match &self.spec.kind {
            OperatorKind::PucciPlus => {
                value += self.pucci(Core::PucciPlus, ns, &d, 1.0, &mut b);
                bound = self.pucci_diag_bound(1.0);
            }
            OperatorKind::PucciMinus => {
                value += self.pucci(Core::PucciMinus, ns, &d, 1.0, &mut b);
                bound = self.pucci_diag_bound(1.0);
            }
            OperatorKind::Laplace => {
                for k in 0..n {
                    b.second(ns, k, lam, self.stencil.len2(k) * h2);
                    value -= lam * d[k];
                }
            }
            OperatorKind::MLaplace { m } => {
                let p = self.central_gradient(ns, u);
                let r2: f64 = p.iter().map(|v| v * v).sum();
                let w = (r2 + self.eps * self.eps).powf((m - 2.0) / 2.0);
                let star = if r2 > 0.0 {
                    (0..self.stencil.dirs.len())
                        .max_by(|&i, &j| {
                            let dot = |k: usize| {
                                self.stencil.unit(k, n).iter().zip(&p).map(|(a, c)| a * c).sum::<f64>().abs()
                            };
                            dot(i).total_cmp(&dot(j)).then(j.cmp(&i))
                        })
                        .expect("directions")
                } else {
                    0
                };
                let frame = self.stencil.frames.iter().find(|f| f.contains(&star)).expect("frame");
                for &k in frame {
                    let a = if k == star { w * (m - 1.0) } else { w };
                    b.second(ns, k, a, self.stencil.len2(k) * h2);
                    value -= a * d[k];
                }
            }
            OperatorKind::HomogFamily { alpha, core, b: drift, c, f0 } => {
                let p = self.central_gradient(ns, u);
                let w = if *alpha == 0.0 {
                    1.0
                } else {
                    (p.iter().map(|v| v * v).sum::<f64>() + self.eps * self.eps).powf(alpha / 2.0)
                };
                value += self.pucci(*core, ns, &d, w, &mut b);
                bound = self.pucci_diag_bound(w);
                for (k, bk) in drift.iter().enumerate().take(n) {
                    let bk = bk.at(x);
                    let (plus, minus) = ns.pairs[k];
                    bound += w * bk.abs() / h;
                    if bk > 0.0 {
                        let c1 = w * bk / h;
                        b.entries.push((ns.node, c1));
                        b.entries.push((minus, -c1));
                        value += c1 * (ui - u[minus]);
                    } else if bk < 0.0 {
                        let c1 = w * bk / h;
                        b.entries.push((plus, c1));
                        b.entries.push((ns.node, -c1));
                        value += c1 * (u[plus] - ui);
                    }
                }
                if *c > 0.0 {
                    value += c * sign_pow(ui, 1.0 + alpha);
                    let slope = c * (1.0 + alpha) * ui.abs().max(h).powf(*alpha);
                    b.entries.push((ns.node, slope));
                    bound += slope;
                }
                value += f0.at(x);
            }
            OperatorKind::QuasiLinear(_) => unreachable!("rejected in Scheme::new"),
        }
        let diag: f64 = b.entries.iter().filter(|e| e.0 == ns.node).map(|e| e.1).sum();
        Local { value, entries: b.entries, diag_bound: diag.max(bound) }
    }
}
