//! Dyadic cubes and the Calderon-Zygmund stopping-time decomposition on
//! cell-aligned sets.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// A dyadic subcube of `Q_r`: `index` counts cubes of side `r / 2^level`
/// along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub dim: usize,
    pub level: u32,
    pub index: [u64; 3],
}

impl DyadicCube {
    pub fn root(dim: usize) -> Self {
        Self { dim, level: 0, index: [0; 3] }
    }

    /// Side relative to the root side.
    pub fn relative_side(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn children(&self) -> Vec<DyadicCube> {
        (0..1u64 << self.dim)
            .map(|s| {
                let mut index = [0; 3];
                for (k, ik) in index.iter_mut().enumerate().take(self.dim) {
                    *ik = 2 * self.index[k] + (s >> k & 1);
                }
                DyadicCube { dim: self.dim, level: self.level + 1, index }
            })
            .collect()
    }

    /// The cube this one was split from.
    pub fn parent(&self) -> Option<DyadicCube> {
        if self.level == 0 {
            return None;
        }
        let mut index = [0; 3];
        for (k, ik) in index.iter_mut().enumerate().take(self.dim) {
            *ik = self.index[k] / 2;
        }
        Some(DyadicCube { dim: self.dim, level: self.level - 1, index })
    }

    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.level >= self.level
            && (0..self.dim).all(|k| other.index[k] >> (other.level - self.level) == self.index[k])
    }

    /// Half-open cell ranges covered at `depth >= level`.
    fn cell_ranges(&self, depth: u32) -> [(u64, u64); 3] {
        let w = 1u64 << (depth - self.level);
        let mut r = [(0, 1); 3];
        for (k, rk) in r.iter_mut().enumerate().take(self.dim) {
            *rk = (self.index[k] * w, (self.index[k] + 1) * w);
        }
        r
    }
}

/// A set of cells of the `2^depth`-per-axis subdivision of `Q_r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub dim: usize,
    pub depth: u32,
    cells: Vec<bool>,
}

impl CellSet {
    pub fn empty(dim: usize, depth: u32) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if depth as usize * dim > 24 {
            return Err(Error::InvalidArgument(format!("2^({depth} * {dim}) cells is too many")));
        }
        Ok(Self { dim, depth, cells: vec![false; 1 << (depth as usize * dim)] })
    }

    pub fn from_fn(dim: usize, depth: u32, f: impl Fn(&[u64]) -> bool) -> Result<Self> {
        let mut s = Self::empty(dim, depth)?;
        for i in 0..s.cells.len() {
            s.cells[i] = f(&s.multi(i)[..dim]);
        }
        Ok(s)
    }

    /// Cells of `grid` whose center value (mean of the corners) satisfies
    /// `keep`. The grid needs `2^depth + 1` points per axis.
    pub fn from_grid(grid: &Grid, values: &[f64], keep: impl Fn(f64) -> bool) -> Result<Self> {
        let cells = grid.points_per_axis() - 1;
        if !cells.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "dyadic cubes need a power-of-two number of cells per axis, got {cells}"
            )));
        }
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        let n = grid.dim();
        let depth = cells.trailing_zeros();
        Self::from_fn(n, depth, |c| {
            let mut acc = 0.0;
            for corner in 0..1usize << n {
                let mut m = [0usize; 3];
                for k in 0..n {
                    m[k] = c[k] as usize + (corner >> k & 1);
                }
                acc += values[grid.flat(&m)];
            }
            keep(acc / (1usize << n) as f64)
        })
    }

    fn side(&self) -> u64 {
        1 << self.depth
    }

    fn multi(&self, mut i: usize) -> [u64; 3] {
        let side = self.side() as usize;
        let mut m = [0; 3];
        for k in (0..self.dim).rev() {
            m[k] = (i % side) as u64;
            i /= side;
        }
        m
    }

    fn flat(&self, m: &[u64]) -> usize {
        m[..self.dim].iter().fold(0usize, |acc, &v| acc * self.side() as usize + v as usize)
    }

    pub fn total_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Measure relative to `|Q_r|`.
    pub fn measure(&self) -> f64 {
        self.count() as f64 / self.cells.len() as f64
    }

    pub fn contains_cell(&self, m: &[u64]) -> bool {
        self.cells[self.flat(m)]
    }

    pub fn insert(&mut self, m: &[u64]) {
        let i = self.flat(m);
        self.cells[i] = true;
    }

    fn for_cells_in(&self, q: &DyadicCube, mut f: impl FnMut(usize)) {
        let r = q.cell_ranges(self.depth);
        for a in r[0].0..r[0].1 {
            for b in r[1].0..r[1].1 {
                for c in r[2].0..r[2].1 {
                    let m = [a, b, c];
                    f(self.flat(&m));
                }
            }
        }
    }

    pub fn count_in(&self, q: &DyadicCube) -> usize {
        let mut n = 0;
        self.for_cells_in(q, |i| n += self.cells[i] as usize);
        n
    }

    pub fn covers(&self, q: &DyadicCube) -> bool {
        let mut all = true;
        self.for_cells_in(q, |i| all &= self.cells[i]);
        all
    }

    pub fn insert_cube(&mut self, q: &DyadicCube) {
        let mut idx = Vec::new();
        self.for_cells_in(q, |i| idx.push(i));
        for i in idx {
            self.cells[i] = true;
        }
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.cells.len() == other.cells.len() && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &CellSet) -> CellSet {
        let cells = self.cells.iter().zip(&other.cells).map(|(&a, &b)| a || b).collect();
        CellSet { dim: self.dim, depth: self.depth, cells }
    }

    fn cube_cells(&self, q: &DyadicCube) -> usize {
        1usize << ((self.depth - q.level) as usize * self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CzdVerdict {
    /// Both hypotheses hold and `|A| <= delta |B|` was confirmed by count.
    Holds,
    /// Both hypotheses hold but the count contradicts the conclusion.
    Contradiction,
    HypothesesNotMet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzdReport {
    pub delta: f64,
    pub root_side: f64,
    /// `|A|`, `|B|` and `|Q_r|` as cell counts.
    pub cells_a: usize,
    pub cells_b: usize,
    pub cells_total: usize,
    pub cell_volume: f64,
    /// `|A| <= delta |Q_r|`.
    pub hypothesis_one: bool,
    /// Maximal dyadic cubes with `|A cap Q| > delta |Q|`.
    pub stopped: Vec<DyadicCube>,
    /// Stopped cubes whose predecessor is not inside `B`.
    pub predecessor_failures: Vec<DyadicCube>,
    pub verdict: CzdVerdict,
}

impl CzdReport {
    pub fn measure_a(&self) -> f64 {
        self.cells_a as f64 * self.cell_volume
    }

    pub fn measure_b(&self) -> f64 {
        self.cells_b as f64 * self.cell_volume
    }
}

/// Maximal dyadic cubes `Q` with `|A cap Q| > delta |Q|`, found by splitting
/// from the root and stopping at the first cube that qualifies.
pub fn stopped_cubes(a: &CellSet, delta: f64) -> Vec<DyadicCube> {
    let mut stack = vec![DyadicCube::root(a.dim)];
    let mut out = Vec::new();
    while let Some(q) = stack.pop() {
        let inside = a.count_in(&q);
        if inside == 0 {
            continue;
        }
        if inside as f64 > delta * a.cube_cells(&q) as f64 {
            out.push(q);
        } else if q.level < a.depth {
            stack.extend(q.children());
        }
    }
    out.sort_by_key(|q| (q.level, q.index));
    out
}

/// Runs the decomposition of `Q_r` for `A subset B` and checks its covering conclusion.
pub fn czd(a: &CellSet, b: &CellSet, root_side: f64, delta: f64) -> Result<CzdReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if a.dim != b.dim || a.depth != b.depth {
        return Err(Error::InvalidArgument("A and B live on different cell grids".into()));
    }
    if !a.is_subset(b) {
        return Err(Error::InvalidArgument("A must be a subset of B".into()));
    }
    if !(root_side > 0.0 && root_side.is_finite()) {
        return Err(Error::InvalidArgument(format!("root side must be positive, got {root_side}")));
    }
    let total = a.total_cells();
    let cells_a = a.count();
    let cells_b = b.count();
    let hypothesis_one = cells_a as f64 <= delta * total as f64;
    let stopped = if hypothesis_one { stopped_cubes(a, delta) } else { Vec::new() };
    let predecessor_failures: Vec<DyadicCube> =
        stopped.iter().filter(|q| !q.parent().is_some_and(|p| b.covers(&p))).copied().collect();
    let verdict = if !hypothesis_one || !predecessor_failures.is_empty() {
        CzdVerdict::HypothesesNotMet
    } else if cells_a as f64 <= delta * cells_b as f64 {
        CzdVerdict::Holds
    } else {
        CzdVerdict::Contradiction
    };
    Ok(CzdReport {
        delta,
        root_side,
        cells_a,
        cells_b,
        cells_total: total,
        cell_volume: (root_side / (1u64 << a.depth) as f64).powi(a.dim as i32),
        hypothesis_one,
        stopped,
        predecessor_failures,
        verdict,
    })
}

/// A random pair `A subset B` meeting both hypotheses: `A` is a union of
/// random dyadic cubes and cells, thinned until `|A| <= delta |Q_r|`, and
/// `B` adds the predecessors of all stopped cubes plus random extra cells.
pub fn random_instance(dim: usize, depth: u32, delta: f64, rng: &mut impl Rng) -> Result<(CellSet, CellSet)> {
    let mut a = CellSet::empty(dim, depth)?;
    let side = 1u64 << depth;
    let blobs = rng.random_range(1..=4);
    for _ in 0..blobs {
        let level = rng.random_range(1..=depth);
        let mut index = [0; 3];
        for ik in index.iter_mut().take(dim) {
            *ik = rng.random_range(0..1u64 << level);
        }
        a.insert_cube(&DyadicCube { dim, level, index });
    }
    let scatter = rng.random_range(0..=a.total_cells() / 8);
    for _ in 0..scatter {
        let mut m = [0; 3];
        for mk in m.iter_mut().take(dim) {
            *mk = rng.random_range(0..side);
        }
        a.insert(&m);
    }
    let limit = (delta * a.total_cells() as f64).floor() as usize;
    let mut on: Vec<usize> = a.cells.iter().enumerate().filter(|c| *c.1).map(|c| c.0).collect();
    if on.len() > limit {
        on.shuffle(rng);
        for &i in &on[limit..] {
            a.cells[i] = false;
        }
    }
    let mut b = a.clone();
    for q in stopped_cubes(&a, delta) {
        if let Some(p) = q.parent() {
            b.insert_cube(&p);
        }
    }
    let extra = rng.random_range(0..=b.total_cells() / 10);
    for _ in 0..extra {
        let mut m = [0; 3];
        for mk in m.iter_mut().take(dim) {
            *mk = rng.random_range(0..side);
        }
        b.insert(&m);
    }
    Ok((a, b))
}
