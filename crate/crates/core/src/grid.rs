//! Uniform Cartesian grids over cubes and balls in dimension 1 to 3.
//!
//! Coordinates are carried as `Point = [f64; 3]`; only the first `dim`
//! entries are meaningful and the rest stay zero. Grid values are stored
//! row-major with the first axis slowest.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];
pub type MultiIndex = [usize; 3];

pub const MAX_DIM: usize = 3;

fn check_dim(n: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dimension must be 1, 2 or 3, got {n}")))
    }
}

/// Copies a coordinate slice into a padded point.
pub fn point_from(coords: &[f64]) -> Result<Point> {
    check_dim(coords.len())?;
    let mut p = [0.0; 3];
    p[..coords.len()].copy_from_slice(coords);
    Ok(p)
}

pub fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn sup_norm(p: &[f64]) -> f64 {
    p.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Ball {
        radius: f64,
    },
    /// Open axis-aligned box of the given side centered at the domain center.
    Cube {
        side: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    center: Point,
    dim: usize,
    kind: DomainKind,
}

impl Domain {
    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDomain(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { center: point_from(center)?, dim: center.len(), kind: DomainKind::Ball { radius } })
    }

    /// The cube `Q_side(center)`.
    pub fn cube(center: &[f64], side: f64) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidDomain(format!("side must be positive, got {side}")));
        }
        Ok(Self { center: point_from(center)?, dim: center.len(), kind: DomainKind::Cube { side } })
    }

    /// Cube of side `side` centered at the origin.
    pub fn centered_cube(dim: usize, side: f64) -> Result<Self> {
        Self::cube(&vec![0.0; dim], side)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Side of the smallest axis-aligned cube containing the domain.
    pub fn bounding_side(&self) -> f64 {
        match self.kind {
            DomainKind::Ball { radius } => 2.0 * radius,
            DomainKind::Cube { side } => side,
        }
    }

    /// Membership in the closure, with a relative slack of 1e-12.
    pub fn contains(&self, x: &[f64]) -> bool {
        let slack = 1e-12 * self.bounding_side();
        match self.kind {
            DomainKind::Ball { radius } => self.distance_to_center(x) <= radius + slack,
            DomainKind::Cube { side } => (0..self.dim).all(|k| (x[k] - self.center[k]).abs() <= side / 2.0 + slack),
        }
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        let slack = 1e-12 * self.bounding_side();
        match self.kind {
            DomainKind::Ball { radius } => self.distance_to_center(x) < radius - slack,
            DomainKind::Cube { side } => (0..self.dim).all(|k| (x[k] - self.center[k]).abs() < side / 2.0 - slack),
        }
    }

    pub fn distance_to_center(&self, x: &[f64]) -> f64 {
        (0..self.dim).map(|k| (x[k] - self.center[k]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn measure(&self) -> f64 {
        match self.kind {
            DomainKind::Ball { radius } => unit_ball_volume(self.dim) * radius.powi(self.dim as i32),
            DomainKind::Cube { side } => side.powi(self.dim as i32),
        }
    }
}

/// Volume of the unit ball, `pi^(n/2) / Gamma(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => panic!("unit_ball_volume: unsupported dimension {n}"),
    }
}

/// Corner-aligned uniform grid with an odd number of points per axis, so
/// that the cube center is a grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    center: Point,
    side: f64,
    points: usize,
}

impl Grid {
    pub fn new(center: &[f64], side: f64, points: usize) -> Result<Self> {
        check_dim(center.len())?;
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidGrid(format!("side must be positive, got {side}")));
        }
        if points < 3 || points.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("points per axis must be odd and >= 3, got {points}")));
        }
        Ok(Self { dim: center.len(), center: point_from(center)?, side, points })
    }

    /// Grid over the bounding cube of `domain`.
    pub fn covering(domain: &Domain, points: usize) -> Result<Self> {
        Self::new(domain.center(), domain.bounding_side(), points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[f64] {
        &self.center[..self.dim]
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.side / (self.points - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bounding_cube(&self) -> Domain {
        Domain::cube(self.center(), self.side).expect("grid side is positive")
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.side / 2.0
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i == self.points - 1 {
            self.center[axis] + self.side / 2.0
        } else {
            self.lower(axis) + i as f64 * self.spacing()
        }
    }

    pub fn strides(&self) -> MultiIndex {
        let n = self.points;
        match self.dim {
            1 => [1, 0, 0],
            2 => [n, 1, 0],
            _ => [n * n, n, 1],
        }
    }

    pub fn flat(&self, m: &MultiIndex) -> usize {
        let s = self.strides();
        (0..self.dim).map(|k| m[k] * s[k]).sum()
    }

    pub fn multi(&self, mut flat: usize) -> MultiIndex {
        let s = self.strides();
        let mut m = [0; 3];
        for k in 0..self.dim {
            m[k] = flat / s[k];
            flat %= s[k];
        }
        m
    }

    pub fn point_at(&self, m: &MultiIndex) -> Point {
        let mut p = [0.0; 3];
        for k in 0..self.dim {
            p[k] = self.axis_coord(k, m[k]);
        }
        p
    }

    pub fn point(&self, flat: usize) -> Point {
        self.point_at(&self.multi(flat))
    }

    /// True when the node has a full 3^n neighborhood inside the grid.
    pub fn is_interior(&self, m: &MultiIndex) -> bool {
        (0..self.dim).all(|k| m[k] >= 1 && m[k] + 1 < self.points)
    }

    /// Offset a multi-index by a signed step, if the result stays on the grid.
    pub fn offset(&self, m: &MultiIndex, step: &[i64; 3]) -> Option<MultiIndex> {
        let mut out = *m;
        for k in 0..self.dim {
            let v = m[k] as i64 + step[k];
            if v < 0 || v >= self.points as i64 {
                return None;
            }
            out[k] = v as usize;
        }
        Some(out)
    }

    /// Nearest node, if `x` lies within half a cell of the grid.
    pub fn nearest(&self, x: &[f64]) -> Option<MultiIndex> {
        let h = self.spacing();
        let mut m = [0; 3];
        for k in 0..self.dim {
            let t = ((x[k] - self.lower(k)) / h).round();
            if t < 0.0 || t > (self.points - 1) as f64 {
                return None;
            }
            m[k] = t as usize;
        }
        Some(m)
    }

    /// Flat indices of the nodes lying in the closure of `domain`.
    pub fn nodes_in(&self, domain: &Domain) -> Vec<usize> {
        (0..self.len()).filter(|&i| domain.contains(&self.point(i))).collect()
    }

    /// True if the closure of `domain` lies inside the bounding cube.
    pub fn covers(&self, domain: &Domain) -> bool {
        let slack = 1e-9 * self.side;
        let half = domain.bounding_side() / 2.0;
        (0..self.dim).all(|k| {
            domain.center()[k] - half >= self.lower(k) - slack
                && domain.center()[k] + half <= self.lower(k) + self.side + slack
        })
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        self == other
    }
}

/// Scalar field sampled at the nodes of a grid. Values are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    name: String,
}

impl GridFunction {
    pub fn from_values(grid: Grid, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { name, index });
        }
        Ok(Self { grid, values, name })
    }

    pub fn from_fn(grid: &Grid, name: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let dim = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..dim])).collect();
        Self::from_values(grid.clone(), name, values)
    }

    pub fn constant(grid: &Grid, name: impl Into<String>, c: f64) -> Result<Self> {
        Self::from_values(grid.clone(), name, vec![c; grid.len()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn at(&self, m: &MultiIndex) -> f64 {
        self.values[self.grid.flat(m)]
    }

    pub fn map(&self, name: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(self.grid.clone(), name, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Multilinear interpolation; `None` outside the bounding cube.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let g = &self.grid;
        let h = g.spacing();
        let slack = 1e-9;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..g.dim() {
            let t = (x[k] - g.lower(k)) / h;
            let last = (g.points_per_axis() - 1) as f64;
            if t < -slack || t > last + slack {
                return None;
            }
            let t = t.clamp(0.0, last);
            let i = (t.floor() as usize).min(g.points_per_axis() - 2);
            base[k] = i;
            frac[k] = t - i as f64;
        }
        let dim = g.dim();
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut m = base;
            for k in 0..dim {
                if corner >> k & 1 == 1 {
                    m[k] += 1;
                    w *= frac[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * self.at(&m);
            }
        }
        Some(acc)
    }

    /// Interpolated value with the query clamped into the bounding cube.
    pub fn interpolate_clamped(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let mut y = [0.0; 3];
        for k in 0..g.dim() {
            y[k] = x[k].clamp(g.lower(k), g.lower(k) + g.side());
        }
        self.interpolate(&y[..g.dim()]).expect("clamped point lies in the grid")
    }

    /// Text serialization: a header line `n N c_1 .. c_n side`, an optional
    /// `# name` line, then one value per line in row-major order.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::with_capacity(24 * (self.values.len() + 2));
        let _ = write!(s, "{} {}", g.dim(), g.points_per_axis());
        for c in g.center() {
            let _ = write!(s, " {c:.17e}");
        }
        let _ = writeln!(s, " {:.17e}", g.side());
        let _ = writeln!(s, "# {}", self.name);
        for v in &self.values {
            let _ = writeln!(s, "{v:.17e}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty grid file".into() })?;
        let parse_err = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(parse_err(hl, "header must be `n N c_1 .. c_n side`".into()));
        }
        let n: usize = fields[0].parse().map_err(|e| parse_err(hl, format!("dimension: {e}")))?;
        check_dim(n).map_err(|e| parse_err(hl, e.to_string()))?;
        if fields.len() != 3 + n {
            return Err(parse_err(hl, format!("expected {} header fields, found {}", 3 + n, fields.len())));
        }
        let points: usize = fields[1].parse().map_err(|e| parse_err(hl, format!("points: {e}")))?;
        let nums: Vec<f64> = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(hl, format!("{f}: {e}"))))
            .collect::<Result<_>>()?;
        let grid = Grid::new(&nums[..n], nums[n], points).map_err(|e| parse_err(hl, e.to_string()))?;
        let mut name = String::new();
        let mut values = Vec::with_capacity(grid.len());
        for (ln, line) in lines {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                name = rest.trim().to_string();
                continue;
            }
            values.push(line.parse::<f64>().map_err(|e| parse_err(ln, format!("{line}: {e}")))?);
        }
        Self::from_values(grid, name, values)
    }
}

/// A scalar coefficient: either a constant or a sampled grid function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Constant(f64),
    Grid(GridFunction),
}

impl Default for Field {
    fn default() -> Self {
        Field::Constant(0.0)
    }
}

impl Field {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            Field::Constant(c) => *c,
            Field::Grid(g) => g.interpolate_clamped(x),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Field::Constant(c) => Some(*c),
            Field::Grid(_) => None,
        }
    }

    pub fn sample_on(&self, grid: &Grid, name: &str) -> Result<GridFunction> {
        let dim = grid.dim();
        GridFunction::from_fn(grid, name, |x| self.at(&x[..dim]))
    }

    pub fn min_value(&self) -> f64 {
        match self {
            Field::Constant(c) => *c,
            Field::Grid(g) => g.values().iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    /// Pointwise transform `x -> scale * self(offset + factor * x)`.
    pub fn compose_affine(&self, scale: f64, offset: &[f64], factor: f64, target: &Grid, name: &str) -> Result<Field> {
        match self {
            Field::Constant(c) => Ok(Field::Constant(scale * c)),
            Field::Grid(g) => {
                let dim = target.dim();
                let out = GridFunction::from_fn(target, name, |x| {
                    let mut y = [0.0; 3];
                    for k in 0..dim {
                        y[k] = offset[k] + factor * x[k];
                    }
                    scale * g.interpolate_clamped(&y[..dim])
                });
                out.map(Field::Grid)
            }
        }
    }
}
