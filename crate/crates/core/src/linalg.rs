//! Small symmetric matrices (n <= 3) with closed-form spectral decomposition.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real symmetric n x n matrix stored as its packed upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    packed: [f64; 6],
}

/// Eigenvalues (ascending) and orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen {
    pub n: usize,
    pub values: [f64; 3],
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: [[f64; 3]; 3],
}

impl Eigen {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.n]
    }
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=3).contains(&n), "SymMatrix dimension must be 1..=3, got {n}");
        Self { n, packed: [0.0; 6] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&[1.0; 3][..n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from a full row-major matrix, symmetrizing `(A + A^T)/2`.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            assert_eq!(rows[i].len(), n, "row {i} has wrong length");
            for j in i..n {
                m.set(i, j, 0.5 * (rows[i][j] + rows[j][i]));
            }
        }
        m
    }

    /// Outer product `s * v v^T`.
    pub fn outer(v: &[f64], s: f64) -> Self {
        let mut m = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in i..v.len() {
                m.set(i, j, s * v[i] * v[j]);
            }
        }
        m
    }

    /// `sum_k values[k] v_k v_k^T`.
    pub fn from_eigen(n: usize, values: &[f64], vectors: &[[f64; 3]]) -> Self {
        let mut m = Self::zeros(n);
        for (k, &ev) in values.iter().enumerate() {
            m = m + Self::outer(&vectors[k][..n], ev);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed[..self.n * (self.n + 1) / 2]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.packed[index(self.n, i, j)] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn det(&self) -> f64 {
        let a = |i, j| self.get(i, j);
        match self.n {
            1 => a(0, 0),
            2 => a(0, 0) * a(1, 1) - a(0, 1) * a(0, 1),
            _ => {
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(1, 2)) - a(0, 1) * (a(0, 1) * a(2, 2) - a(1, 2) * a(0, 2))
                    + a(0, 2) * (a(0, 1) * a(1, 2) - a(1, 1) * a(0, 2))
            }
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    pub fn mul_vec(&self, v: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|j| self.get(i, j) * v[j]).sum();
        }
        out
    }

    /// `v^T M v`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        let mv = self.mul_vec(v);
        (0..self.n).map(|i| mv[i] * v[i]).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        m.packed.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.packed().iter().all(|v| v.is_finite())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().values().to_vec()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        let e = self.eigen();
        e.values[e.n - 1]
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Spectral decomposition in closed form.
    pub fn eigen(&self) -> Eigen {
        match self.n {
            1 => Eigen {
                n: 1,
                values: [self.get(0, 0), 0.0, 0.0],
                vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            },
            2 => {
                let (l, v) = eig2(self.get(0, 0), self.get(0, 1), self.get(1, 1));
                Eigen {
                    n: 2,
                    values: [l[0], l[1], 0.0],
                    vectors: [[v[0][0], v[0][1], 0.0], [v[1][0], v[1][1], 0.0], [0.0, 0.0, 1.0]],
                }
            }
            _ => eig3(self),
        }
    }
}

#[inline]
fn index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Eigenpairs of `[[a, b], [b, d]]` via a single Jacobi rotation, ascending.
fn eig2(a: f64, b: f64, d: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    if b == 0.0 {
        return if a <= d { ([a, d], [[1.0, 0.0], [0.0, 1.0]]) } else { ([d, a], [[0.0, 1.0], [1.0, 0.0]]) };
    }
    let theta = 0.5 * (2.0 * b).atan2(a - d);
    let (s, c) = theta.sin_cos();
    // (c, s) diagonalizes to the larger eigenvalue for this choice of theta.
    let big = a * c * c + 2.0 * b * s * c + d * s * s;
    let small = a * s * s - 2.0 * b * s * c + d * c * c;
    ([small, big], [[-s, c], [c, s]])
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 0.0 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vectors completing `w` to an orthonormal basis.
fn complement(w: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let u = if w[0].abs() > w[1].abs() {
        let inv = 1.0 / (w[0] * w[0] + w[2] * w[2]).sqrt();
        [-w[2] * inv, 0.0, w[0] * inv]
    } else {
        let inv = 1.0 / (w[1] * w[1] + w[2] * w[2]).sqrt();
        [0.0, w[2] * inv, -w[1] * inv]
    };
    (u, cross(w, u))
}

/// Trigonometric closed form for the most separated eigenvalue, its vector
/// from row cross products, then a 2x2 rotation on the complement. All work
/// happens on `B = (M - qI)/p` so clustered spectra keep full accuracy.
fn eig3(m: &SymMatrix) -> Eigen {
    let q = m.trace() / 3.0;
    let mut shifted = *m;
    for i in 0..3 {
        shifted.set(i, i, m.get(i, i) - q);
    }
    let p = (shifted.norm().powi(2) / 6.0).sqrt();
    if !(p > 0.0 && p.is_finite()) {
        return Eigen { n: 3, values: [q; 3], vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
    }
    let b = shifted.scale(1.0 / p);
    let half_det = (b.det() / 2.0).clamp(-1.0, 1.0);
    let phi = half_det.acos() / 3.0;
    let target = if half_det >= 0.0 { 2.0 * phi.cos() } else { 2.0 * (phi + 2.0 * std::f64::consts::PI / 3.0).cos() };

    let rows: Vec<[f64; 3]> = (0..3)
        .map(|i| {
            let mut r = [b.get(i, 0), b.get(i, 1), b.get(i, 2)];
            r[i] -= target;
            r
        })
        .collect();
    let candidates = [cross(rows[0], rows[1]), cross(rows[0], rows[2]), cross(rows[1], rows[2])];
    let best = candidates.iter().copied().max_by(|x, y| dot(x, x).total_cmp(&dot(y, y))).expect("three candidates");
    let w = normalize(best).unwrap_or([1.0, 0.0, 0.0]);
    let (u, v) = complement(w);
    let (l2, v2) = eig2(b.quad(&u), dot(&b.mul_vec(&u), &v), b.quad(&v));
    let vec_of = |c: [f64; 2]| {
        normalize([c[0] * u[0] + c[1] * v[0], c[0] * u[1] + c[1] * v[1], c[0] * u[2] + c[1] * v[2]])
            .expect("unit combination")
    };
    let mut pairs = [(b.quad(&w), w), (l2[0], vec_of(v2[0])), (l2[1], vec_of(v2[1]))];
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let lift = |mu: f64| q + p * mu;
    Eigen {
        n: 3,
        values: [lift(pairs[0].0), lift(pairs[1].0), lift(pairs[2].0)],
        vectors: [pairs[0].1, pairs[1].1, pairs[2].1],
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: SymMatrix) -> SymMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch in SymMatrix addition");
        let mut out = self;
        for k in 0..6 {
            out.packed[k] += rhs.packed[k];
        }
        out
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        self + (-rhs)
    }
}

impl Neg for SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scale(-1.0)
    }
}

impl Mul<SymMatrix> for f64 {
    type Output = SymMatrix;
    fn mul(self, rhs: SymMatrix) -> SymMatrix {
        rhs.scale(self)
    }
}

/// Sorted eigenvalues.
pub fn eig_sym(m: &SymMatrix) -> Vec<f64> {
    m.eigenvalues()
}

fn check_psd(m: &SymMatrix) -> Result<()> {
    let e = m.min_eigenvalue();
    if e < -1e-12 * m.norm().max(1.0) {
        Err(Error::NotPsd(e))
    } else {
        Ok(())
    }
}

/// Parallel sum `A □ B`, the quadratic form `xi -> inf_z A(xi - z).(xi - z) + B z.z`.
///
/// The infimum is solved in the eigenbasis of `A + B`: the optimal `z` is
/// `(A + B)^+ A xi`, with eigen-directions of `A + B` below a relative
/// threshold dropped, and the resulting form is polarized back into a matrix.
pub fn parallel_sum(a: &SymMatrix, b: &SymMatrix) -> Result<SymMatrix> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.dim() });
    }
    check_psd(a)?;
    check_psd(b)?;
    let s = (*a + *b).eigen();
    let cutoff = 1e-12 * s.values[n - 1].abs().max(f64::MIN_POSITIVE);
    let minimizer = |xi: &[f64]| -> [f64; 3] {
        let axi = a.mul_vec(xi);
        let mut z = [0.0; 3];
        for k in 0..n {
            let mu = s.values[k];
            if mu > cutoff {
                let c = dot(&s.vectors[k][..n], &axi[..n]) / mu;
                for (zi, vi) in z.iter_mut().zip(&s.vectors[k]).take(n) {
                    *zi += c * vi;
                }
            }
        }
        z
    };
    let form = |xi: &[f64]| -> f64 {
        let z = minimizer(xi);
        let mut r = [0.0; 3];
        for i in 0..n {
            r[i] = xi[i] - z[i];
        }
        a.quad(&r[..n]) + b.quad(&z[..n])
    };
    let mut out = SymMatrix::zeros(n);
    let mut e = [[0.0; 3]; 3];
    for (i, row) in e.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    for i in 0..n {
        out.set(i, i, form(&e[i][..n]));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = [0.0; 3];
            for k in 0..n {
                s[k] = e[i][k] + e[j][k];
            }
            let off = 0.5 * (form(&s[..n]) - out.get(i, i) - out.get(j, j));
            out.set(i, j, off);
        }
    }
    Ok(out)
}
