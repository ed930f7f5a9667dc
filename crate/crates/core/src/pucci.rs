//! Pucci extremal operators, the model nonlinearities, and sampled checks of
//! the structure conditions.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{norm, Field};
use crate::linalg::SymMatrix;
use crate::params::StructureParams;
use crate::report::VerificationReport;

/// `M+(M) = sup { -tr(AM) : lambda I <= A <= Lambda I }`.
pub fn pucci_plus(m: &SymMatrix, lambda: f64, big_lambda: f64) -> f64 {
    m.eigenvalues().iter().map(|&e| if e > 0.0 { -lambda * e } else { -big_lambda * e }).sum()
}

/// `M-(M) = -M+(-M)`.
pub fn pucci_minus(m: &SymMatrix, lambda: f64, big_lambda: f64) -> f64 {
    -pucci_plus(&(-*m), lambda, big_lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Core {
    PucciPlus,
    PucciMinus,
}

impl Core {
    pub fn eval(self, m: &SymMatrix, lambda: f64, big_lambda: f64) -> f64 {
        match self {
            Core::PucciPlus => pucci_plus(m, lambda, big_lambda),
            Core::PucciMinus => pucci_minus(m, lambda, big_lambda),
        }
    }
}

type DiffusionFn = dyn Fn(&[f64]) -> SymMatrix + Send + Sync;
type ProfileFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type HamiltonianFn = dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync;

/// `-tr(A(p) X) + H(x, u, p)`, evaluated after division by the ellipticity
/// profile `lambda(p)` so that the normalized operator is uniformly elliptic.
#[derive(Clone)]
pub struct QuasiLinear {
    pub label: String,
    pub diffusion: Arc<DiffusionFn>,
    pub lambda_profile: Arc<ProfileFn>,
    pub hamiltonian: Arc<HamiltonianFn>,
}

impl fmt::Debug for QuasiLinear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuasiLinear").field("label", &self.label).finish_non_exhaustive()
    }
}

impl QuasiLinear {
    /// m-Laplacian diffusion `|p|^(m-2) (I + (m-2) p^ p^T)` with
    /// `lambda(p) = |p|^(m-2)` and the given first-order term.
    pub fn m_laplace(m: f64, hamiltonian: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: format!("{m}-laplace"),
            diffusion: Arc::new(move |p: &[f64]| {
                let r = norm(p);
                let n = p.len();
                let mut a = SymMatrix::identity(n);
                if r > 0.0 {
                    let hat: Vec<f64> = p.iter().map(|v| v / r).collect();
                    a = a + SymMatrix::outer(&hat, m - 2.0);
                }
                a.scale(r.powf(m - 2.0))
            }),
            lambda_profile: Arc::new(move |p: &[f64]| norm(p).powf(m - 2.0)),
            hamiltonian: Arc::new(hamiltonian),
        }
    }
}

#[derive(Debug, Clone)]
pub enum OperatorKind {
    PucciPlus,
    PucciMinus,
    /// `-lambda tr X`.
    Laplace,
    /// `-|p|^(m-2) (tr X + (m-2) X p^.p^)`.
    MLaplace {
        m: f64,
    },
    /// `|p|^alpha core(X) + b(x).p |p|^alpha + c u |u|^alpha + f0(x)`, where
    /// `u |u|^alpha` is read as `sign(u) |u|^(1 + alpha)` so it vanishes at 0.
    HomogFamily {
        alpha: f64,
        core: Core,
        b: Vec<Field>,
        c: f64,
        f0: Field,
    },
    QuasiLinear(QuasiLinear),
}

impl OperatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            OperatorKind::PucciPlus => "pucci_plus",
            OperatorKind::PucciMinus => "pucci_minus",
            OperatorKind::Laplace => "laplace",
            OperatorKind::MLaplace { .. } => "m_laplace",
            OperatorKind::HomogFamily { .. } => "homog_family",
            OperatorKind::QuasiLinear(_) => "quasi_linear",
        }
    }
}

/// A nonlinearity `F(x, u, p, X) = kind(x, u, p, X) + source(x)` together
/// with the structure data it is claimed to satisfy.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub params: StructureParams,
    pub source: Field,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, params: StructureParams) -> Result<Self> {
        match &kind {
            OperatorKind::MLaplace { m } if !(*m > 1.0) => {
                return Err(Error::InvalidArgument(format!("m-Laplace exponent must exceed 1, got {m}")))
            }
            OperatorKind::HomogFamily { alpha, c, .. } => {
                if !(*alpha > -1.0) {
                    return Err(Error::InvalidArgument(format!("homogeneity exponent must exceed -1, got {alpha}")));
                }
                if !(*c >= 0.0) {
                    return Err(Error::InvalidArgument(format!("zeroth-order coefficient c must be >= 0, got {c}")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, params, source: Field::Constant(0.0) })
    }

    pub fn with_source(mut self, source: Field) -> Self {
        self.source = source;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.params.big_lambda
    }

    /// The principal part `F0(p, X)` of a homogeneous family.
    pub fn homog_principal(&self, p: &[f64], x: &SymMatrix) -> Result<f64> {
        match &self.kind {
            OperatorKind::HomogFamily { alpha, core, .. } => {
                Ok(grad_power(norm(p), *alpha)? * core.eval(x, self.lambda(), self.big_lambda()))
            }
            _ => Err(Error::InvalidArgument(format!("{} is not a homogeneous family", self.kind.name()))),
        }
    }
}

/// `|p|^alpha`, with `0^0 = 1`, `0^alpha = 0` for `alpha > 0`, and an error
/// for `alpha < 0`.
fn grad_power(r: f64, alpha: f64) -> Result<f64> {
    if r == 0.0 {
        if alpha < 0.0 {
            return Err(Error::SingularPoint { alpha });
        }
        return Ok(if alpha == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(r.powf(alpha))
}

/// Evaluates `F(x, u, p, X)`.
pub fn eval_operator(spec: &OperatorSpec, x: &[f64], u: f64, p: &[f64], hess: &SymMatrix) -> Result<f64> {
    let (lambda, big_lambda) = (spec.lambda(), spec.big_lambda());
    let principal = match &spec.kind {
        OperatorKind::PucciPlus => pucci_plus(hess, lambda, big_lambda),
        OperatorKind::PucciMinus => pucci_minus(hess, lambda, big_lambda),
        OperatorKind::Laplace => -lambda * hess.trace(),
        OperatorKind::MLaplace { m } => {
            let r = norm(p);
            if r == 0.0 {
                if *m < 2.0 {
                    return Err(Error::SingularPoint { alpha: m - 2.0 });
                }
                if *m == 2.0 {
                    -hess.trace()
                } else {
                    0.0
                }
            } else {
                let hat: Vec<f64> = p.iter().map(|v| v / r).collect();
                -r.powf(m - 2.0) * (hess.trace() + (m - 2.0) * hess.quad(&hat))
            }
        }
        OperatorKind::HomogFamily { alpha, core, b, c, f0 } => {
            let w = grad_power(norm(p), *alpha)?;
            let drift: f64 = b.iter().zip(p).map(|(bk, pk)| bk.at(x) * pk).sum();
            w * (core.eval(hess, lambda, big_lambda) + drift) + c * u.signum() * u.abs().powf(1.0 + alpha) + f0.at(x)
        }
        OperatorKind::QuasiLinear(q) => {
            let l = (q.lambda_profile)(p);
            if !(l > 0.0) {
                return Err(Error::DegeneratePoint(p.to_vec()));
            }
            let a = (q.diffusion)(p);
            let mut tr = 0.0;
            for i in 0..hess.dim() {
                for j in 0..hess.dim() {
                    tr += a.get(i, j) * hess.get(i, j);
                }
            }
            (-tr + (q.hamiltonian)(x, u, p)) / l
        }
    };
    Ok(principal + spec.source.at(x))
}

/// One point `(x, u, p, X)` of a sampled structure check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub u: f64,
    pub p: Vec<f64>,
    pub hess: SymMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `X >= 0, |p| >= M_F, F >= 0  =>  -lambda tr X + sigma|p| + gamma u + f >= 0`.
    StrictEllipticity,
    /// `|p| >= M_F, F >= 0  =>  M+(X) + sigma|p| + gamma u + f >= 0`.
    Super,
    /// `|p| >= M_F, F <= 0  =>  M-(X) - sigma|p| + gamma u - f <= 0`.
    Sub,
    /// `Super` with an extra `+ sigma2 |p|^2`.
    SuperQuadratic,
    /// `Sub` with an extra `- sigma2 |p|^2`.
    SubQuadratic,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::StrictEllipticity => "strict_ellipticity",
            Condition::Super => "super",
            Condition::Sub => "sub",
            Condition::SuperQuadratic => "super_quadratic",
            Condition::SubQuadratic => "sub_quadratic",
        }
    }
}

const STRUCTURE_TOL: f64 = 1e-10;

/// Margin of the conclusion side for one sample, or `None` if a hypothesis
/// fails (or the operator is singular there). Margins are scaled by
/// `1 + sum of |terms|` so the tolerance is relative.
fn structure_margin(spec: &OperatorSpec, condition: Condition, s: &Sample) -> Option<f64> {
    let prm = &spec.params;
    let r = norm(&s.p);
    if r < prm.m_f {
        return None;
    }
    if condition == Condition::StrictEllipticity && s.hess.min_eigenvalue() < 0.0 {
        return None;
    }
    let f_val = eval_operator(spec, &s.x, s.u, &s.p, &s.hess).ok()?;
    let wants_super = !matches!(condition, Condition::Sub | Condition::SubQuadratic);
    if (wants_super && f_val < 0.0) || (!wants_super && f_val > 0.0) {
        return None;
    }
    let (lam, big) = (prm.lambda, prm.big_lambda);
    let sig = prm.sigma.at(&s.x) * r;
    let quad = prm.sigma2 * r * r;
    let zeroth = prm.gamma * s.u;
    let f = prm.f.at(&s.x);
    let terms: [f64; 5] = match condition {
        Condition::StrictEllipticity => [-lam * s.hess.trace(), sig, zeroth, f, 0.0],
        Condition::Super => [pucci_plus(&s.hess, lam, big), sig, zeroth, f, 0.0],
        Condition::SuperQuadratic => [pucci_plus(&s.hess, lam, big), sig, zeroth, f, quad],
        Condition::Sub => [-pucci_minus(&s.hess, lam, big), sig, -zeroth, f, 0.0],
        Condition::SubQuadratic => [-pucci_minus(&s.hess, lam, big), sig, -zeroth, f, quad],
    };
    let scale = 1.0 + terms.iter().map(|t| t.abs()).sum::<f64>();
    Some(terms.iter().sum::<f64>() / scale)
}

/// Checks a structure condition on every sample whose hypotheses hold.
/// Samples failing a hypothesis, or at which `F` is undefined, are skipped.
pub fn check_structure(spec: &OperatorSpec, condition: Condition, samples: &[Sample]) -> VerificationReport {
    let name = format!("structure/{}/{}", spec.kind.name(), condition.name());
    samples
        .par_iter()
        .enumerate()
        .fold(
            || VerificationReport::new(name.clone(), STRUCTURE_TOL),
            |mut rep, (i, s)| {
                match structure_margin(spec, condition, s) {
                    Some(m) => rep.record(i, m, || format!("x = {:?}, p = {:?}, relative margin {m:e}", s.x, s.p)),
                    None => rep.skip(),
                }
                rep
            },
        )
        .reduce(|| VerificationReport::new(name.clone(), STRUCTURE_TOL), VerificationReport::merge)
        .sorted()
}

/// `(p, M, N)` for the increment bounds of a homogeneous principal part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSample {
    pub p: Vec<f64>,
    pub m: SymMatrix,
    pub n: SymMatrix,
}

/// Checks `|p|^a M-(N) <= F0(p, M+N) - F0(p, M) <= |p|^a M+(N)` on each sample.
pub fn check_h2(spec: &OperatorSpec, samples: &[IncrementSample]) -> Result<VerificationReport> {
    let alpha = match spec.kind {
        OperatorKind::HomogFamily { alpha, .. } => alpha,
        _ => return Err(Error::InvalidArgument(format!("{} is not a homogeneous family", spec.kind.name()))),
    };
    let (lam, big) = (spec.lambda(), spec.big_lambda());
    let mut rep = VerificationReport::new("increment_bounds", STRUCTURE_TOL);
    for (i, s) in samples.iter().enumerate() {
        let w = match grad_power(norm(&s.p), alpha) {
            Ok(w) => w,
            Err(_) => {
                rep.skip();
                continue;
            }
        };
        let diff = spec.homog_principal(&s.p, &(s.m + s.n))? - spec.homog_principal(&s.p, &s.m)?;
        let lo = w * pucci_minus(&s.n, lam, big);
        let hi = w * pucci_plus(&s.n, lam, big);
        let scale = 1.0 + w * (s.m.norm() + s.n.norm()) * big;
        let margin = (diff - lo).min(hi - diff) / scale;
        rep.record(i, margin, || format!("p = {:?}: {lo:e} <= {diff:e} <= {hi:e} fails", s.p));
    }
    Ok(rep)
}
