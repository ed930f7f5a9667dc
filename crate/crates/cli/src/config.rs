//! Scenario files are TOML with one `[[scenario]]` table per scenario:
//!
//! ```toml
//! output_dir = "out"            # optional, relative to the config file
//!
//! [[scenario]]
//! name = "bowl"
//! seed = 7
//! grid = { dim = 2, points = [65, 129], side = 2.25 }
//! domain = { shape = "ball", radius = 1.0 }
//! data = { profile = "quadratic_bowl", amplitude = 2.0 }
//! params = { lambda = 1.0, Lambda = 1.0, f = 8.0 }
//! operator = { kind = "pucci_plus", source = 1.0 }   # optional: solve first
//!
//! [[scenario.verify]]
//! kind = "abp"
//! tolerance = 0.0
//! ```
//!
//! Parsing reports the line and column of a syntax or type error; semantic
//! checks report the dotted key of the offending value.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use abplab::grid::{Domain, Field, Grid};
use abplab::pucci::{Core, OperatorKind, OperatorSpec};
use abplab::StructureParams;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::profiles::Profile;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<String>,
    #[serde(default)]
    scenario: Vec<RawScenario>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    seed: u64,
    grid: RawGrid,
    domain: RawDomain,
    data: Profile,
    #[serde(default)]
    params: RawParams,
    operator: Option<RawOperator>,
    #[serde(default)]
    verify: Vec<RawVerifier>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Points {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: usize,
    points: Points,
    side: f64,
    center: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    shape: String,
    radius: Option<f64>,
    side: Option<f64>,
    center: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default = "one")]
    lambda: f64,
    #[serde(default = "one", rename = "Lambda")]
    big_lambda: f64,
    #[serde(default)]
    m_f: f64,
    #[serde(default)]
    gamma: f64,
    #[serde(default)]
    sigma2: f64,
    #[serde(default)]
    sigma: f64,
    #[serde(default)]
    f: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        Self { lambda: 1.0, big_lambda: 1.0, m_f: 0.0, gamma: 0.0, sigma2: 0.0, sigma: 0.0, f: 0.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    kind: String,
    /// Exponent for `homog`, power for `m_laplace`.
    alpha: Option<f64>,
    m: Option<f64>,
    core: Option<String>,
    drift: Option<Vec<f64>>,
    c: Option<f64>,
    f0: Option<f64>,
    source: Option<f64>,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_max_iter")]
    max_iter: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerifier {
    kind: String,
    #[serde(default)]
    tolerance: f64,
    /// Harnack constant to test against; estimated from the data if absent.
    c: Option<f64>,
    steps: Option<usize>,
    p0: Option<f64>,
    p: Option<f64>,
    alpha: Option<f64>,
    expected: Option<f64>,
    levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub output_dir: Option<PathBuf>,
    pub scenarios: Vec<Scenario>,
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub side: f64,
    /// Points per axis, one run per entry.
    pub sizes: Vec<usize>,
}

impl GridSpec {
    pub fn grid(&self, points: usize) -> CliResult<Grid> {
        Ok(Grid::new(&self.center, self.side, points)?)
    }
}

#[derive(Debug, Clone)]
pub struct SolveSpec {
    pub operator: OperatorSpec,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verifier {
    /// `margin >= -tolerance`.
    Abp {
        tolerance: f64,
    },
    /// Pointwise large-gradient condition at every checked node.
    Pointwise,
    /// Gradient image of the convex envelope covers the predicted ball
    /// up to `tolerance` uncovered fraction.
    Envelope {
        tolerance: f64,
    },
    Harnack {
        c: Option<f64>,
        steps: usize,
        p0: f64,
        p: f64,
    },
    LevelSet {
        levels: Vec<f64>,
        expected: Option<f64>,
        tolerance: f64,
    },
    Holder {
        alpha: f64,
        expected: Option<f64>,
        tolerance: f64,
    },
}

impl Verifier {
    pub fn name(&self) -> &'static str {
        match self {
            Verifier::Abp { .. } => "abp",
            Verifier::Pointwise => "pointwise",
            Verifier::Envelope { .. } => "envelope",
            Verifier::Harnack { .. } => "harnack",
            Verifier::LevelSet { .. } => "level_set",
            Verifier::Holder { .. } => "holder",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub grid: GridSpec,
    pub domain: Domain,
    pub data: Profile,
    pub params: StructureParams,
    pub solve: Option<SolveSpec>,
    pub verifiers: Vec<Verifier>,
    /// Directory that relative data paths are resolved against.
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> CliResult<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Parse { file: path.display().to_string(), message: e.to_string() })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, &path.display().to_string(), &base)
}

/// Parses and validates config text. `file` names the source in messages.
pub fn parse(text: &str, file: &str, base_dir: &Path) -> CliResult<Config> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| CliError::Parse { file: file.to_string(), message: e.to_string().trim_end().to_string() })?;
    let mut names = BTreeSet::new();
    let mut scenarios = Vec::with_capacity(raw.scenario.len());
    for (i, s) in raw.scenario.into_iter().enumerate() {
        if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(CliError::invalid(format!("scenario[{i}].name"), "names use letters, digits, '_' and '-'"));
        }
        if !names.insert(s.name.clone()) {
            return Err(CliError::invalid(format!("scenario.{}.name", s.name), "duplicate scenario name"));
        }
        scenarios.push(validate(s, base_dir)?);
    }
    let output_dir = raw.output_dir.map(|d| base_dir.join(d));
    Ok(Config { output_dir, scenarios })
}

fn validate(s: RawScenario, base_dir: &Path) -> CliResult<Scenario> {
    let key = |k: &str| format!("scenario.{}.{k}", s.name);
    let n = s.grid.dim;
    if !(1..=3).contains(&n) {
        return Err(CliError::invalid(key("grid.dim"), format!("dimension must be 1, 2 or 3, got {n}")));
    }
    let center = s.grid.center.clone().unwrap_or_else(|| vec![0.0; n]);
    if center.len() != n {
        return Err(CliError::invalid(key("grid.center"), format!("expected {n} coordinates")));
    }
    let sizes = match &s.grid.points {
        Points::One(p) => vec![*p],
        Points::Many(ps) => ps.clone(),
    };
    if sizes.is_empty() {
        return Err(CliError::invalid(key("grid.points"), "at least one grid size is needed"));
    }
    let grid = GridSpec { center, side: s.grid.side, sizes };
    for &p in &grid.sizes {
        grid.grid(p).map_err(|e| CliError::invalid(key("grid"), e.to_string()))?;
    }

    let dcenter = s.domain.center.clone().unwrap_or_else(|| vec![0.0; n]);
    if dcenter.len() != n {
        return Err(CliError::invalid(key("domain.center"), format!("expected {n} coordinates")));
    }
    let domain = match s.domain.shape.as_str() {
        "ball" => {
            let r = s.domain.radius.ok_or_else(|| CliError::invalid(key("domain.radius"), "a ball needs a radius"))?;
            Domain::ball(&dcenter, r)
        }
        "cube" => {
            let side = s.domain.side.ok_or_else(|| CliError::invalid(key("domain.side"), "a cube needs a side"))?;
            Domain::cube(&dcenter, side)
        }
        other => {
            return Err(CliError::invalid(
                key("domain.shape"),
                format!("unknown shape '{other}', expected ball or cube"),
            ))
        }
    }
    .map_err(|e| CliError::invalid(key("domain"), e.to_string()))?;

    s.data.validate(n, base_dir).map_err(|m| CliError::invalid(key("data"), m))?;

    let p = &s.params;
    let params = StructureParams::new(p.lambda, p.big_lambda)
        .and_then(|q| q.with_m_f(p.m_f))
        .and_then(|q| q.with_gamma(p.gamma))
        .and_then(|q| q.with_sigma2(p.sigma2))
        .and_then(|q| q.with_sigma(Field::Constant(p.sigma)))
        .and_then(|q| q.with_f(Field::Constant(p.f)))
        .map_err(|e| CliError::invalid(key("params"), e.to_string()))?;

    let solve = match &s.operator {
        None => None,
        Some(op) => Some(operator(op, n, &params, &key)?),
    };

    let mut verifiers = Vec::with_capacity(s.verify.len());
    for (i, v) in s.verify.iter().enumerate() {
        verifiers.push(verifier(v, &domain, &key(&format!("verify[{i}]")))?);
    }

    Ok(Scenario {
        name: s.name,
        seed: s.seed,
        grid,
        domain,
        data: s.data,
        params,
        solve,
        verifiers,
        base_dir: base_dir.to_path_buf(),
    })
}

fn operator(
    op: &RawOperator,
    n: usize,
    params: &StructureParams,
    key: &dyn Fn(&str) -> String,
) -> CliResult<SolveSpec> {
    let unused = |field: &str, present: bool| {
        if present {
            Err(CliError::invalid(
                key(&format!("operator.{field}")),
                format!("not used by operator kind '{}'", op.kind),
            ))
        } else {
            Ok(())
        }
    };
    let kind = match op.kind.as_str() {
        "pucci_plus" | "pucci_minus" | "laplace" => {
            unused("alpha", op.alpha.is_some())?;
            unused("m", op.m.is_some())?;
            unused("core", op.core.is_some())?;
            unused("drift", op.drift.is_some())?;
            unused("c", op.c.is_some())?;
            unused("f0", op.f0.is_some())?;
            match op.kind.as_str() {
                "pucci_plus" => OperatorKind::PucciPlus,
                "pucci_minus" => OperatorKind::PucciMinus,
                _ => OperatorKind::Laplace,
            }
        }
        "m_laplace" => {
            let m = op.m.ok_or_else(|| CliError::invalid(key("operator.m"), "m_laplace needs m"))?;
            OperatorKind::MLaplace { m }
        }
        "homog" => {
            let core = match op.core.as_deref().unwrap_or("pucci_plus") {
                "pucci_plus" => Core::PucciPlus,
                "pucci_minus" => Core::PucciMinus,
                other => return Err(CliError::invalid(key("operator.core"), format!("unknown core '{other}'"))),
            };
            let b = match &op.drift {
                None => Vec::new(),
                Some(d) if d.len() == n => d.iter().map(|&v| Field::Constant(v)).collect(),
                Some(_) => return Err(CliError::invalid(key("operator.drift"), format!("expected {n} components"))),
            };
            OperatorKind::HomogFamily {
                alpha: op.alpha.unwrap_or(0.0),
                core,
                b,
                c: op.c.unwrap_or(0.0),
                f0: Field::Constant(op.f0.unwrap_or(0.0)),
            }
        }
        other => {
            return Err(CliError::invalid(
                key("operator.kind"),
                format!(
                    "unknown operator kind '{other}', expected pucci_plus, pucci_minus, laplace, m_laplace or homog"
                ),
            ))
        }
    };
    let mut spec =
        OperatorSpec::new(kind, params.clone()).map_err(|e| CliError::invalid(key("operator"), e.to_string()))?;
    if let Some(s) = op.source {
        spec = spec.with_source(Field::Constant(s));
    }
    if !(op.tol > 0.0) {
        return Err(CliError::invalid(key("operator.tol"), "tolerance must be positive"));
    }
    Ok(SolveSpec { operator: spec, tol: op.tol, max_iter: op.max_iter })
}

fn verifier(v: &RawVerifier, domain: &Domain, key: &str) -> CliResult<Verifier> {
    let ball = matches!(domain.kind(), abplab::grid::DomainKind::Ball { .. });
    let need = |cond: bool, msg: &str| {
        if cond {
            Ok(())
        } else {
            Err(CliError::invalid(format!("{key}.kind"), msg.to_string()))
        }
    };
    if !(v.tolerance >= 0.0 && v.tolerance.is_finite()) {
        return Err(CliError::invalid(format!("{key}.tolerance"), "tolerance must be finite and >= 0"));
    }
    Ok(match v.kind.as_str() {
        "abp" => {
            need(ball, "abp needs a ball domain")?;
            Verifier::Abp { tolerance: v.tolerance }
        }
        "pointwise" => Verifier::Pointwise,
        "envelope" => {
            need(ball, "envelope needs a ball domain")?;
            Verifier::Envelope { tolerance: v.tolerance }
        }
        "harnack" => {
            need(!ball, "harnack needs a cube domain")?;
            if let Some(c) = v.c.filter(|c| !(*c > 1.0)) {
                return Err(CliError::invalid(format!("{key}.c"), format!("the constant must exceed 1, got {c}")));
            }
            Verifier::Harnack {
                c: v.c,
                steps: v.steps.unwrap_or(3),
                p0: v.p0.unwrap_or(abplab::harnack::DEFAULT_P0),
                p: v.p.unwrap_or(abplab::harnack::DEFAULT_P),
            }
        }
        "level_set" => {
            need(!ball, "level_set needs a cube domain")?;
            let levels =
                v.levels.clone().ok_or_else(|| CliError::invalid(format!("{key}.levels"), "level_set needs levels"))?;
            Verifier::LevelSet { levels, expected: v.expected, tolerance: v.tolerance }
        }
        "holder" => {
            let alpha = v.alpha.ok_or_else(|| CliError::invalid(format!("{key}.alpha"), "holder needs alpha"))?;
            Verifier::Holder { alpha, expected: v.expected, tolerance: v.tolerance }
        }
        other => {
            return Err(CliError::invalid(
                format!("{key}.kind"),
                format!("unknown verifier '{other}', expected abp, pointwise, envelope, harnack, level_set or holder"),
            ))
        }
    })
}
