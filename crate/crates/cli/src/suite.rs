//! The acceptance battery. Every criterion collects its checks instead of
//! panicking, keeps a deterministic JSON record of what it measured, and is
//! timed separately so runtime budgets can be enforced.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use abplab::abp::{abp_check, abp_constant, abp_singular_bound, abp_singular_minimizer, c_abp};
use abplab::barrier::{build_barrier, verify_barrier};
use abplab::envelope::{convex_envelope, gradient_image};
use abplab::grid::{Domain, Field, Grid, GridFunction};
use abplab::harnack::{
    czd, empirical_harnack_constant, harnack_report, holder_seminorm, level_set_decay, local_max_report, log_levels,
    osc_decay_check, random_instance, subcube, weak_harnack_report, CellSet, CzdVerdict, DyadicCube,
};
use abplab::linalg::SymMatrix;
use abplab::measure::lp_norm;
use abplab::pucci::{pucci_minus, pucci_plus, Core, OperatorKind, OperatorSpec};
use abplab::solve::{cole_hopf, rescale_params, solve, ColeHopf, ProblemSpec, Rescaling};
use abplab::StructureParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config;
use crate::error::CliResult;
use crate::output::{atomic_write, sha256_hex, to_json};
use crate::runner;
use crate::scenario::ScenarioReport;

/// Scenario files shipped with the battery.
pub const BUNDLED_CONFIGS: [(&str, &str); 2] = [
    ("suite_abp.cfg", include_str!("../configs/suite_abp.cfg")),
    ("scenarios.cfg", include_str!("../configs/scenarios.cfg")),
];

const MAX_LISTED: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<String>,
    pub summary: String,
    /// Measured values only, no timings, so it hashes the same on every run.
    pub report: Value,
    #[serde(skip)]
    pub seconds: f64,
    #[serde(skip)]
    pub budget_seconds: Option<f64>,
}

impl Criterion {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let budget = self.budget_seconds.map(|b| format!(", budget {b:.0} s")).unwrap_or_default();
        let mut line =
            format!("[{verdict}] {:>2} {}: {} ({:.2} s{budget})", self.id, self.title, self.summary, self.seconds);
        for f in &self.failures {
            line.push_str(&format!("\n       - {f}"));
        }
        line
    }
}

#[derive(Default)]
struct Checks {
    count: usize,
    failures: Vec<String>,
    report: Map<String, Value>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.count += 1;
        if !ok {
            if self.failures.len() < MAX_LISTED {
                self.failures.push(what());
            } else if self.failures.len() == MAX_LISTED {
                self.failures.push("further failures omitted".into());
            }
        }
    }

    fn record(&mut self, key: &str, value: impl Serialize) {
        self.report.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn guard(&mut self, what: &str, r: abplab::Result<()>) {
        if let Err(e) = r {
            self.check(false, || format!("{what}: {e}"));
        }
    }

    fn finish(self, id: usize, title: &'static str, start: Instant, budget: Option<f64>, summary: String) -> Criterion {
        let seconds = start.elapsed().as_secs_f64();
        let mut failures = self.failures;
        if let Some(b) = budget.filter(|&b| seconds >= b) {
            failures.push(format!("took {seconds:.1} s, budget {b:.0} s"));
        }
        Criterion {
            id,
            title,
            passed: failures.is_empty(),
            checks: self.count,
            failures,
            summary,
            report: Value::Object(self.report),
            seconds,
            budget_seconds: budget,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn random_sym(n: usize, rng: &mut impl Rng, scale: f64) -> SymMatrix {
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, scale * rng.random_range(-1.0..1.0));
        }
    }
    m
}

/// `G G^T` for a random `n x rank` matrix `G`.
fn random_psd(n: usize, rng: &mut impl Rng, rank: usize) -> SymMatrix {
    let g: Vec<Vec<f64>> = (0..n).map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, (0..rank).map(|k| g[i][k] * g[j][k]).sum());
        }
    }
    m
}

pub fn pucci_algebra() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    // Worst relative duality and homogeneity errors, worst scaled excess of
    // subadditivity and of monotonicity.
    let (mut duality, mut subadd, mut homog, mut mono) = (0.0f64, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for i in 0..10_000 {
        let n = 1 + i % 3;
        let lam = rng.random_range(0.1..2.0);
        let big = lam * rng.random_range(1.0..6.0);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let a = random_sym(n, &mut rng, scale);
        let b = random_sym(n, &mut rng, scale);
        let pa = pucci_plus(&a, lam, big);
        let ma = pucci_minus(&a, lam, big);
        duality = duality.max(rel(ma, -pucci_plus(&a.scale(-1.0), lam, big)));
        subadd = subadd.max((pucci_plus(&(a + b), lam, big) - pa - pucci_plus(&b, lam, big)) / scale);
        let t = rng.random_range(0.0..100.0);
        homog = homog
            .max(rel(pucci_plus(&a.scale(t), lam, big), t * pa))
            .max(rel(pucci_minus(&a.scale(t), lam, big), t * ma));
        let y = a + random_psd(n, &mut rng, 1 + i % n).scale(scale);
        mono = mono.max((pucci_plus(&y, lam, big) - pa) / scale).max((pucci_minus(&y, lam, big) - ma) / scale);
    }
    c.check(duality <= 1e-12, || format!("duality error {duality:e}"));
    c.check(subadd <= 1e-12, || format!("subadditivity excess {subadd:e}"));
    c.check(homog <= 1e-12, || format!("homogeneity error {homog:e}"));
    c.check(mono <= 1e-12, || format!("monotonicity excess {mono:e}"));

    // Brute force over diagonal coefficient matrices on a 200 x 200 lattice.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut brute = 0.0f64;
    for _ in 0..50 {
        let (lam, big) = (rng.random_range(0.2..1.0), rng.random_range(1.0..4.0));
        let d = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..200 {
            for j in 0..200 {
                let a = lam + (big - lam) * i as f64 / 199.0;
                let b = lam + (big - lam) * j as f64 / 199.0;
                let v = -(a * d[0] + b * d[1]);
                sup = sup.max(v);
                inf = inf.min(v);
            }
        }
        let m = SymMatrix::diag(&d);
        brute = brute.max((pucci_plus(&m, lam, big) - sup).abs()).max((pucci_minus(&m, lam, big) - inf).abs());
    }
    c.check(brute < 1e-3, || format!("brute-force disagreement {brute:e}"));
    c.record("duality_error", duality);
    c.record("subadditivity_excess", subadd);
    c.record("homogeneity_error", homog);
    c.record("monotonicity_excess", mono);
    c.record("brute_force_error", brute);
    let summary = format!(
        "10^4 samples, worst algebra error {:.1e}, brute force {brute:.1e}",
        duality.max(homog).max(subadd).max(mono)
    );
    c.finish(1, "Pucci algebra", start, Some(5.0), summary)
}

pub fn barrier() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rows = Vec::new();
    let mut worst_spread = 0.0f64;
    for n in 1..=3 {
        for ratio in [1.0, 2.0, 5.0] {
            let mut mbs = Vec::new();
            for eps0 in [0.5, 0.1, 0.01] {
                let b = match build_barrier(n, 1.0, ratio, eps0) {
                    Ok(b) => b,
                    Err(e) => {
                        c.check(false, || format!("n = {n}, ratio {ratio}, eps0 {eps0}: {e}"));
                        continue;
                    }
                };
                let check = verify_barrier(&b, 10_000, 99);
                let violations = check.total_violations();
                c.check(violations == 0, || format!("n = {n}, ratio {ratio}, eps0 {eps0}: {violations} violations"));
                for rep in &check.reports {
                    c.check(rep.checked > 0, || {
                        format!("n = {n}, ratio {ratio}, eps0 {eps0}: {} checked nothing", rep.name)
                    });
                }
                rows.push(json!({ "n": n, "ratio": ratio, "eps0": eps0, "m_b": b.m_b, "c_b": b.c_b, "violations": violations }));
                mbs.push(b.m_b);
            }
            if let Some(&first) = mbs.first() {
                let spread = mbs.iter().fold(0.0f64, |m, v| m.max((v / first - 1.0).abs()));
                worst_spread = worst_spread.max(spread);
                c.check(spread < 0.01, || format!("n = {n}, ratio {ratio}: M_B spread {spread:.4}"));
            }
        }
    }
    c.record("lattice", rows);
    c.record("worst_m_b_spread", worst_spread);
    let summary = format!("27 lattice points x 10^4 samples, worst M_B spread {worst_spread:.2e}");
    c.finish(2, "Barrier", start, Some(30.0), summary)
}

/// Lower hull of lifted points: the smallest chord value through each node.
fn chord_oracle(y: &[f64]) -> Vec<f64> {
    (0..y.len())
        .into_par_iter()
        .map(|k| {
            let mut best = y[k];
            for i in 0..k {
                for j in (k + 1)..y.len() {
                    let t = (k - i) as f64 / (j - i) as f64;
                    best = best.min(y[i] + t * (y[j] - y[i]));
                }
            }
            best
        })
        .collect()
}

pub fn envelope() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let ball = Domain::ball(&[0.0], 1.0).expect("unit ball");
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for points in [9usize, 17, 33, 65, 129, 257] {
        for _ in 0..3 {
            let r = (|| {
                let g = Grid::new(&[0.0], 2.0, points)?;
                let vals: Vec<f64> = (0..points).map(|_| rng.random_range(-3.0..3.0)).collect();
                let u = GridFunction::from_values(g, "u", vals)?;
                let env = convex_envelope(&u, &ball, 0.1)?;
                let oracle = chord_oracle(env.obstacle.values());
                let err = env.gamma.values().iter().zip(&oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                worst = worst.max(err);
                c.check(err <= 1e-10, || format!("N = {points}: hull error {err:e}"));
                Ok(())
            })();
            c.guard("random profile", r);
        }
    }
    c.record("oracle_error", worst);

    let r = (|| {
        let g = Grid::new(&[0.0], 2.0, 257)?;
        let u = GridFunction::from_fn(&g, "u", |x| -1.0 + x[0].abs())?;
        let env = convex_envelope(&u, &ball, 0.0)?;
        let err = (0..env.grid.len())
            .map(|i| (env.gamma.value(i) - (-1.0 + env.grid.point(i)[0].abs() / 2.0)).abs())
            .fold(0.0f64, f64::max);
        c.check(err < 1e-12, || format!("hand example: envelope error {err:e}"));
        let contact: Vec<f64> = env.contact_nodes_in_ball().iter().map(|&i| env.grid.point(i)[0]).collect();
        c.check(contact == [0.0], || format!("hand example: contact set {contact:?}"));
        c.check(env.m == 1.0, || format!("hand example: M = {}", env.m));
        let lo = env.gradient_samples.iter().map(|g| g[0]).fold(f64::INFINITY, f64::min);
        let hi = env.gradient_samples.iter().map(|g| g[0]).fold(f64::NEG_INFINITY, f64::max);
        c.check((lo + 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12, || {
            format!("hand example: gradients in [{lo}, {hi}]")
        });
        let cov = gradient_image(&env, 0.0, 201);
        c.check((cov.outer_radius - 1.0 / 3.0).abs() < 1e-15, || {
            format!("hand example: outer radius {}", cov.outer_radius)
        });
        c.check(!cov.annulus_empty && cov.covered == cov.samples, || {
            format!("hand example: {}/{} covered", cov.covered, cov.samples)
        });
        c.record(
            "hand_example",
            json!({ "envelope_error": err, "contact": contact, "gradient_range": [lo, hi], "coverage": cov }),
        );
        Ok(())
    })();
    c.guard("hand example", r);
    let summary = format!("n = 1 hull oracle error {worst:.1e} up to N = 257, hand example exact");
    c.finish(3, "Envelope oracle", start, None, summary)
}

/// `omega_n` with the Gamma values written out.
fn omega(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        _ => 4.0 * PI / 3.0,
    }
}

/// `u = -a (1 - |x|^2)` on a grid around `B_1`, with `f = 2 n a`.
fn quadratic_case(n: usize, points: usize, a: f64) -> abplab::Result<(GridFunction, Domain, StructureParams)> {
    let grid = Grid::new(&vec![0.0; n], 2.25, points)?;
    let ball = Domain::ball(&vec![0.0; n], 1.0)?;
    let u = GridFunction::from_fn(&grid, "u", |x| -a * (1.0 - x.iter().map(|v| v * v).sum::<f64>()))?;
    let params = StructureParams::new(1.0, 1.0)?.with_f(Field::Constant(2.0 * n as f64 * a))?;
    Ok((u, ball, params))
}

/// Solver-generated supersolutions and the data under which each satisfies
/// the large-gradient condition.
fn solved_supersolutions(
    n: usize,
    points: usize,
) -> abplab::Result<Vec<(&'static str, GridFunction, StructureParams)>> {
    let grid = Grid::new(&vec![0.0; n], 2.25, points)?;
    let ball = Domain::ball(&vec![0.0; n], 1.0)?;
    let zero = GridFunction::constant(&grid, "g", 0.0)?;
    let run = |spec: OperatorSpec| -> abplab::Result<GridFunction> {
        let res = solve(&ProblemSpec::new(spec, ball.clone(), zero.clone())?, 1e-9, 100)?;
        if !res.converged {
            return Err(abplab::Error::InvalidArgument(format!("solver stalled at residual {:e}", res.residual_sup)));
        }
        Ok(res.u)
    };
    let base = StructureParams::new(1.0, 2.0)?;
    let source = Field::Grid(GridFunction::from_fn(&grid, "s", |x| 1.0 + 0.5 * x[0])?);
    let mut out = Vec::new();
    for (name, kind) in [
        ("pucci_plus", OperatorKind::PucciPlus),
        ("pucci_minus", OperatorKind::PucciMinus),
        ("laplace", OperatorKind::Laplace),
    ] {
        let u = run(OperatorSpec::new(kind, base.clone())?.with_source(source.clone()))?;
        out.push((name, u, base.clone().with_f(source.clone())?));
    }
    let mut b = vec![Field::Constant(0.0); n];
    b[0] = Field::Constant(1.0);
    let drift = OperatorKind::HomogFamily { alpha: 0.0, core: Core::PucciPlus, b, c: 0.0, f0: Field::Constant(1.0) };
    let u = run(OperatorSpec::new(drift, base.clone())?)?;
    out.push(("drift", u, base.clone().with_sigma(Field::Constant(1.0))?.with_f(Field::Constant(1.0))?));
    let degenerate =
        OperatorKind::HomogFamily { alpha: 1.0, core: Core::PucciPlus, b: vec![], c: 0.0, f0: Field::Constant(1.0) };
    let u = run(OperatorSpec::new(degenerate, base.clone())?)?;
    // With |p| >= M_F the equation gives -lambda tr X + M_F^(-alpha) >= 0.
    let m_f = 0.25;
    out.push(("degenerate", u, base.with_m_f(m_f)?.with_f(Field::Constant(1.0 / m_f))?));
    Ok(out)
}

pub fn abp() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let r = (|| {
        let c2 = c_abp(2, 1.0)?;
        c.check((c2 - 2.0 / PI).abs() <= 1e-15, || format!("C_ABP(2, 1) = {c2}"));
        for n in 1..=3 {
            let oracle = n as f64 * 2f64.powi(n as i32 - 2) / omega(n);
            let v = c_abp(n, 1.0)?;
            c.check((v - oracle).abs() <= 1e-15 * oracle, || format!("C_ABP({n}, 1) = {v}, closed form {oracle}"));
        }
        let big_c = abp_constant(2, 1.0, 0.0)?;
        c.check((big_c - 3.0 * (2.0 / PI).exp()).abs() < 1e-14, || format!("C = {big_c}"));
        c.record("c_abp_2", c2);
        c.record("c_2", big_c);
        Ok(())
    })();
    c.guard("constants", r);

    let mut rows = Vec::new();
    for (n, sizes) in [(1usize, [65usize, 129]), (2, [65, 129])] {
        for points in sizes {
            let r = (|| {
                let (u, ball, params) = quadratic_case(n, points, 2.0)?;
                let rep = abp_check(&u, &ball, &params)?;
                c.check(rep.margin > 0.0, || format!("quadratic n = {n}, N = {points}: margin {}", rep.margin));
                rows.push(json!({ "case": "quadratic", "n": n, "points": points, "margin": rep.margin, "lhs": rep.lhs, "rhs": rep.rhs }));
                Ok(())
            })();
            c.guard("quadratic supersolution", r);
        }
    }
    let mut solved_count = 0;
    for n in [1usize, 2] {
        let mut finest: BTreeMap<&str, f64> = BTreeMap::new();
        for points in [65usize, 129] {
            let r = (|| {
                let ball = Domain::ball(&vec![0.0; n], 1.0)?;
                for (name, u, params) in solved_supersolutions(n, points)? {
                    let h = u.grid().spacing();
                    let rep = abp_check(&u, &ball, &params)?;
                    c.check(rep.margin >= -10.0 * h, || {
                        format!("{name} n = {n}, N = {points}: margin {} < -10h", rep.margin)
                    });
                    rows.push(json!({ "case": name, "n": n, "points": points, "margin": rep.margin, "lhs": rep.lhs, "rhs": rep.rhs }));
                    finest.insert(name, rep.margin);
                    solved_count += 1;
                }
                Ok(())
            })();
            c.guard("solved supersolutions", r);
        }
        for (name, m) in finest {
            c.check(m >= 0.0, || format!("{name} n = {n}: margin {m} at the finest grid"));
        }
    }
    let worst = rows.iter().filter_map(|r| r["margin"].as_f64()).fold(f64::INFINITY, f64::min);
    c.record("cases", rows);
    let summary = format!("C_ABP(2, 1) = 2/pi, {solved_count} solved cases, smallest margin {worst:.3e}");
    c.finish(4, "ABP", start, Some(120.0), summary)
}

pub fn singular_reduction() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let r = (|| {
        let m = abp_singular_minimizer(1.0, 1.0)?;
        c.check((m - 1.0).abs() <= 1e-12, || format!("minimizer {m}"));
        for (d, cc) in [(1.0, 1.0), (0.5, 3.0), (2.0, 5.6702)] {
            let v = abp_singular_bound(1.0, 1.0, d, cc)?;
            c.check((v - 2.0 * cc * d).abs() <= 1e-12 * (2.0 * cc * d).max(1.0), || format!("bound({d}, {cc}) = {v}"));
        }
        let mut worst = 0.0f64;
        for alpha in [0.0, 0.5, 1.0, 2.0, 3.5] {
            for k in [1e-3, 0.1, 1.0, 10.0, 1e3] {
                for s in [0.25, 2.0, 10.0, 1e4] {
                    let base = abp_singular_bound(k, alpha, 1.0, 1.0)?;
                    let scaled = abp_singular_bound(s * k, alpha, 1.0, 1.0)?;
                    let err = (scaled - s.powf(1.0 / (1.0 + alpha)) * base).abs() / scaled;
                    worst = worst.max(err);
                    c.check(err <= 1e-12, || format!("alpha {alpha}, K {k}, factor {s}: relative error {err:e}"));
                }
            }
        }
        c.record("minimizer", m);
        c.record("scaling_error", worst);
        Ok(())
    })();
    c.guard("singular bound", r);
    let worst = c.report.get("scaling_error").and_then(Value::as_f64).unwrap_or(f64::NAN);
    c.finish(5, "Singular reduction", start, None, format!("minimizer 1, value 2Cd, K-scaling error {worst:.1e}"))
}

pub fn cole_hopf_check() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut worst = 0.0f64;
    let r = (|| {
        for (lambda, sigma2) in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.1)] {
            let ch = ColeHopf::new(lambda, sigma2)?;
            c.check(ch.h(0.0) == 0.0 && ch.dh(0.0) == 1.0, || format!("initial data at ({lambda}, {sigma2})"));
            let tmax = ch.t_max();
            for i in 1..=1000 {
                let t = 0.999 * tmax * i as f64 / 1000.0;
                // Relative to h'^2, which blows up at the end of the domain.
                let r = (lambda * ch.d2h(t) - sigma2 * ch.dh(t).powi(2)).abs() / ch.dh(t).powi(2).max(1.0);
                worst = worst.max(r);
            }
        }
        c.check(worst < 1e-10, || format!("ODE residual {worst:e}"));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = Grid::new(&[0.0, 0.0], 1.0, 17)?;
        let mut gap = f64::INFINITY;
        for k in 0..10 {
            let lambda = rng.random_range(0.2..3.0);
            let sigma2 = rng.random_range(0.05..4.0);
            let scale = rng.random_range(0.01..5.0);
            let values: Vec<f64> = (0..grid.len()).map(|_| scale * rng.random::<f64>()).collect();
            let u = GridFunction::from_values(grid.clone(), "u", values)?;
            let v = cole_hopf(&u, lambda, sigma2)?;
            let a = sigma2 * u.max_abs() / lambda;
            let factor = -(-a).exp_m1() / a;
            for (&ui, &vi) in u.values().iter().zip(v.values()) {
                gap = gap.min(vi * (1.0 + 1e-15) - factor * ui).min(ui - vi);
                c.check(factor * ui <= vi * (1.0 + 1e-15) && vi <= ui, || format!("function {k}: {factor} {ui} {vi}"));
            }
        }
        c.record("ode_residual", worst);
        c.record("sandwich_min_slack", gap);
        Ok(())
    })();
    c.guard("Cole-Hopf", r);
    c.finish(
        6,
        "Cole-Hopf",
        start,
        None,
        format!("ODE residual {worst:.1e} on 3 x 10^3 points, sandwich on 10 functions"),
    )
}

fn rescale_norm_sides(
    sigma: Field,
    f: Field,
    source: &Grid,
    target: &Grid,
    s: &Rescaling,
    q: f64,
) -> abplab::Result<[f64; 4]> {
    let n = target.dim() as f64;
    let p = StructureParams::new(1.0, 2.0)?.with_sigma(sigma.clone())?.with_f(f.clone())?;
    let ps = rescale_params(&p, s, target)?;
    let big = Domain::cube(&s.x0, s.t0)?;
    let unit = Domain::cube(&vec![0.0; target.dim()], 1.0)?;
    Ok([
        lp_norm(&ps.f.sample_on(target, "f_s")?, n, &unit)?,
        s.t0 / s.m0 * lp_norm(&f.sample_on(source, "f")?, n, &big)?,
        lp_norm(&ps.sigma.sample_on(target, "sigma_s")?, q, &unit)?,
        s.t0.powf(1.0 - n / q) * lp_norm(&sigma.sample_on(source, "sigma")?, q, &big)?,
    ])
}

pub fn rescaling() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut slope = f64::NAN;
    let r = (|| {
        let mut worst = 0.0f64;
        for n in [2usize, 3] {
            let x0 = vec![0.3; n];
            let s = Rescaling::new(&x0, 0.5, 4.0)?;
            let source = Grid::new(&x0, 0.5, 9)?;
            let target = Grid::new(&vec![0.0; n], 1.0, 9)?;
            let q = n as f64 + 1.5;
            let [a, b, c1, d] =
                rescale_norm_sides(Field::Constant(1.7), Field::Constant(1.7), &source, &target, &s, q)?;
            let err = ((a - b) / b).abs().max(((c1 - d) / d).abs());
            worst = worst.max(err);
            c.check(err < 1e-13, || format!("constant fields, n = {n}: relative error {err:e}"));
        }
        c.record("constant_field_error", worst);
        let x0 = [0.3, -0.2];
        let s = Rescaling::new(&x0, 0.5, 2.0)?;
        let (mut errors, mut spacings) = (Vec::new(), Vec::new());
        for k in 3..=7 {
            let nt = (1usize << k) + 1;
            let ns = 3 * (1usize << (k - 1)) + 1;
            let source = Grid::new(&x0, 0.5, ns)?;
            let target = Grid::new(&[0.0, 0.0], 1.0, nt)?;
            let f =
                Field::Grid(GridFunction::from_fn(&source, "f", |x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + 2.0)?);
            let sigma = Field::Grid(GridFunction::from_fn(&source, "sigma", |x| (x[0] * x[1] + 1.0).exp())?);
            let [a, b, c1, d] = rescale_norm_sides(sigma, f, &source, &target, &s, 3.5)?;
            errors.push(((a - b) / b).abs().max(((c1 - d) / d).abs()));
            spacings.push(target.spacing());
        }
        let m = errors.len();
        slope = (errors[m - 1] / errors[0]).ln() / (spacings[m - 1] / spacings[0]).ln();
        c.check(slope >= 1.9, || format!("smooth fields: slope {slope:.3}"));
        c.record("smooth_errors", &errors);
        c.record("smooth_slope", slope);
        Ok(())
    })();
    c.guard("rescaling", r);
    c.finish(
        7,
        "Rescaling",
        start,
        None,
        format!("constant fields exact, smooth fields converge with slope {slope:.3}"),
    )
}

/// Cells of `set` inside `q`, by scanning every cell.
fn brute_count(set: &CellSet, q: &DyadicCube) -> usize {
    let side = 1u64 << set.depth;
    let shift = set.depth - q.level;
    let mut count = 0;
    for cell in 0..(side as usize).pow(set.dim as u32) {
        let mut m = [0u64; 3];
        let mut rest = cell as u64;
        for mk in m.iter_mut().take(set.dim) {
            *mk = rest % side;
            rest /= side;
        }
        if (0..set.dim).all(|k| m[k] >> shift == q.index[k]) && set.contains_cell(&m[..set.dim]) {
            count += 1;
        }
    }
    count
}

/// Checks one randomized instance; returns its failures and verdict.
fn czd_instance(seed: u64) -> (Vec<String>, Option<CzdVerdict>) {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 1 + (seed % 3) as usize;
    let depth = [9, 5, 3][dim - 1] + (seed / 3 % 2) as u32;
    let delta = [0.1, 0.25, 0.5, 0.7][(seed % 4) as usize];
    let r = random_instance(dim, depth, delta, &mut rng).and_then(|(a, b)| Ok((czd(&a, &b, 1.0, delta)?, a, b)));
    let (r, a, b) = match r {
        Ok(x) => x,
        Err(e) => return (vec![format!("instance {seed}: {e}")], None),
    };
    let root = DyadicCube::root(dim);
    let (na, nb) = (brute_count(&a, &root), brute_count(&b, &root));
    if (na, nb) != (r.cells_a, r.cells_b) {
        failures.push(format!("instance {seed}: counts ({na}, {nb}) vs reported ({}, {})", r.cells_a, r.cells_b));
    }
    for q in &r.stopped {
        let vol = 1usize << ((depth - q.level) as usize * dim);
        if brute_count(&a, q) as f64 <= delta * vol as f64 {
            failures.push(format!("instance {seed}: stopped cube {q:?} is not dense"));
        }
        match q.parent() {
            Some(p) if brute_count(&b, &p) == vol << dim => {}
            _ => failures.push(format!("instance {seed}: predecessor of {q:?} is not inside B")),
        }
    }
    if r.verdict == CzdVerdict::Holds && na as f64 > delta * nb as f64 {
        failures.push(format!("instance {seed}: |A| = {na} > delta |B| = {}", delta * nb as f64));
    }
    if r.verdict != CzdVerdict::Holds {
        failures.push(format!("instance {seed}: verdict {:?}", r.verdict));
    }
    (failures, Some(r.verdict))
}

pub fn czd_battery(instances: u64) -> (Vec<String>, usize) {
    let results: Vec<(Vec<String>, Option<CzdVerdict>)> = (0..instances).into_par_iter().map(czd_instance).collect();
    let holds = results.iter().filter(|r| r.1 == Some(CzdVerdict::Holds)).count();
    (results.into_iter().flat_map(|r| r.0).collect(), holds)
}

pub fn cube_decomposition() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let (failures, holds) = czd_battery(200);
    c.check(failures.is_empty(), || failures.first().cloned().unwrap_or_default());
    for f in failures.iter().skip(1) {
        c.check(false, || f.clone());
    }
    c.record("instances", 200);
    c.record("holds", holds);
    c.finish(8, "Cube decomposition", start, Some(10.0), format!("{holds}/200 instances confirmed by direct count"))
}

pub fn level_sets() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut rows = Vec::new();
    for (n, points, eps0) in [(1usize, 4001usize, 0.7), (2, 601, 1.0), (2, 601, 1.5)] {
        let r = (|| {
            let grid = Grid::new(&vec![0.0; n], 2.0, points)?;
            let cube = Domain::cube(&vec![0.0; n], 2.0)?;
            let floor = grid.spacing() / 4.0;
            let e = -(n as f64) / eps0;
            let u = GridFunction::from_fn(&grid, "u", |x| x.iter().fold(floor, |m, v| m.max(v.abs())).powf(e))?;
            let fit = level_set_decay(&u, &cube, &log_levels(0.9f64.powf(e), 0.05f64.powf(e), 12))?;
            c.check((fit.eps_fit - eps0).abs() < 0.05 * eps0, || {
                format!("power profile n = {n}: {} vs {eps0}", fit.eps_fit)
            });
            rows.push(json!({ "case": "power", "n": n, "expected": eps0, "fitted": fit.eps_fit }));
            Ok(())
        })();
        c.guard("power profile", r);
    }
    for (n, points) in [(1usize, 8193usize), (2, 1025)] {
        for (mu, m_b) in [(0.3f64, 4.0f64), (0.5, 3.0), (0.1, 10.0)] {
            let r = (|| {
                let kmax = 10;
                let half_side = |k: i32| (1.0f64 - mu).powf(k as f64 / n as f64);
                let grid = Grid::new(&vec![0.0; n], 2.0, points)?;
                let cube = Domain::cube(&vec![0.0; n], 2.0)?;
                let u = GridFunction::from_fn(&grid, "u", |x| {
                    let r = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    m_b.powi((0..=kmax).take_while(|&k| r <= half_side(k)).last().unwrap_or(0))
                })?;
                let ts: Vec<f64> = (0..kmax).map(|k| m_b.powi(k)).collect();
                let fit = level_set_decay(&u, &cube, &ts)?;
                let eps = -(1.0 - mu).ln() / m_b.ln();
                c.check((fit.eps_fit - eps).abs() < 0.05 * eps, || {
                    format!("chain n = {n}, mu {mu}: {} vs {eps}", fit.eps_fit)
                });
                rows.push(
                    json!({ "case": "chain", "n": n, "mu": mu, "m_b": m_b, "expected": eps, "fitted": fit.eps_fit }),
                );
                Ok(())
            })();
            c.guard("discrete chain", r);
        }
    }
    let worst = rows
        .iter()
        .filter_map(|r| Some((r["fitted"].as_f64()? / r["expected"].as_f64()? - 1.0).abs()))
        .fold(0.0f64, f64::max);
    c.record("fits", rows);
    c.finish(9, "Level-set decay", start, None, format!("9 profiles, worst relative exponent error {worst:.2e}"))
}

/// Positive solutions on the unit cube with positive boundary data and `f = 0`.
fn positive_solutions(points: usize) -> abplab::Result<Vec<(&'static str, GridFunction)>> {
    let grid = Grid::new(&[0.0, 0.0], 1.0, points)?;
    let q1 = Domain::cube(&[0.0, 0.0], 1.0)?;
    let g = GridFunction::from_fn(&grid, "g", |x| 1.5 + x[0] + x[0] * x[1] + 0.5 * (4.0 * x[1]).cos())?;
    let mut out = Vec::new();
    for (name, kind) in [
        ("laplace", OperatorKind::Laplace),
        ("pucci_plus", OperatorKind::PucciPlus),
        ("pucci_minus", OperatorKind::PucciMinus),
    ] {
        let spec = OperatorSpec::new(kind, StructureParams::new(1.0, 2.0)?)?;
        let res = solve(&ProblemSpec::new(spec, q1.clone(), g.clone())?, 1e-7, 100)?;
        if !res.converged {
            return Err(abplab::Error::InvalidArgument(format!(
                "{name}, N = {points}: residual {:e}",
                res.residual_sup
            )));
        }
        out.push((name, res.u));
    }
    Ok(out)
}

pub fn harnack_stability() -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    let params = StructureParams::new(1.0, 2.0).expect("valid constants");
    let q1 = Domain::cube(&[0.0, 0.0], 1.0).expect("unit cube");
    let mut table: Vec<Value> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    let mut worst_change = 0.0f64;
    for points in [65usize, 129, 257] {
        let r = (|| {
            let sols = positive_solutions(points)?;
            let mut row = Vec::new();
            for (name, u) in &sols {
                let h = harnack_report(u, &q1, &params, None)?;
                let w = weak_harnack_report(u, &q1, &params, 0.5, None)?;
                let l = local_max_report(u, &q1, &params, 1.0, None)?;
                c.check(h.quotient.is_finite() && h.quotient >= 1.0, || {
                    format!("{name}, N = {points}: quotient {}", h.quotient)
                });
                table.push(json!({ "points": points, "solution": name, "harnack": h.quotient, "weak_harnack": w.quotient, "local_max": l.quotient }));
                row.push(h.quotient);
            }
            if let Some(prev) = &previous {
                for ((a, b), (name, _)) in prev.iter().zip(&row).zip(&sols) {
                    let change = (b - a).abs() / a;
                    worst_change = worst_change.max(change);
                    c.check(change < 0.1, || format!("{name}: quotient {a} -> {b} at N = {points}"));
                }
            }
            previous = Some(row);
            if points == 257 {
                let steps = 4usize;
                for (name, u) in &sols {
                    let mut cmax = 1.0f64;
                    for j in 0..steps {
                        cmax = cmax.max(empirical_harnack_constant(u, &subcube(&q1, 0.5f64.powi(j as i32))?, &params)?);
                    }
                    let osc = osc_decay_check(u, &q1, &params, cmax, steps)?;
                    c.check(osc.passed, || format!("{name}: oscillation recursion fails with C = {cmax}"));
                    table.push(json!({ "solution": name, "c_empirical": cmax, "alpha_hypothesis": osc.alpha_hypothesis, "alpha_measured": osc.alpha_measured }));
                }
            }
            Ok(())
        })();
        c.guard("Harnack quotients", r);
    }
    let mut holder = f64::NAN;
    let r = (|| {
        let grid = Grid::new(&[0.0, 0.0], 1.0, 65)?;
        let root = GridFunction::from_fn(&grid, "u", |x| x[0].abs().sqrt())?;
        holder = holder_seminorm(&root, 0.5, &subcube(&q1, 0.5)?)?;
        c.check((holder - 1.0).abs() <= 1e-6, || format!("Holder seminorm of |x_1|^(1/2): {holder}"));
        Ok(())
    })();
    c.guard("Holder seminorm", r);
    c.record("quotients", table);
    c.record("worst_relative_change", worst_change);
    c.record("holder", holder);
    let summary = format!("3 solutions, worst relative quotient change {worst_change:.1e}, Holder {holder:.9}");
    c.finish(10, "Harnack stability", start, None, summary)
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub criteria: Vec<Criterion>,
    pub scenarios: Vec<ScenarioReport>,
    /// Output files by name: criterion reports and scenario outputs.
    pub files: Vec<runner::RenderedFile>,
    pub hashes: BTreeMap<String, String>,
    pub seconds: f64,
}

/// Runs criteria 1 to 10 and the bundled scenarios. `parallel` selects
/// scenario-level parallelism; `progress` sees each criterion as it ends.
pub fn run_battery(parallel: bool, mut progress: impl FnMut(&Criterion)) -> CliResult<SuiteRun> {
    let start = Instant::now();
    let steps: [fn() -> Criterion; 10] = [
        pucci_algebra,
        barrier,
        envelope,
        abp,
        singular_reduction,
        cole_hopf_check,
        rescaling,
        cube_decomposition,
        level_sets,
        harnack_stability,
    ];
    let mut criteria = Vec::with_capacity(steps.len());
    let mut files = Vec::new();
    for step in steps {
        let cr = step();
        progress(&cr);
        files.push((format!("criterion_{:02}.json", cr.id), to_json(&cr)?.into_bytes()));
        criteria.push(cr);
    }
    let mut scenarios = Vec::new();
    for (name, text) in BUNDLED_CONFIGS {
        let cfg = config::parse(text, name, Path::new("."))?;
        let (reports, rendered) = runner::render(&cfg, parallel)?;
        let stem = name.trim_end_matches(".cfg");
        files.extend(rendered.into_iter().map(|(f, b)| (format!("{stem}/{f}"), b)));
        scenarios.extend(reports);
    }
    let hashes = files.iter().map(|(f, b)| (f.clone(), sha256_hex(b))).collect();
    Ok(SuiteRun { criteria, scenarios, files, hashes, seconds: start.elapsed().as_secs_f64() })
}

/// End-to-end criterion: both runs pass their scenarios, agree byte for
/// byte, and each fits the desk-scale budget.
pub fn end_to_end(first: &SuiteRun, second: &SuiteRun) -> Criterion {
    let start = Instant::now();
    let mut c = Checks::default();
    for run in [first, second] {
        for s in &run.scenarios {
            c.check(s.passed, || format!("scenario {} failed: {}", s.name, s.failures.join("; ")));
        }
        c.check(run.seconds < 300.0, || format!("suite took {:.1} s", run.seconds));
    }
    let differing: Vec<&String> = first
        .hashes
        .iter()
        .filter(|(k, v)| second.hashes.get(*k) != Some(v))
        .map(|(k, _)| k)
        .chain(second.hashes.keys().filter(|k| !first.hashes.contains_key(*k)))
        .collect();
    c.check(differing.is_empty(), || format!("reports differ between runs: {differing:?}"));
    c.record("files", first.hashes.len());
    let summary = format!(
        "{} report files hash-identical across parallel and serial runs; {:.1} s and {:.1} s",
        first.hashes.len(),
        first.seconds,
        second.seconds
    );
    let mut cr = c.finish(11, "End-to-end suite", start, None, summary);
    cr.seconds = first.seconds + second.seconds;
    cr
}

/// Writes a run's files plus a hash manifest under `dir`.
pub fn write_run(run: &SuiteRun, dir: &Path) -> CliResult<()> {
    for (name, bytes) in &run.files {
        atomic_write(&dir.join(name), bytes)?;
    }
    let manifest: String = run.hashes.iter().map(|(k, v)| format!("{v}  {k}\n")).collect();
    atomic_write(&dir.join("SHA256SUMS"), manifest.as_bytes())
}
