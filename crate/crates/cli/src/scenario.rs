use abplab::abp::{abp_check, boundary_ring, pointwise_condition_check};
use abplab::envelope::{convex_envelope, gradient_image, hessian_contact_check};
use abplab::grid::{Domain, GridFunction};
use abplab::harnack::{
    empirical_harnack_constant, harnack_report, holder_seminorm, level_set_decay, local_max_report, osc_decay_check,
    subcube, weak_harnack_report,
};
use abplab::solve::{solve, ProblemSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Scenario, Verifier};
use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub operator: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual_sup: f64,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub verifier: String,
    pub passed: bool,
    /// Signed slack of the checked inequality where one exists.
    pub margin: Option<f64>,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub points: usize,
    pub h: f64,
    pub solve: Option<SolveSummary>,
    pub checks: Vec<CheckReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub passed: bool,
    pub failures: Vec<String>,
    pub runs: Vec<RunReport>,
}

impl ScenarioReport {
    pub fn worst_margin(&self) -> Option<f64> {
        self.runs.iter().flat_map(|r| &r.checks).filter_map(|c| c.margin).reduce(f64::min)
    }

    /// `(h, margin)` per verifier across the refinement, for plotting.
    pub fn margin_series(&self) -> Vec<(String, Vec<(f64, f64)>)> {
        let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for run in &self.runs {
            for c in &run.checks {
                let Some(m) = c.margin else { continue };
                match out.iter_mut().find(|(k, _)| *k == c.verifier) {
                    Some((_, v)) => v.push((run.h, m)),
                    None => out.push((c.verifier.clone(), vec![(run.h, m)])),
                }
            }
        }
        out
    }

    /// `(t, measure)` samples of each level-set fit, keyed by grid size.
    pub fn level_set_series(&self) -> Vec<(usize, Vec<(f64, f64)>)> {
        let mut out = Vec::new();
        for run in &self.runs {
            for c in run.checks.iter().filter(|c| c.verifier == "level_set") {
                if let Some(samples) = c.detail["fit"]["samples"].as_array() {
                    let pts = samples.iter().filter_map(|s| Some((s[0].as_f64()?, s[1].as_f64()?))).collect();
                    out.push((run.points, pts));
                }
            }
        }
        out
    }
}

/// Runs every grid size of the scenario. Computational errors propagate;
/// failed inequalities are collected into the report.
pub fn run_scenario(s: &Scenario) -> CliResult<ScenarioReport> {
    let mut runs = Vec::with_capacity(s.grid.sizes.len());
    let mut failures = Vec::new();
    for &points in &s.grid.sizes {
        let grid = s.grid.grid(points)?;
        let data = s.data.sample(&grid, &s.base_dir)?;
        let (u, solve_summary) = match &s.solve {
            None => (data, None),
            Some(spec) => {
                let problem = ProblemSpec::new(spec.operator.clone(), s.domain.clone(), data)?;
                let res = solve(&problem, spec.tol, spec.max_iter)?;
                if !res.converged {
                    failures.push(format!("N = {points}: solver did not converge (residual {:e})", res.residual_sup));
                }
                let summary = SolveSummary {
                    operator: spec.operator.kind.name().to_string(),
                    converged: res.converged,
                    iterations: res.iterations,
                    residual_sup: res.residual_sup,
                    residual_history: res.residual_history,
                };
                (res.u, Some(summary))
            }
        };
        let mut checks = Vec::with_capacity(s.verifiers.len());
        for v in &s.verifiers {
            let c = check(v, &u, &s.domain, s)?;
            if !c.passed {
                let margin = c.margin.map(|m| format!(" (margin {m:e})")).unwrap_or_default();
                failures.push(format!("N = {points}: {} failed{margin}", c.verifier));
            }
            checks.push(c);
        }
        runs.push(RunReport { points, h: grid.spacing(), solve: solve_summary, checks });
    }
    Ok(ScenarioReport { name: s.name.clone(), seed: s.seed, passed: failures.is_empty(), failures, runs })
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn check(v: &Verifier, u: &GridFunction, domain: &Domain, s: &Scenario) -> CliResult<CheckReport> {
    let params = &s.params;
    let (passed, margin, detail) = match v {
        Verifier::Abp { tolerance } => {
            let r = abp_check(u, domain, params)?;
            (r.margin >= -tolerance, Some(r.margin), value(&r))
        }
        Verifier::Pointwise => {
            let r = pointwise_condition_check(u, domain, params)?;
            (r.passed(), r.worst_margin, value(&r))
        }
        Verifier::Envelope { tolerance } => {
            let m_partial =
                boundary_ring(u.grid(), domain)?.into_iter().map(|i| (-u.value(i)).max(0.0)).fold(0.0, f64::max);
            let env = convex_envelope(u, domain, m_partial)?;
            let per_axis = [201, 41, 13][u.grid().dim() - 1];
            let cov = gradient_image(&env, params.m_f, per_axis);
            let hess = hessian_contact_check(&env, params);
            let uncovered = 1.0 - cov.fraction;
            let detail = json!({
                "m_partial": m_partial,
                "m": env.m,
                "contact_nodes": env.contact_nodes_in_ball().len(),
                "max_gradient": env.max_gradient(),
                "coverage": value(&cov),
                "hessian": value(&hess),
            });
            (uncovered <= *tolerance && hess.passed(), Some(tolerance - uncovered), detail)
        }
        Verifier::Harnack { c, steps, p0, p } => {
            let h = harnack_report(u, domain, params, *c)?;
            let w = weak_harnack_report(u, domain, params, *p0, *c)?;
            let l = local_max_report(u, domain, params, *p, *c)?;
            let c_used = match c {
                Some(c) => *c,
                None => (0..*steps)
                    .map(|j| empirical_harnack_constant(u, &subcube(domain, 0.5f64.powi(j as i32))?, params))
                    .collect::<abplab::Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(1.0, f64::max),
            };
            let osc = if c_used > 1.0 && c_used.is_finite() {
                Some(osc_decay_check(u, domain, params, c_used, *steps)?)
            } else {
                None
            };
            let quotients_ok = [&h, &w, &l].iter().all(|q| q.passed.unwrap_or(true));
            let osc_ok = osc.as_ref().is_none_or(|o| o.passed);
            let detail = json!({
                "c_used": c_used,
                "c_estimated": c.is_none(),
                "harnack": value(&h),
                "weak_harnack": value(&w),
                "local_max": value(&l),
                "osc_decay": value(&osc),
            });
            let margin = c.map(|c| c - h.quotient);
            (quotients_ok && osc_ok, margin, detail)
        }
        Verifier::LevelSet { levels, expected, tolerance } => {
            let fit = level_set_decay(u, domain, levels)?;
            let ok = expected.is_none_or(|e| (fit.eps_fit - e).abs() <= tolerance * e.abs());
            let margin = expected.map(|e| tolerance * e.abs() - (fit.eps_fit - e).abs());
            (ok, margin, json!({ "fit": value(&fit) }))
        }
        Verifier::Holder { alpha, expected, tolerance } => {
            let seminorm = holder_seminorm(u, *alpha, domain)?;
            let ok = expected.is_none_or(|e| (seminorm - e).abs() <= *tolerance);
            let margin = expected.map(|e| tolerance - (seminorm - e).abs());
            (ok, margin, json!({ "alpha": alpha, "seminorm": seminorm }))
        }
    };
    Ok(CheckReport { verifier: v.name().to_string(), passed, margin, detail })
}
