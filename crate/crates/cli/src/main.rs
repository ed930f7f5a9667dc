use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abplab::abp::{abp_check, abp_constant, c_abp};
use abplab::barrier::{build_barrier, verify_barrier};
use abplab::envelope::{convex_envelope, gradient_image};
use abplab::grid::{norm, Domain, Field, Grid, GridFunction};
use abplab::harnack::{
    czd, empirical_harnack_constant, harnack_report, local_max_report, osc_decay_check, random_instance, subcube,
    weak_harnack_report,
};
use abplab::pucci::{OperatorKind, OperatorSpec};
use abplab::solve::{solve, ProblemSpec};
use abplab::StructureParams;
use abplab_cli::output::{atomic_write, to_json};
use abplab_cli::{config, runner, suite, CliError, CliResult};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "abplab", version, about = "Numerical checks for degenerate fully nonlinear elliptic estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a config file.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output_dir`, else `abplab-out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run scenarios one at a time.
        #[arg(long)]
        serial: bool,
    },
    /// ABP constants, or the estimate on the quadratic bowl `-a (1 - |x|^2)`.
    Abp {
        /// Print the constants only.
        #[arg(long)]
        constant: bool,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        lam: f64,
        /// `L^n` norm of the drift coefficient.
        #[arg(long, default_value_t = 0.0)]
        sigma_ln: f64,
        #[arg(long, default_value_t = 129)]
        points: usize,
        #[arg(long, default_value_t = 2.0)]
        amplitude: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the barrier and optionally verify it on random samples.
    Barrier {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        lam: f64,
        #[arg(long = "Lam", default_value_t = 1.0)]
        big_lam: f64,
        #[arg(long, default_value_t = 0.1)]
        eps0: f64,
        /// Samples per property; 0 skips verification.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convex envelope of the cone `slope (|x| - 1)` over the doubled unit ball.
    Envelope {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 129)]
        points: usize,
        #[arg(long, default_value_t = 1.0)]
        slope: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a Dirichlet problem on the unit cube with smooth positive data.
    Solve {
        #[arg(long, value_enum, default_value_t = Op::Laplace)]
        operator: Op,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 65)]
        points: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// Grid file for the solution.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Harnack quotients and oscillation decay of a solved positive solution.
    Harnack {
        #[arg(long, value_enum, default_value_t = Op::Laplace)]
        operator: Op,
        #[arg(long, default_value_t = 129)]
        points: usize,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        /// Harnack constant to test; estimated from the solution if absent.
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dyadic cube decomposition on random instances.
    Czd {
        /// Run the randomized battery with direct recounts.
        #[arg(long)]
        demo: bool,
        #[arg(long, default_value_t = 200)]
        instances: u64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        depth: u32,
        #[arg(long, default_value_t = 0.25)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full acceptance battery.
    Suite {
        /// Where to write the criterion reports and scenario outputs.
        #[arg(long, default_value = "abplab-suite")]
        out: PathBuf,
        /// Skip the second, serial run used to check determinism.
        #[arg(long)]
        once: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Laplace,
    PucciPlus,
    PucciMinus,
}

impl Op {
    fn kind(self) -> OperatorKind {
        match self {
            Op::Laplace => OperatorKind::Laplace,
            Op::PucciPlus => OperatorKind::PucciPlus,
            Op::PucciMinus => OperatorKind::PucciMinus,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Writes JSON to `out` if given, else prints it.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let body = to_json(value)?;
    match out {
        Some(path) => atomic_write(path, body.as_bytes()),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn bad(key: &str, e: abplab::Error) -> CliError {
    CliError::invalid(key, e.to_string())
}

fn dispatch(command: Command) -> CliResult<i32> {
    match command {
        Command::Run { config, out, serial } => {
            let cfg = config::load(&config)?;
            let dir = runner::output_dir(out.as_deref(), &cfg);
            let outcome = runner::run(&cfg, &dir, !serial)?;
            for r in &outcome.reports {
                let margins: Vec<String> = r
                    .margin_series()
                    .into_iter()
                    .map(|(v, s)| format!("{v} margin {:.6e}", s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)))
                    .collect();
                let margins = if margins.is_empty() { String::new() } else { format!(": {}", margins.join(", ")) };
                println!("{} {}{margins}", if r.passed { "pass" } else { "FAIL" }, r.name);
            }
            println!("{} scenarios, summary in {}", outcome.reports.len(), dir.join("summary.csv").display());
            let failures = outcome.failures();
            for f in &failures {
                eprintln!("failure: {f}");
            }
            Ok(outcome.exit_code())
        }
        Command::Abp { constant, n, lam, sigma_ln, points, amplitude, out } => {
            let c = c_abp(n, lam).map_err(|e| bad("--lam", e))?;
            let big_c = abp_constant(n, lam, sigma_ln).map_err(|e| bad("--sigma-ln", e))?;
            if constant {
                println!("C_ABP = {c:.16}");
                println!("C     = {big_c:.16}");
                return Ok(0);
            }
            let grid = Grid::new(&vec![0.0; n], 2.25, points).map_err(|e| bad("--points", e))?;
            let ball = Domain::ball(&vec![0.0; n], 1.0)?;
            let u = GridFunction::from_fn(&grid, "u", |x| -amplitude * (1.0 - norm(x).powi(2)))?;
            let params = StructureParams::new(lam, lam)?.with_f(Field::Constant(2.0 * n as f64 * amplitude * lam))?;
            let r = abp_check(&u, &ball, &params)?;
            eprintln!("lhs {:.6e}, rhs {:.6e}, margin {:.6e}", r.lhs, r.rhs, r.margin);
            emit(&r, out.as_deref())?;
            Ok(if r.holds() { 0 } else { 1 })
        }
        Command::Barrier { n, lam, big_lam, eps0, samples, seed, out } => {
            let b = build_barrier(n, lam, big_lam, eps0).map_err(|e| bad("barrier", e))?;
            println!("{}", b.constants_table());
            if samples == 0 {
                if let Some(path) = out {
                    emit(&b, Some(&path))?;
                }
                return Ok(0);
            }
            let check = verify_barrier(&b, samples, seed);
            for r in &check.reports {
                println!("{:<28} checked {:>7}, violations {}", r.name, r.checked, r.violations.len());
            }
            if let Some(path) = out {
                emit(&json!({ "barrier": b, "check": check }), Some(&path))?;
            }
            Ok(if check.passed() { 0 } else { 1 })
        }
        Command::Envelope { n, points, slope, out } => {
            let grid = Grid::new(&vec![0.0; n], 2.0, points).map_err(|e| bad("--points", e))?;
            let ball = Domain::ball(&vec![0.0; n], 1.0)?;
            let u = GridFunction::from_fn(&grid, "u", |x| slope * (norm(x) - 1.0))?;
            let env = convex_envelope(&u, &ball, 0.0)?;
            let cov = gradient_image(&env, 0.0, [201, 41, 13][n - 1]);
            println!(
                "M = {:.6e}, contact nodes in ball {}, max gradient {:.6e}",
                env.m,
                env.contact_nodes_in_ball().len(),
                env.max_gradient()
            );
            println!(
                "gradient image covers {}/{} slopes of the ball of radius {:.6e}",
                cov.covered, cov.samples, cov.outer_radius
            );
            if let Some(path) = out {
                emit(
                    &json!({ "m": env.m, "contact_nodes": env.contact_nodes_in_ball(), "coverage": cov }),
                    Some(&path),
                )?;
            }
            Ok(if cov.covered == cov.samples { 0 } else { 1 })
        }
        Command::Solve { operator, n, points, tol, max_iter, out } => {
            let (u, res) = solve_positive(operator, n, points, tol, max_iter)?;
            println!("{}: converged {}, {} iterations, residual {:.3e}", operator.kind().name(), res.0, res.1, res.2);
            if let Some(path) = out {
                atomic_write(&path, u.to_text().as_bytes())?;
            }
            Ok(if res.0 { 0 } else { 1 })
        }
        Command::Harnack { operator, points, tol, steps, c, out } => {
            let (u, res) = solve_positive(operator, 2, points, tol, 100)?;
            if !res.0 {
                eprintln!("solver did not converge (residual {:e})", res.2);
                return Ok(1);
            }
            let q1 = Domain::cube(&[0.0, 0.0], 1.0)?;
            let params = StructureParams::new(1.0, 2.0)?;
            let h = harnack_report(&u, &q1, &params, c)?;
            let w = weak_harnack_report(&u, &q1, &params, abplab::harnack::DEFAULT_P0, c)?;
            let l = local_max_report(&u, &q1, &params, abplab::harnack::DEFAULT_P, c)?;
            let c_used = match c {
                Some(c) => c,
                None => {
                    let mut m = 1.0f64;
                    for j in 0..steps {
                        m = m.max(empirical_harnack_constant(&u, &subcube(&q1, 0.5f64.powi(j as i32))?, &params)?);
                    }
                    m
                }
            };
            let osc = osc_decay_check(&u, &q1, &params, c_used, steps).map_err(|e| bad("--c", e))?;
            println!("harnack {:.6}, weak harnack {:.6}, local max {:.6}", h.quotient, w.quotient, l.quotient);
            println!(
                "C = {c_used:.6}: alpha from C {:.4}, measured {:?}, recursion holds {}",
                osc.alpha_hypothesis, osc.alpha_measured, osc.passed
            );
            if let Some(path) = out {
                emit(&json!({ "harnack": h, "weak_harnack": w, "local_max": l, "osc_decay": osc }), Some(&path))?;
            }
            let ok = osc.passed && [&h, &w, &l].iter().all(|q| q.passed.unwrap_or(true));
            Ok(if ok { 0 } else { 1 })
        }
        Command::Czd { demo, instances, dim, depth, delta, seed, out } => {
            if demo {
                let start = std::time::Instant::now();
                let (failures, holds) = suite::czd_battery(instances);
                println!(
                    "{holds}/{instances} instances confirmed by direct count in {:.2} s",
                    start.elapsed().as_secs_f64()
                );
                for f in &failures {
                    eprintln!("failure: {f}");
                }
                return Ok(if failures.is_empty() { 0 } else { 1 });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = random_instance(dim, depth, delta, &mut rng).map_err(|e| bad("czd", e))?;
            let r = czd(&a, &b, 1.0, delta)?;
            println!(
                "|A| = {} cells, |B| = {} cells, {} stopped cubes, verdict {:?}",
                r.cells_a,
                r.cells_b,
                r.stopped.len(),
                r.verdict
            );
            if let Some(path) = out {
                emit(&r, Some(&path))?;
            }
            Ok(0)
        }
        Command::Suite { out, once } => {
            let first = suite::run_battery(true, |c| println!("{}", c.line()))?;
            suite::write_run(&first, &out)?;
            let mut ok = first.criteria.iter().all(|c| c.passed);
            if !once {
                let second = suite::run_battery(false, |_| {})?;
                let e2e = suite::end_to_end(&first, &second);
                println!("{}", e2e.line());
                ok &= e2e.passed;
            }
            println!("reports in {}", out.display());
            Ok(if ok { 0 } else { 1 })
        }
    }
}

/// `(converged, iterations, residual)` alongside the solution.
fn solve_positive(
    op: Op,
    n: usize,
    points: usize,
    tol: f64,
    max_iter: usize,
) -> CliResult<(GridFunction, (bool, usize, f64))> {
    let grid = Grid::new(&vec![0.0; n], 1.0, points).map_err(|e| bad("--points", e))?;
    let q1 = Domain::cube(&vec![0.0; n], 1.0)?;
    let g = GridFunction::from_fn(&grid, "g", |x| {
        let y = x.get(1).copied().unwrap_or(0.0);
        1.5 + x[0] + x[0] * y + 0.5 * (4.0 * y).cos()
    })?;
    let spec = OperatorSpec::new(op.kind(), StructureParams::new(1.0, 2.0)?)?;
    let res = solve(&ProblemSpec::new(spec, q1, g)?, tol, max_iter)?;
    Ok((res.u, (res.converged, res.iterations, res.residual_sup)))
}
