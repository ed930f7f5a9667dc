use abplab::grid::{norm, Domain, Field, Grid, GridFunction};
use abplab::pucci::{pucci_minus, Core, OperatorKind, OperatorSpec};
use abplab::solve::{
    generate_radial, pucci_radial_solutions, residual, solve, solve_with, Method, ProblemSpec, RadialOracle,
    RadialProfile,
};
use abplab::StructureParams;
use proptest::prelude::*;

/// Dirichlet data `g` outside the open domain and zero inside.
fn dirichlet(grid: &Grid, domain: &Domain, g: impl Fn(&[f64]) -> f64) -> GridFunction {
    GridFunction::from_fn(grid, "g", |x| if domain.contains_open(x) { 0.0 } else { g(x) }).unwrap()
}

fn op(kind: OperatorKind, lambda: f64, big: f64) -> OperatorSpec {
    OperatorSpec::new(kind, StructureParams::new(lambda, big).unwrap()).unwrap()
}

#[test]
fn laplace_reproduces_affine_data() {
    let grid = Grid::new(&[0.0, 0.0], 2.25, 37).unwrap();
    let dom = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
    let problem =
        ProblemSpec::new(op(OperatorKind::Laplace, 1.0, 1.0), dom.clone(), dirichlet(&grid, &dom, |x| x[0])).unwrap();
    let res = solve(&problem, 1e-10, 20).unwrap();
    assert!(res.converged);
    for i in 0..grid.len() {
        assert!((res.u.value(i) - grid.point(i)[0]).abs() < 1e-12);
    }
}

#[test]
fn m_laplace_in_one_dimension_is_linear() {
    let grid = Grid::new(&[0.0], 2.25, 37).unwrap();
    let dom = Domain::ball(&[0.0], 1.0).unwrap();
    let g = |x: &[f64]| x[0].signum();
    let problem =
        ProblemSpec::new(op(OperatorKind::MLaplace { m: 3.0 }, 1.0, 1.0), dom.clone(), dirichlet(&grid, &dom, g))
            .unwrap();
    let res = solve(&problem, 1e-10, 50).unwrap();
    assert!(res.converged, "{:?}", res.residual_history);
    for i in 0..grid.len() {
        let x = grid.point(i)[0];
        if x.abs() < 1.0 {
            assert!((res.u.value(i) - x).abs() < 1e-9, "x = {x}");
        }
    }
}

fn radial_error(points: usize) -> f64 {
    let (lambda, big) = (1.0, 2.0);
    let sols = pucci_radial_solutions(Core::PucciMinus, 2, lambda, big);
    let sol = sols.iter().find(|s| s.beta > 0.0).copied().unwrap();
    let exact = move |x: &[f64]| sol.sign * norm(x).powf(sol.beta);
    let dom = Domain::cube(&[1.5, 0.0], 1.0).unwrap();
    let grid = Grid::new(&[1.5, 0.0], 1.25, points).unwrap();
    let problem =
        ProblemSpec::new(op(OperatorKind::PucciMinus, lambda, big), dom.clone(), dirichlet(&grid, &dom, exact))
            .unwrap();
    let res = solve(&problem, 1e-10, 100).unwrap();
    assert!(res.converged, "{:?}", res.residual_history);
    (0..grid.len()).map(|i| (res.u.value(i) - exact(&grid.point(i)[..2])).abs()).fold(0.0, f64::max)
}

#[test]
fn pucci_minus_radial_solution_is_approximated() {
    let coarse = radial_error(21);
    let fine = radial_error(41);
    eprintln!("radial M^- error: h = 1/16 -> {coarse:.3e}, h = 1/32 -> {fine:.3e}");
    assert!(fine < 2e-2);
}

#[test]
fn radial_solutions_solve_the_extremal_equations() {
    for n in 1..=3 {
        for (lambda, big) in [(1.0, 1.0), (1.0, 2.0), (0.5, 3.0)] {
            for core in [Core::PucciPlus, Core::PucciMinus] {
                for s in pucci_radial_solutions(core, n, lambda, big) {
                    let oracle = RadialOracle::new(RadialProfile::power(s.sign, s.beta), &vec![0.0; n]);
                    let mut x = vec![0.0; n];
                    x[0] = 0.7;
                    if n > 1 {
                        x[1] = -0.4;
                    }
                    let hess = oracle.hessian(&x).unwrap();
                    let v = core.eval(&hess, lambda, big);
                    assert!(v.abs() < 1e-12 * hess.norm(), "n={n} {core:?} {s:?}: {v}");
                }
            }
        }
    }
    let sols = pucci_radial_solutions(Core::PucciPlus, 2, 1.0, 2.0);
    assert_eq!(sols.len(), 2);
    assert!(sols.iter().any(|s| s.sign == 1.0 && (s.beta - 0.5).abs() < 1e-15));
    assert!(sols.iter().any(|s| s.sign == 1.0 && (s.beta + 1.0).abs() < 1e-15));
}

#[test]
fn radial_oracle_examples() {
    let grid = Grid::new(&[0.0, 0.0], 2.0, 9).unwrap();
    let (u, oracle) = generate_radial(&RadialProfile::quadratic(0.0, 0.5), &grid, &[0.0, 0.0]).unwrap();
    assert!((u.value(0) - 1.0).abs() < 1e-15);
    for x in [[0.0, 0.0], [0.3, -0.8]] {
        let h = oracle.hessian(&x).unwrap();
        assert!((h - abplab::SymMatrix::identity(2)).norm() < 1e-15);
    }
    let (_, cone) = generate_radial(&RadialProfile::power(1.0, 1.0), &grid, &[0.0, 0.0]).unwrap();
    let e = cone.hessian(&[0.0, 0.5]).unwrap().eigenvalues();
    assert!(e[0].abs() < 1e-15 && (e[1] - 2.0).abs() < 1e-15);
    assert!(cone.hessian(&[0.0, 0.0]).is_err());
    assert!(cone.gradient(&[0.0, 0.0]).is_err());

    let (alpha, m1, m2, lambda, big) = (1.5, 1.0, 3.0, 1.0, 2.0);
    let barrier = RadialProfile::new(
        "barrier",
        move |r| m1 - m2 * r.powf(-alpha),
        move |r| alpha * m2 * r.powf(-alpha - 1.0),
        move |r| -alpha * (alpha + 1.0) * m2 * r.powf(-alpha - 2.0),
    );
    let b = RadialOracle::new(barrier, &[0.0; 3]);
    assert!(generate_radial(&b.profile, &Grid::new(&[0.0; 3], 2.0, 3).unwrap(), &[0.0; 3]).is_err());
    let x = [0.4, 1.1, -0.3];
    let r = norm(&x);
    let closed = -alpha * m2 * r.powf(-(alpha + 2.0)) * (big * 2.0 - lambda * (alpha + 1.0));
    let v = pucci_minus(&b.hessian(&x).unwrap(), lambda, big);
    assert!((v - closed).abs() < 1e-12 * closed.abs());
}

#[test]
fn jacobi_agrees_with_policy_iteration() {
    let grid = Grid::new(&[0.0, 0.0], 1.25, 21).unwrap();
    let dom = Domain::cube(&[0.0, 0.0], 1.0).unwrap();
    let mut spec = op(OperatorKind::PucciPlus, 1.0, 3.0);
    spec = spec.with_source(Field::Constant(-1.0));
    let problem = ProblemSpec::new(spec, dom.clone(), dirichlet(&grid, &dom, |x| x[0] * x[1])).unwrap();
    let howard = solve(&problem, 1e-11, 50).unwrap();
    let jacobi = solve_with(&problem, 1e-9, 20_000, Method::Jacobi { damping: 0.8 }).unwrap();
    assert!(howard.converged && jacobi.converged);
    assert!(howard.iterations < 20);
    let diff = howard.u.values().iter().zip(jacobi.u.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff}");
    for w in jacobi.residual_history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{w:?}");
    }
    assert!(residual(&problem, &howard.u).unwrap() <= 1e-11);
}

#[test]
fn homogeneous_family_with_drift_and_absorption() {
    let grid = Grid::new(&[0.0, 0.0], 1.25, 21).unwrap();
    let dom = Domain::cube(&[0.0, 0.0], 1.0).unwrap();
    for alpha in [-0.5, 0.0, 1.0] {
        let kind = OperatorKind::HomogFamily {
            alpha,
            core: Core::PucciMinus,
            b: vec![Field::Constant(0.5), Field::Constant(-0.25)],
            c: 1.0,
            f0: Field::Constant(-1.0),
        };
        let problem = ProblemSpec::new(op(kind, 1.0, 2.0), dom.clone(), dirichlet(&grid, &dom, |x| x[0])).unwrap();
        let res = solve(&problem, 1e-9, 200).unwrap();
        assert!(res.converged, "alpha = {alpha}: {:?}", res.residual_history);
    }
}

#[test]
fn non_convergence_is_reported() {
    let grid = Grid::new(&[0.0, 0.0], 1.25, 21).unwrap();
    let dom = Domain::cube(&[0.0, 0.0], 1.0).unwrap();
    let problem =
        ProblemSpec::new(op(OperatorKind::Laplace, 1.0, 1.0), dom.clone(), dirichlet(&grid, &dom, |x| x[0] * x[0]))
            .unwrap();
    let res = solve_with(&problem, 1e-12, 3, Method::Jacobi { damping: 0.8 }).unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations, 3);
    assert_eq!(res.residual_history.len(), 4);
}

#[test]
fn grid_without_margin_is_rejected() {
    let grid = Grid::new(&[0.0, 0.0], 1.0, 21).unwrap();
    let dom = Domain::cube(&[0.0, 0.0], 1.2).unwrap();
    let g = GridFunction::constant(&grid, "g", 0.0).unwrap();
    assert!(ProblemSpec::new(op(OperatorKind::Laplace, 1.0, 1.0), dom, g).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn discrete_comparison(a in -1.0f64..1.0, b in -1.0f64..1.0, gap in 0.0f64..0.5, k in 1.0f64..4.0) {
        let grid = Grid::new(&[0.0, 0.0], 1.25, 17).unwrap();
        let dom = Domain::cube(&[0.0, 0.0], 1.0).unwrap();
        let spec = op(OperatorKind::PucciPlus, 1.0, 2.5).with_source(Field::Constant(0.5));
        let lo = |x: &[f64]| a * (k * x[0]).sin() + b * x[1] * x[1];
        let hi = |x: &[f64]| lo(x) + gap * (1.0 + x[0] * x[1]);
        let p1 = ProblemSpec::new(spec.clone(), dom.clone(), dirichlet(&grid, &dom, lo)).unwrap();
        let p2 = ProblemSpec::new(spec, dom.clone(), dirichlet(&grid, &dom, hi)).unwrap();
        let u1 = solve(&p1, 1e-11, 50).unwrap();
        let u2 = solve(&p2, 1e-11, 50).unwrap();
        prop_assert!(u1.converged && u2.converged);
        for (x, y) in u1.u.values().iter().zip(u2.u.values()) {
            prop_assert!(*x <= *y + 1e-10);
        }
    }
}
