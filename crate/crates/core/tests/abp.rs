use std::f64::consts::PI;

use abplab::abp::{
    abp_check, abp_constant, abp_singular_bound, abp_singular_minimizer, c_abp, pointwise_condition_check, AbpReport,
};
use abplab::grid::{Domain, Field, Grid, GridFunction};
use abplab::pucci::{Core, OperatorKind, OperatorSpec};
use abplab::solve::{solve, ProblemSpec};
use abplab::StructureParams;
use proptest::prelude::*;

/// `omega_n = pi^(n/2) / Gamma(n/2 + 1)` with the Gamma values written out.
fn omega(n: usize) -> f64 {
    match n {
        1 => PI.sqrt() / (PI.sqrt() / 2.0),
        2 => PI / 1.0,
        3 => PI.powf(1.5) / (3.0 * PI.sqrt() / 4.0),
        _ => unreachable!(),
    }
}

#[test]
fn constant_examples() {
    let c2 = c_abp(2, 1.0).unwrap();
    assert!((c2 - 2.0 / PI).abs() <= 1e-15, "{c2}");
    assert!((abp_constant(2, 1.0, 0.0).unwrap() - 3.0 * (2.0 / PI).exp()).abs() < 1e-14);
    assert!((abp_constant(2, 1.0, 0.0).unwrap() - 5.6702).abs() < 1e-4);
    assert!((c_abp(1, 1.0).unwrap() - 0.25).abs() <= 1e-16);
    for n in 1..=3 {
        let oracle = n as f64 * 2f64.powi(n as i32 - 2) / omega(n);
        assert!((c_abp(n, 1.0).unwrap() - oracle).abs() <= 1e-15 * oracle);
    }
    assert!(c_abp(2, 0.0).is_err());
}

proptest! {
    #[test]
    fn constant_scales_and_is_monotone(n in 1usize..=3, lam in 0.5f64..5.0, k in 0.1f64..10.0, s in 0.0f64..1.0, ds in 0.001f64..1.0) {
        let base = c_abp(n, lam).unwrap();
        let scaled = c_abp(n, k * lam).unwrap();
        prop_assert!((scaled - base * k.powi(-(n as i32))).abs() <= 1e-13 * base.max(scaled));
        let c = abp_constant(n, lam, s).unwrap();
        prop_assert!(abp_constant(n, lam, s + ds).unwrap().is_finite());
        prop_assert!(abp_constant(n, lam, s + ds).unwrap() > c);
        prop_assert!(abp_constant(n, lam * (1.0 + ds), s).unwrap() < c);
        prop_assert!((c - 3.0 * (base * (1.0 + s.powi(n as i32))).exp()).abs() <= 1e-12 * c);
    }

    #[test]
    fn singular_bound_scales_exactly(k in 1e-6f64..1e3, alpha in 0.0f64..4.0, c in 1e-3f64..1e3) {
        let e = 1.0 / (1.0 + alpha);
        let v = abp_singular_bound(k, alpha, 1.0, 1.0).unwrap();
        let vc = abp_singular_bound(c * k, alpha, 1.0, 1.0).unwrap();
        prop_assert!((vc - c.powf(e) * v).abs() <= 1e-13 * vc);
    }

    #[test]
    fn singular_bound_is_the_minimum(k in 1e-3f64..1e2, alpha in 0.05f64..4.0, cd in 0.1f64..10.0) {
        let objective = |m: f64| cd * (m + k / m.powf(alpha));
        let v = abp_singular_bound(k, alpha, cd, 1.0).unwrap();
        let m_star = abp_singular_minimizer(k, alpha).unwrap();
        prop_assert!((objective(m_star) - v).abs() <= 1e-12 * v);
        // Golden-section search on a log scale as an independent minimizer.
        let (mut a, mut b) = ((m_star * 1e-3).ln(), (m_star * 1e3).ln());
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let (x1, x2) = (b - g * (b - a), a + g * (b - a));
            if objective(x1.exp()) < objective(x2.exp()) { b = x2 } else { a = x1 }
        }
        let found = objective(((a + b) / 2.0).exp());
        prop_assert!((found - v).abs() <= 1e-9 * v);
        for t in [0.5, 0.9, 1.1, 2.0] {
            prop_assert!(objective(t * m_star) >= v * (1.0 - 1e-14));
        }
    }
}

#[test]
fn singular_bound_examples() {
    assert_eq!(abp_singular_bound(0.0, 1.5, 2.0, 3.0).unwrap(), 0.0);
    assert!((abp_singular_minimizer(1.0, 1.0).unwrap() - 1.0).abs() <= 1e-12);
    assert!((abp_singular_bound(1.0, 1.0, 1.0, 1.0).unwrap() - 2.0).abs() <= 1e-12);
    assert_eq!(abp_singular_bound(0.7, 0.0, 2.0, 3.0).unwrap(), 3.0 * 2.0 * 0.7);
}

/// `u = -A (d^2 - |x|^2)` with `F = -lambda tr D^2u + 2 n lambda A`.
fn quadratic_case(n: usize, points: usize, a: f64) -> (GridFunction, Domain, StructureParams) {
    let grid = Grid::new(&vec![0.0; n], 2.25, points).unwrap();
    let ball = Domain::ball(&vec![0.0; n], 1.0).unwrap();
    let u = GridFunction::from_fn(&grid, "u", |x| -a * (1.0 - x.iter().map(|v| v * v).sum::<f64>())).unwrap();
    let params = StructureParams::new(1.0, 1.0).unwrap().with_f(Field::Constant(2.0 * n as f64 * a)).unwrap();
    (u, ball, params)
}

#[test]
fn quadratic_supersolution() {
    let a = 2.0;
    // The envelope touches the bowl on B_c with c = 2 - sqrt(3): the tangent
    // lines from |x| = 2 meet the paraboloid there.
    let c = 2.0 - 3f64.sqrt();
    for (n, sizes) in [(1usize, vec![65, 129, 257, 513, 1025]), (2, vec![65, 129])] {
        let vol = omega(n) * c.powi(n as i32);
        let oracle = 2.0 * n as f64 * a * vol.powf(1.0 / n as f64);
        let mut errors = Vec::new();
        for points in sizes {
            let (u, ball, params) = quadratic_case(n, points, a);
            let r = abp_check(&u, &ball, &params).unwrap();
            let h = u.grid().spacing();
            assert!((r.lhs - a).abs() < 1e-12, "{r:?}");
            assert!(r.m_partial > 0.0 && r.m_partial < 2.0 * a * 2f64.sqrt() * h * 1.01, "{r:?}");
            assert!(r.margin > 0.0 && r.holds());
            assert!((r.rhs - (r.m_partial + r.c_used * (r.contact_integral))).abs() < 1e-12);
            assert!((r.c_used - abp_constant(n, 1.0, 0.0).unwrap()).abs() < 1e-14);
            assert!(
                r.contact_integral_half_tol <= r.contact_integral
                    && r.contact_integral <= r.contact_integral_double_tol
            );
            // The contact band around a tangency is O(h) wide, so the
            // discrete set overestimates B_c at first order.
            assert!(r.contact_integral >= oracle);
            errors.push((r.contact_integral - oracle) / oracle);
            println!(
                "n = {n}, N = {points}: K = {:.6}, oracle {oracle:.6}, margin {:.4}",
                r.contact_integral, r.margin
            );
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
        if n == 1 {
            let slope = (errors[0] / errors[4]).ln() / 16f64.ln();
            assert!(slope > 0.7 && *errors.last().unwrap() < 0.03, "{errors:?}, slope {slope}");
        }
    }
}

#[test]
fn nonnegative_function_has_zero_lhs() {
    let grid = Grid::new(&[0.0, 0.0], 2.25, 33).unwrap();
    let ball = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
    let u = GridFunction::from_fn(&grid, "u", |x| 1.0 + x[0] * x[1]).unwrap();
    let r = abp_check(&u, &ball, &StructureParams::new(1.0, 2.0).unwrap()).unwrap();
    assert_eq!((r.lhs, r.m_partial, r.contact_integral), (0.0, 0.0, 0.0));
    assert_eq!(r.margin, 0.0);
}

#[test]
fn cube_domain_is_rejected() {
    let (u, _, params) = quadratic_case(2, 17, 1.0);
    assert!(abp_check(&u, &Domain::cube(&[0.0, 0.0], 1.0).unwrap(), &params).is_err());
}

#[test]
fn pointwise_condition_on_the_quadratic() {
    let (u, ball, params) = quadratic_case(2, 65, 1.5);
    let rep = pointwise_condition_check(&u, &ball, &params).unwrap();
    assert!(rep.passed(), "{:?}", rep.violations.first());
    assert!(rep.checked > 1000);
    assert!(rep.worst_margin.unwrap().abs() < 1e-9, "{:?}", rep.worst_margin);
    let degenerate = params.clone().with_m_f(0.5).unwrap();
    let rep2 = pointwise_condition_check(&u, &ball, &degenerate).unwrap();
    assert!(rep2.skipped > rep.skipped && rep2.checked < rep.checked);
}

/// A solved supersolution (`F(u) = 0` in the ball, `u = 0` outside) and the
/// structure data under which the large-gradient condition holds.
struct Solved {
    name: &'static str,
    u: GridFunction,
    params: StructureParams,
}

fn solved(n: usize, points: usize) -> Vec<Solved> {
    let grid = Grid::new(&vec![0.0; n], 2.25, points).unwrap();
    let ball = Domain::ball(&vec![0.0; n], 1.0).unwrap();
    let zero = GridFunction::constant(&grid, "g", 0.0).unwrap();
    let run =
        |spec: OperatorSpec| solve(&ProblemSpec::new(spec, ball.clone(), zero.clone()).unwrap(), 1e-9, 100).unwrap();
    let base = StructureParams::new(1.0, 2.0).unwrap();
    let source = Field::Grid(GridFunction::from_fn(&grid, "s", |x| 1.0 + 0.5 * x[0]).unwrap());
    let mut out = Vec::new();
    for (name, kind) in [
        ("pucci_plus", OperatorKind::PucciPlus),
        ("pucci_minus", OperatorKind::PucciMinus),
        ("laplace", OperatorKind::Laplace),
    ] {
        let spec = OperatorSpec::new(kind, base.clone()).unwrap().with_source(source.clone());
        let res = run(spec);
        assert!(res.converged, "{name}: {:?}", res.residual_history);
        out.push(Solved { name, u: res.u, params: base.clone().with_f(source.clone()).unwrap() });
    }
    let mut b = vec![Field::Constant(0.0); n];
    b[0] = Field::Constant(1.0);
    let drift = OperatorKind::HomogFamily { alpha: 0.0, core: Core::PucciPlus, b, c: 0.0, f0: Field::Constant(1.0) };
    let res = run(OperatorSpec::new(drift, base.clone()).unwrap());
    assert!(res.converged);
    let params = base.clone().with_sigma(Field::Constant(1.0)).unwrap().with_f(Field::Constant(1.0)).unwrap();
    out.push(Solved { name: "drift", u: res.u, params });
    let degenerate =
        OperatorKind::HomogFamily { alpha: 1.0, core: Core::PucciPlus, b: vec![], c: 0.0, f0: Field::Constant(1.0) };
    let res = run(OperatorSpec::new(degenerate, base.clone()).unwrap());
    assert!(res.converged);
    // |p|^alpha M+(X) + 1 >= 0 with X >= 0, |p| >= M_F gives -lambda tr X + M_F^(-alpha) >= 0.
    let m_f = 0.25;
    let params = base.with_m_f(m_f).unwrap().with_f(Field::Constant(1.0 / m_f)).unwrap();
    out.push(Solved { name: "degenerate", u: res.u, params });
    out
}

#[test]
fn solved_supersolutions_satisfy_the_estimate() {
    for n in [1usize, 2] {
        let mut by_name: Vec<(&str, Vec<AbpReport>)> = Vec::new();
        for points in [65, 129] {
            for s in solved(n, points) {
                let ball = Domain::ball(&vec![0.0; n], 1.0).unwrap();
                let h = s.u.grid().spacing();
                let r = abp_check(&s.u, &ball, &s.params).unwrap();
                println!(
                    "n = {n}, N = {points}, {}: lhs {:.5}, rhs {:.5}, margin {:.5}",
                    s.name, r.lhs, r.rhs, r.margin
                );
                assert!(r.lhs > 0.0);
                assert!(r.margin >= -10.0 * h, "{}: {r:?}", s.name);
                let rep = pointwise_condition_check(&s.u, &ball, &s.params).unwrap();
                assert!(rep.passed(), "{} pointwise: {:?}", s.name, rep.violations.first());
                assert!(rep.checked > 0);
                match by_name.iter_mut().find(|(k, _)| *k == s.name) {
                    Some((_, v)) => v.push(r),
                    None => by_name.push((s.name, vec![r])),
                }
            }
        }
        for (name, reports) in by_name {
            assert!(reports.last().unwrap().margin >= 0.0, "{name}: finest margin negative");
        }
    }
}

#[test]
fn optimizing_the_threshold_matches_the_singular_bound() {
    let n = 2;
    let alpha = 1.0;
    let s = solved(n, 65).into_iter().find(|s| s.name == "degenerate").unwrap();
    let ball = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
    let unit = StructureParams::new(1.0, 2.0).unwrap().with_f(Field::Constant(1.0)).unwrap();
    let k0 = abp_check(&s.u, &ball, &unit).unwrap();
    let c = k0.c_used;
    let bound = abp_singular_bound(k0.contact_integral, alpha, 1.0, c).unwrap();
    let mut best = f64::INFINITY;
    for i in 0..60 {
        let m_f = 10f64.powf(-3.0 + 4.0 * i as f64 / 59.0);
        let p = unit.clone().with_m_f(m_f).unwrap().with_f(Field::Constant(m_f.powf(-alpha))).unwrap();
        let r = abp_check(&s.u, &ball, &p).unwrap();
        assert!(r.margin >= 0.0);
        let excess = r.rhs - r.m_partial;
        assert!(excess >= bound * (1.0 - 1e-12));
        best = best.min(excess);
    }
    assert!(best <= bound * 1.01, "{best} vs {bound}");
    assert!(k0.lhs <= k0.m_partial + bound);
}
