use abplab::grid::{Domain, Field, Grid, GridFunction};
use abplab::measure::lp_norm;
use abplab::solve::{cole_hopf, rescale, rescale_params, ColeHopf, Rescaling};
use abplab::{Error, StructureParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> StructureParams {
    StructureParams::new(1.0, 2.0)
        .unwrap()
        .with_m_f(3.0)
        .unwrap()
        .with_gamma(0.5)
        .unwrap()
        .with_sigma2(0.25)
        .unwrap()
        .with_sigma(Field::Constant(1.5))
        .unwrap()
        .with_f(Field::Constant(-2.0))
        .unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn unit_rescaling_is_the_identity() {
    let grid = Grid::new(&[0.0, 0.0], 2.0, 17).unwrap();
    let u = GridFunction::from_fn(&grid, "u", |x| x[0].sin() + x[1] * x[1]).unwrap();
    let s = Rescaling::new(&[0.0, 0.0], 1.0, 1.0).unwrap();
    let (us, ps) = rescale(&u, &params(), &s, &grid).unwrap();
    assert_eq!(us.values(), u.values());
    assert_eq!(ps, params());
}

#[test]
fn parameters_follow_the_scaling_formulas() {
    let grid = Grid::new(&[0.0, 0.0], 1.0, 5).unwrap();
    let s = Rescaling::new(&[0.25, -0.5], 0.5, 4.0).unwrap();
    let ps = rescale_params(&params(), &s, &grid).unwrap();
    assert_eq!(ps.m_f, 0.5 * 3.0 / 4.0);
    assert_eq!(ps.gamma, 0.25 * 0.5);
    assert_eq!(ps.sigma2, 4.0 * 0.25);
    assert_eq!(ps.sigma.as_constant(), Some(0.5 * 1.5));
    assert_eq!(ps.f.as_constant(), Some(0.25 / 4.0 * -2.0));
    assert_eq!((ps.lambda, ps.big_lambda), (1.0, 2.0));
}

#[test]
fn rescalings_compose() {
    let grid = Grid::new(&[0.0, 0.0], 1.0, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..200 {
        // Dyadic factors keep every product exact.
        let dyadic = |rng: &mut ChaCha8Rng| 2f64.powi(rng.random_range(-6..=6));
        let (t1, m1, t2, m2) = (dyadic(&mut rng), dyadic(&mut rng), dyadic(&mut rng), dyadic(&mut rng));
        let s1 = Rescaling::new(&[0.5, 0.25], t1, m1).unwrap();
        let s2 = Rescaling::new(&[-0.25, 0.125], t2, m2).unwrap();
        let twice = rescale_params(&rescale_params(&params(), &s1, &grid).unwrap(), &s2, &grid).unwrap();
        let once = rescale_params(&params(), &s1.then(&s2), &grid).unwrap();
        assert_eq!(twice, once, "dyadic trial {trial}");

        let (t1, m1, t2, m2) = (
            rng.random_range(0.1..3.0),
            rng.random_range(0.1..3.0),
            rng.random_range(0.1..3.0),
            rng.random_range(0.1..3.0),
        );
        let s1 = Rescaling::new(&[0.5, 0.25], t1, m1).unwrap();
        let s2 = Rescaling::new(&[-0.25, 0.125], t2, m2).unwrap();
        let twice = rescale_params(&rescale_params(&params(), &s1, &grid).unwrap(), &s2, &grid).unwrap();
        let once = rescale_params(&params(), &s1.then(&s2), &grid).unwrap();
        for (a, b) in [
            (twice.m_f, once.m_f),
            (twice.gamma, once.gamma),
            (twice.sigma2, once.sigma2),
            (twice.sigma.as_constant().unwrap(), once.sigma.as_constant().unwrap()),
            (twice.f.as_constant().unwrap(), once.f.as_constant().unwrap()),
        ] {
            assert!(close(a, b, 4.0 * f64::EPSILON), "{a} vs {b}");
        }
    }
}

#[test]
fn composed_maps_agree_on_points() {
    let s1 = Rescaling::new(&[1.0, 2.0], 0.5, 3.0).unwrap();
    let s2 = Rescaling::new(&[-1.0, 0.5], 0.25, 2.0).unwrap();
    let y = [0.3, -0.7];
    let direct = s1.map(&s2.map(&y));
    let composed = s1.then(&s2).map(&y);
    for k in 0..2 {
        assert!((direct[k] - composed[k]).abs() < 1e-15);
    }
}

#[test]
fn escaping_target_is_rejected() {
    let grid = Grid::new(&[0.0, 0.0], 1.0, 9).unwrap();
    let u = GridFunction::constant(&grid, "u", 1.0).unwrap();
    let s = Rescaling::new(&[0.4, 0.0], 0.5, 1.0).unwrap();
    let target = Grid::new(&[0.0, 0.0], 1.0, 9).unwrap();
    assert!(matches!(rescale(&u, &params(), &s, &target), Err(Error::EscapesGrid)));
    assert!(Rescaling::new(&[0.0, 0.0], 0.0, 1.0).is_err());
    assert!(Rescaling::new(&[0.0, 0.0], 1.0, -1.0).is_err());
}

/// Both sides of the two norm identities for a rescaling of `Q_{t0}(x0)`
/// onto `Q_1`: `(|f_s|_n, t0/M0 |f|_n, |sigma_s|_q, t0^(1-n/q) |sigma|_q)`.
fn norm_sides(sigma: Field, f: Field, source: &Grid, target: &Grid, s: &Rescaling, q: f64) -> [f64; 4] {
    let n = target.dim() as f64;
    let p = params().with_sigma(sigma.clone()).unwrap().with_f(f.clone()).unwrap();
    let ps = rescale_params(&p, s, target).unwrap();
    let big = Domain::cube(&s.x0, s.t0).unwrap();
    let unit = Domain::cube(&vec![0.0; target.dim()], 1.0).unwrap();
    let fs = ps.f.sample_on(target, "f_s").unwrap();
    let ss = ps.sigma.sample_on(target, "sigma_s").unwrap();
    let f0 = f.sample_on(source, "f").unwrap();
    let s0 = sigma.sample_on(source, "sigma").unwrap();
    [
        lp_norm(&fs, n, &unit).unwrap(),
        s.t0 / s.m0 * lp_norm(&f0, n, &big).unwrap(),
        lp_norm(&ss, q, &unit).unwrap(),
        s.t0.powf(1.0 - n / q) * lp_norm(&s0, q, &big).unwrap(),
    ]
}

#[test]
fn norm_identities_are_exact_for_constant_fields() {
    for n in [2usize, 3] {
        let x0 = vec![0.3; n];
        let s = Rescaling::new(&x0, 0.5, 4.0).unwrap();
        let source = Grid::new(&x0, 0.5, 9).unwrap();
        let target = Grid::new(&vec![0.0; n], 1.0, 9).unwrap();
        let c = 1.7;
        let q = n as f64 + 1.5;
        let [a, b, c1, d] = norm_sides(Field::Constant(c), Field::Constant(c), &source, &target, &s, q);
        assert!(close(a, b, 1e-13), "{a} vs {b}");
        assert!(close(c1, d, 1e-13), "{c1} vs {d}");
        assert!(close(c1, s.t0 * c, 1e-13));
    }
}

#[test]
fn norm_identities_converge_at_second_order_for_smooth_fields() {
    let x0 = [0.3, -0.2];
    let s = Rescaling::new(&x0, 0.5, 2.0).unwrap();
    let q = 3.5;
    let mut errors = Vec::new();
    let mut spacings = Vec::new();
    for k in 3..=7 {
        let nt = (1usize << k) + 1;
        let ns = 3 * (1usize << (k - 1)) + 1;
        let source = Grid::new(&x0, 0.5, ns).unwrap();
        let target = Grid::new(&[0.0, 0.0], 1.0, nt).unwrap();
        let f = Field::Grid(
            GridFunction::from_fn(&source, "f", |x| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + 2.0).unwrap(),
        );
        let sigma = Field::Grid(GridFunction::from_fn(&source, "sigma", |x| (x[0] * x[1] + 1.0).exp()).unwrap());
        let [a, b, c, d] = norm_sides(sigma, f, &source, &target, &s, q);
        errors.push(((a - b) / b).abs().max(((c - d) / d).abs()));
        spacings.push(target.spacing());
    }
    let m = errors.len();
    let slope = (errors[m - 1] / errors[0]).ln() / (spacings[m - 1] / spacings[0]).ln();
    println!("relative errors {errors:?}, slope {slope:.3}");
    assert!(slope >= 1.9, "slope {slope}");
}

#[test]
fn cole_hopf_solves_its_ode() {
    for (lambda, sigma2) in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.1)] {
        let ch = ColeHopf::new(lambda, sigma2).unwrap();
        assert_eq!(ch.h(0.0), 0.0);
        assert_eq!(ch.dh(0.0), 1.0);
        let tmax = ch.t_max();
        let mut prev = (ch.h(0.0), ch.dh(0.0));
        for i in 1..=1000 {
            let t = 0.999 * tmax * i as f64 / 1000.0;
            let r = lambda * ch.d2h(t) - sigma2 * ch.dh(t).powi(2);
            assert!(r.abs() < 1e-10 * ch.dh(t).powi(2).max(1.0), "residual {r} at t = {t}");
            assert!(ch.d2h(t) > 0.0);
            assert!(ch.h(t) > prev.0 && ch.dh(t) > prev.1);
            prev = (ch.h(t), ch.dh(t));
            assert!(close(ch.inverse(ch.h(t)), t, 1e-12));
        }
    }
}

#[test]
fn cole_hopf_examples() {
    let grid = Grid::new(&[0.0], 1.0, 5).unwrap();
    let zero = GridFunction::constant(&grid, "u", 0.0).unwrap();
    assert!(cole_hopf(&zero, 1.0, 1.0).unwrap().values().iter().all(|&v| v == 0.0));
    let ln2 = GridFunction::constant(&grid, "u", 2f64.ln()).unwrap();
    for &v in cole_hopf(&ln2, 1.0, 1.0).unwrap().values() {
        assert!((v - 0.5).abs() < 1e-15);
    }
    let ch = ColeHopf::new(1.0, 1.0).unwrap();
    assert!((ch.h(0.5) - 2f64.ln()).abs() < 1e-15);
    let u = GridFunction::from_fn(&grid, "u", |x| x[0] + 1.0).unwrap();
    assert_eq!(cole_hopf(&u, 2.0, 0.0).unwrap().values(), u.values());
    let neg = GridFunction::from_fn(&grid, "u", |x| x[0]).unwrap();
    assert!(cole_hopf(&neg, 1.0, 1.0).is_err());
}

#[test]
fn cole_hopf_sandwich_on_random_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = Grid::new(&[0.0, 0.0], 1.0, 17).unwrap();
    for _ in 0..10 {
        let lambda = rng.random_range(0.2..3.0);
        let sigma2 = rng.random_range(0.05..4.0);
        let scale = rng.random_range(0.01..5.0);
        let values: Vec<f64> = (0..grid.len()).map(|_| scale * rng.random::<f64>()).collect();
        let u = GridFunction::from_values(grid.clone(), "u", values).unwrap();
        let v = cole_hopf(&u, lambda, sigma2).unwrap();
        let m = u.max_abs();
        let a = sigma2 * m / lambda;
        let factor = -(-a).exp_m1() / a;
        for (&ui, &vi) in u.values().iter().zip(v.values()) {
            assert!(factor * ui <= vi * (1.0 + 1e-15) && vi <= ui, "{factor} {ui} {vi}");
        }
    }
}
