use abplab::grid::{Domain, Field, Grid, GridFunction};
use abplab::harnack::{
    czd, empirical_harnack_constant, fit_decay, harnack_report, holder_seminorm, level_set_decay, local_max_report,
    log_levels, osc_decay_check, random_instance, stopped_cubes, subcube, weak_harnack_report, CellSet, CzdVerdict,
    DyadicCube,
};
use abplab::pucci::{OperatorKind, OperatorSpec};
use abplab::solve::{rescale, solve, ProblemSpec, Rescaling};
use abplab::StructureParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn unit(n: usize, points: usize) -> (Grid, Domain) {
    (Grid::new(&vec![0.0; n], 1.0, points).unwrap(), Domain::cube(&vec![0.0; n], 1.0).unwrap())
}

fn plain() -> StructureParams {
    StructureParams::new(1.0, 2.0).unwrap()
}

#[test]
fn quotient_examples() {
    let (grid, q1) = unit(2, 65);
    let affine = GridFunction::from_fn(&grid, "u", |x| x[0] + 1.0).unwrap();
    let r = harnack_report(&affine, &q1, &plain(), Some(2.0)).unwrap();
    assert_eq!((r.lhs, r.base), (1.25, 0.75));
    assert!((r.quotient - 5.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.passed, Some(true));
    assert_eq!(harnack_report(&affine, &q1, &plain(), Some(1.6)).unwrap().passed, Some(false));

    let c = GridFunction::constant(&grid, "c", 2.5).unwrap();
    assert_eq!(harnack_report(&c, &q1, &plain(), None).unwrap().quotient, 1.0);

    let bump = GridFunction::from_fn(&grid, "u", |x| x[0].max(0.0)).unwrap();
    let r = harnack_report(&bump, &q1, &plain(), None).unwrap();
    assert!(r.infinite && r.quotient.is_infinite());
    // Data in the denominator removes the singularity.
    let r = harnack_report(&bump, &q1, &plain().with_m_f(0.5).unwrap(), None).unwrap();
    assert!(!r.infinite && (r.quotient - 0.5).abs() < 1e-15);

    let negative = GridFunction::from_fn(&grid, "u", |x| x[0]).unwrap();
    assert!(harnack_report(&negative, &q1, &plain(), None).is_err());
}

#[test]
fn integral_quotients_of_constants() {
    for n in 1..=3 {
        let (grid, q1) = unit(n, if n == 3 { 33 } else { 65 });
        let c = GridFunction::constant(&grid, "c", 3.0).unwrap();
        for p0 in [0.25, 0.5, 1.0, 2.0] {
            let r = weak_harnack_report(&c, &q1, &plain(), p0, None).unwrap();
            let oracle = 0.25f64.powf(n as f64 / p0);
            assert!((r.quotient - oracle).abs() <= 1e-12 * oracle, "n = {n}, p0 = {p0}: {}", r.quotient);
            assert_eq!(r.exponent, Some(p0));
        }
        let one = GridFunction::constant(&grid, "one", 1.0).unwrap();
        for p in [0.5, 1.0, 3.0] {
            let r = local_max_report(&one, &q1, &plain(), p, Some(2f64.powf(n as f64 / p))).unwrap();
            assert!((r.quotient - 2f64.powf(n as f64 / p)).abs() <= 1e-12 * r.quotient);
            assert_eq!(r.passed, Some(true));
        }
        let below = GridFunction::constant(&grid, "neg", -1.0).unwrap();
        let r = local_max_report(&below, &q1, &plain(), 1.0, Some(1e-9)).unwrap();
        assert!(r.lhs <= 0.0 && r.quotient == 0.0 && r.passed == Some(true));
    }
}

#[test]
fn quotient_is_invariant_under_joint_scaling() {
    let (grid, q1) = unit(2, 65);
    let u = GridFunction::from_fn(&grid, "u", |x| 1.0 + x[0] * x[0] + 0.3 * x[1]).unwrap();
    let f = |x: &[f64]| 0.2 + x[0] * x[1];
    let params = plain().with_f(Field::Grid(GridFunction::from_fn(&grid, "f", f).unwrap())).unwrap();
    let base = harnack_report(&u, &q1, &params, None).unwrap().quotient;
    for k in [1e-3, 0.5, 7.0, 1e4] {
        let uk = u.map("uk", |v| k * v).unwrap();
        let pk = plain().with_f(Field::Grid(GridFunction::from_fn(&grid, "f", |x| k * f(x)).unwrap())).unwrap();
        let q = harnack_report(&uk, &q1, &pk, None).unwrap().quotient;
        assert!((q - base).abs() <= 1e-13 * base, "k = {k}: {q} vs {base}");
    }
}

/// The quotient of `u_s(y) = u(x0 + r y) / M0` on `Q_1` equals the quotient
/// of `u` on `Q_r(x0)` with the data term scaled by `r`.
#[test]
fn quotient_follows_the_rescaling() {
    let (grid, _) = unit(2, 129);
    let u = GridFunction::from_fn(&grid, "u", |x| 2.0 + (3.0 * x[0]).sin() + x[1] * x[1]).unwrap();
    let f = Field::Grid(GridFunction::from_fn(&grid, "f", |x| 0.4 + x[0] - x[1] * x[1]).unwrap());
    let params = plain().with_f(f).unwrap().with_m_f(0.05).unwrap();
    for (x0, r) in [([0.0, 0.0], 0.5), ([0.125, -0.25], 0.25), ([-0.1875, 0.0625], 0.5)] {
        let window = Domain::cube(&x0, r).unwrap();
        let cells = (r * 128.0) as usize;
        let target = Grid::new(&[0.0, 0.0], 1.0, cells + 1).unwrap();
        for m0 in [1.0, 0.3, 5.0] {
            let (us, ps) = rescale(&u, &params, &Rescaling::new(&x0, r, m0).unwrap(), &target).unwrap();
            let q1 = Domain::cube(&[0.0, 0.0], 1.0).unwrap();
            let scaled = harnack_report(&us, &q1, &ps, None).unwrap();
            let direct = harnack_report(&u, &window, &params, None).unwrap();
            let oracle = direct.lhs / (direct.base + r * direct.forcing);
            assert!(
                (scaled.quotient - oracle).abs() <= 1e-12 * oracle,
                "{x0:?}, {r}, {m0}: {} vs {oracle}",
                scaled.quotient
            );
        }
    }
}

#[test]
fn holder_examples() {
    let (grid, q1) = unit(2, 65);
    let half = subcube(&q1, 0.5).unwrap();
    let c = GridFunction::constant(&grid, "c", 4.0).unwrap();
    assert_eq!(holder_seminorm(&c, 0.5, &half).unwrap(), 0.0);
    let line = GridFunction::from_fn(&grid, "u", |x| x[0]).unwrap();
    assert!((holder_seminorm(&line, 1.0, &half).unwrap() - 1.0).abs() < 1e-12);
    let root = GridFunction::from_fn(&grid, "u", |x| x[0].abs().sqrt()).unwrap();
    let s = holder_seminorm(&root, 0.5, &half).unwrap();
    assert!((s - 1.0).abs() <= 1e-6, "{s}");
    assert!(holder_seminorm(&root, 0.0, &half).is_err());
    assert!(holder_seminorm(&root, 1.5, &half).is_err());
}

#[test]
fn sampled_holder_is_a_lower_bound_close_to_the_truth() {
    let (grid, q1) = unit(2, 257);
    let half = subcube(&q1, 0.5).unwrap();
    let root = GridFunction::from_fn(&grid, "u", |x| x[0].abs().sqrt()).unwrap();
    let s = holder_seminorm(&root, 0.5, &half).unwrap();
    assert!(s <= 1.0 + 1e-12 && s > 0.95, "{s}");
    assert_eq!(s, holder_seminorm(&root, 0.5, &half).unwrap());
    let line = GridFunction::from_fn(&grid, "u", |x| x[0] - 2.0 * x[1]).unwrap();
    let s = holder_seminorm(&line, 1.0, &half).unwrap();
    assert!(s <= 5f64.sqrt() * (1.0 + 1e-12) && s > 0.99 * 5f64.sqrt(), "{s}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn holder_is_monotone_in_alpha(a in -1.0f64..1.0, b in -1.0f64..1.0, k in 1.0f64..6.0, a1 in 0.05f64..1.0, a2 in 0.05f64..1.0) {
        let (grid, q1) = unit(2, 33);
        let half = subcube(&q1, 0.5).unwrap();
        // Values in [0, 1], so the oscillation is at most 1.
        let u = GridFunction::from_fn(&grid, "u", |x| 0.5 + 0.5 * (k * (a * x[0] + b * x[1])).sin()).unwrap();
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        prop_assert!(holder_seminorm(&u, lo, &half).unwrap() <= holder_seminorm(&u, hi, &half).unwrap() * (1.0 + 1e-12) || lo == hi);
    }

    #[test]
    fn decay_fit_is_an_upper_envelope(ms in proptest::collection::vec(0.0f64..1.0, 8..20), start in 0.1f64..10.0) {
        let ts = log_levels(start, start * 100.0, ms.len());
        let samples: Vec<(f64, f64)> = ts.into_iter().zip(ms).collect();
        let fit = fit_decay(samples.clone()).unwrap();
        for (t, m) in samples {
            if m > 0.0 {
                prop_assert!(m <= fit.bound(t) * (1.0 + 1e-12), "{m} > {}", fit.bound(t));
            }
        }
    }
}

#[test]
fn holder_seminorm_grows_with_alpha_on_short_pairs() {
    // |x - y| <= 1 on Q_1/2, so |x - y|^alpha shrinks and the quotient grows with alpha.
    let (grid, q1) = unit(2, 65);
    let half = subcube(&q1, 0.5).unwrap();
    let u = GridFunction::from_fn(&grid, "u", |x| (x[0].abs() + x[1].abs()).powf(0.3)).unwrap();
    let values: Vec<f64> =
        [0.1, 0.2, 0.3, 0.5, 0.8, 1.0].iter().map(|&a| holder_seminorm(&u, a, &half).unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]), "{values:?}");
}

#[test]
fn oscillation_of_affine_functions() {
    let (grid, q1) = unit(2, 129);
    let u = GridFunction::from_fn(&grid, "u", |x| x[0] + 0.5 * x[1]).unwrap();
    let r = osc_decay_check(&u, &q1, &plain(), 3.0, 4).unwrap();
    assert!(r.passed, "{r:?}");
    assert_eq!(r.steps.len(), 4);
    for s in &r.steps {
        assert!((s.osc_inner - 0.5 * s.osc_outer).abs() < 1e-12);
        assert!((s.osc_outer - 1.5 * 0.5f64.powi(s.step as i32)).abs() < 1e-12);
    }
    assert_eq!(r.alpha_hypothesis, 1.0);
    assert!((r.alpha_measured.unwrap() - 1.0).abs() < 1e-12);
    assert!(!osc_decay_check(&u, &q1, &plain(), 2.9, 4).unwrap().passed);
    let c = GridFunction::constant(&grid, "c", 1.0).unwrap();
    let r = osc_decay_check(&c, &q1, &plain(), 1.5, 3).unwrap();
    assert!(r.passed && r.steps.iter().all(|s| s.osc_inner == 0.0));
    assert!(osc_decay_check(&c, &q1, &plain(), 1.0, 3).is_err());
}

#[test]
fn oscillation_with_unit_scaling_decays() {
    // With M0 = 1 the windows keep the raw values, so the oscillation of a
    // smooth function shrinks like 2^-j and the measured exponent is 1.
    let (grid, q1) = unit(1, 1025);
    let u = GridFunction::from_fn(&grid, "u", |x| (2.0 * x[0]).sin()).unwrap();
    let r = osc_decay_check(&u, &q1, &plain(), 5.0, 6).unwrap();
    assert!(r.passed);
    let ratios: Vec<f64> = r.steps.iter().map(|s| s.osc_inner / s.osc_outer).collect();
    // The function looks more and more affine on shrinking windows.
    assert!(ratios.windows(2).all(|w| w[1] < w[0] && w[1] > 0.5), "{ratios:?}");
    assert!((ratios.last().unwrap() - 0.5).abs() < 1e-3, "{ratios:?}");
    assert!((r.alpha_measured.unwrap() - 1.0).abs() < 0.05, "{:?}", r.alpha_measured);
}

/// Positive solutions of uniformly elliptic problems on `Q_1` with `f = 0`.
fn positive_solutions(points: usize) -> Vec<(&'static str, GridFunction)> {
    let (grid, q1) = unit(2, points);
    let g = GridFunction::from_fn(&grid, "g", |x| 1.5 + x[0] + x[0] * x[1] + 0.5 * (4.0 * x[1]).cos()).unwrap();
    [
        ("laplace", OperatorKind::Laplace),
        ("pucci_plus", OperatorKind::PucciPlus),
        ("pucci_minus", OperatorKind::PucciMinus),
    ]
    .into_iter()
    .map(|(name, kind)| {
        let spec = OperatorSpec::new(kind, plain()).unwrap();
        let res = solve(&ProblemSpec::new(spec, q1.clone(), g.clone()).unwrap(), 1e-7, 100).unwrap();
        assert!(res.converged, "{name}, N = {points}: {:?}", res.residual_history);
        (name, res.u)
    })
    .collect()
}

#[test]
fn harnack_quotients_are_stable_under_refinement() {
    let mut table: Vec<Vec<[f64; 3]>> = Vec::new();
    for points in [65, 129, 257] {
        let (_, q1) = unit(2, points);
        let mut row = Vec::new();
        for (name, u) in positive_solutions(points) {
            let h = harnack_report(&u, &q1, &plain(), None).unwrap();
            let w = weak_harnack_report(&u, &q1, &plain(), 0.5, None).unwrap();
            let l = local_max_report(&u, &q1, &plain(), 1.0, None).unwrap();
            assert!(h.quotient.is_finite() && h.quotient >= 1.0);
            println!(
                "N = {points}, {name}: harnack {:.6}, weak {:.6}, local max {:.6}",
                h.quotient, w.quotient, l.quotient
            );
            row.push([h.quotient, w.quotient, l.quotient]);
        }
        table.push(row);
    }
    for w in table.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            for k in 0..3 {
                assert!((b[k] - a[k]).abs() < 0.1 * a[k], "{a:?} -> {b:?}");
            }
        }
    }
}

#[test]
fn solved_solutions_satisfy_the_oscillation_recursion() {
    let (_, q1) = unit(2, 257);
    let steps = 4usize;
    for (name, u) in positive_solutions(257) {
        // The recursion uses Harnack for u - inf u and sup u - u on every
        // window of the chain; take the largest observed constant.
        let c = (0..steps)
            .map(|j| empirical_harnack_constant(&u, &subcube(&q1, 0.5f64.powi(j as i32)).unwrap(), &plain()).unwrap())
            .fold(1.0, f64::max);
        let r = osc_decay_check(&u, &q1, &plain(), c, steps).unwrap();
        println!("{name}: C = {c:.4}, alpha from C {:.4}, measured {:?}", r.alpha_hypothesis, r.alpha_measured);
        assert!(c.is_finite() && c > 1.0);
        assert!(r.passed, "{name}: {:?}", r.steps);
        assert_eq!(r.steps.len(), steps);
        assert!(r.alpha_measured.unwrap() > 0.5);
    }
}

#[test]
fn power_profile_decay_is_recovered() {
    // u = c |x|_inf^(-n/eps0): {u >= t} is the cube of side 2 (c/t)^(eps0/n).
    for (n, points, eps0) in [(1usize, 4001usize, 0.7), (2, 601, 1.0), (2, 601, 1.5)] {
        let grid = Grid::new(&vec![0.0; n], 2.0, points).unwrap();
        let cube = Domain::cube(&vec![0.0; n], 2.0).unwrap();
        let c = 1.0;
        // Capped at the center node; the sampled levels never reach the cap.
        let floor = grid.spacing() / 4.0;
        let u = GridFunction::from_fn(&grid, "u", |x| {
            c * x.iter().fold(floor, |m, v| m.max(v.abs())).powf(-(n as f64) / eps0)
        })
        .unwrap();
        // Half-sides from 0.9 down to 0.05.
        let ts = log_levels(c * 0.9f64.powf(-(n as f64) / eps0), c * 0.05f64.powf(-(n as f64) / eps0), 12);
        let fit = level_set_decay(&u, &cube, &ts).unwrap();
        for &(t, m) in &fit.samples {
            let exact = 2f64.powi(n as i32) * (c / t).powf(eps0);
            assert!((m - exact).abs() < 0.05 * exact, "t = {t}: {m} vs {exact}");
        }
        assert!((fit.eps_fit - eps0).abs() < 0.05 * eps0, "n = {n}: {} vs {eps0}", fit.eps_fit);
        assert!(fit.residuals.iter().all(|&r| r >= -1e-12));
    }
}

#[test]
fn discrete_chain_gives_the_predicted_exponent() {
    // u = M_B^k on the shell between the nested cubes with |Q^k| = (1 - mu)^k |Q_r|.
    for (n, points) in [(1usize, 8193usize), (2, 1025)] {
        for (mu, m_b) in [(0.3f64, 4.0f64), (0.5, 3.0), (0.1, 10.0)] {
            let kmax = 10;
            let half_side = |k: i32| (1.0f64 - mu).powf(k as f64 / n as f64);
            let grid = Grid::new(&vec![0.0; n], 2.0, points).unwrap();
            let cube = Domain::cube(&vec![0.0; n], 2.0).unwrap();
            let u = GridFunction::from_fn(&grid, "u", |x| {
                let r = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let k = (0..=kmax).take_while(|&k| r <= half_side(k)).last().unwrap_or(0);
                m_b.powi(k)
            })
            .unwrap();
            let ts: Vec<f64> = (0..kmax).map(|k| m_b.powi(k)).collect();
            let fit = level_set_decay(&u, &cube, &ts).unwrap();
            let eps = -(1.0 - mu).ln() / m_b.ln();
            assert!((fit.eps_fit - eps).abs() < 0.05 * eps, "n = {n}, mu = {mu}: {} vs {eps}", fit.eps_fit);
            assert!((fit.d_fit / 2f64.powi(n as i32) - 1.0).abs() < 0.05, "d = {}", fit.d_fit);
        }
    }
}

#[test]
fn bounded_functions_give_degenerate_fits() {
    let (grid, q1) = unit(2, 65);
    let c = GridFunction::constant(&grid, "c", 2.0).unwrap();
    let fit = level_set_decay(&c, &q1, &log_levels(0.5, 50.0, 10)).unwrap();
    assert!(fit.is_step());
    assert_eq!(fit.zero_tail, 7);
    assert!(fit.samples.iter().take(3).all(|s| s.1 == 1.0));
    assert!(level_set_decay(&c, &q1, &log_levels(0.5, 50.0, 7)).is_err());
    assert!(level_set_decay(&c, &q1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 6.5]).is_err());
    assert!(fit.to_csv().lines().count() == 12);
}

fn brute_count(set: &CellSet, q: &DyadicCube) -> usize {
    let side = 1u64 << set.depth;
    let shift = set.depth - q.level;
    let mut count = 0;
    for c in 0..(side as usize).pow(set.dim as u32) {
        let mut m = [0u64; 3];
        let mut rest = c as u64;
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

#[test]
fn randomized_decompositions_confirm_covering() {
    let start = std::time::Instant::now();
    let results: Vec<(usize, CzdVerdict)> = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 1 + (seed % 3) as usize;
            let depth = [9, 5, 3][dim - 1] + (seed / 3 % 2) as u32;
            let delta = [0.1, 0.25, 0.5, 0.7][(seed % 4) as usize];
            let (a, b) = random_instance(dim, depth, delta, &mut rng).unwrap();
            let r = czd(&a, &b, 1.0, delta).unwrap();
            // Independent recount of every claim.
            let root = DyadicCube::root(dim);
            let (na, nb) = (brute_count(&a, &root), brute_count(&b, &root));
            assert_eq!((na, nb), (r.cells_a, r.cells_b));
            assert!(na as f64 <= delta * r.cells_total as f64);
            for q in &r.stopped {
                let vol = 1usize << ((depth - q.level) as usize * dim);
                assert!(brute_count(&a, q) as f64 > delta * vol as f64);
                let p = q.parent().unwrap();
                assert_eq!(brute_count(&b, &p), vol << dim, "predecessor not inside B");
                assert!(brute_count(&a, &p) as f64 <= delta * (vol << dim) as f64, "stopped cube is not maximal");
            }
            for i in 0..r.stopped.len() {
                for j in i + 1..r.stopped.len() {
                    let (x, y) = (r.stopped[i], r.stopped[j]);
                    assert!(!x.contains(&y) && !y.contains(&x));
                }
            }
            let covered: usize = r.stopped.iter().map(|q| brute_count(&a, q)).sum();
            assert_eq!(covered, na, "stopped cubes must cover A");
            if r.verdict == CzdVerdict::Holds {
                assert!(na as f64 <= delta * nb as f64);
                assert!(r.measure_a() <= delta * r.measure_b() * (1.0 + 1e-12));
            }
            (seed as usize, r.verdict)
        })
        .collect();
    assert!(results.iter().all(|(_, v)| *v == CzdVerdict::Holds), "{results:?}");
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn counter_hypothesis_instance_makes_no_claim() {
    for dim in 1..=3 {
        let delta = 0.5f64.powi(dim as i32);
        let q = DyadicCube::root(dim).children()[1];
        let mut a = CellSet::empty(dim, 4).unwrap();
        a.insert_cube(&q);
        let r = czd(&a, &a, 1.0, delta).unwrap();
        assert!(r.hypothesis_one);
        assert_eq!(r.stopped, vec![q]);
        assert_eq!(r.predecessor_failures, vec![q]);
        assert_eq!(r.verdict, CzdVerdict::HypothesesNotMet);
        // The conclusion is indeed false here.
        assert!(r.cells_a as f64 > delta * r.cells_b as f64);
    }
}

#[test]
fn czd_edge_cases() {
    let a = CellSet::empty(2, 4).unwrap();
    let b = CellSet::from_fn(2, 4, |m| m[0] < 3).unwrap();
    let r = czd(&a, &b, 2.0, 0.3).unwrap();
    assert_eq!(r.verdict, CzdVerdict::Holds);
    assert!(r.stopped.is_empty() && r.cells_a == 0);
    assert_eq!(r.cell_volume, (2.0f64 / 16.0).powi(2));
    assert!(czd(&b, &a, 1.0, 0.3).is_err());
    assert!(czd(&a, &b, 1.0, 1.0).is_err());
    assert!(czd(&a, &b, 1.0, 0.0).is_err());
    let r = czd(&b, &b, 1.0, 0.1).unwrap();
    assert!(!r.hypothesis_one && r.verdict == CzdVerdict::HypothesesNotMet);
    let full = CellSet::from_fn(2, 4, |_| true).unwrap();
    assert_eq!(stopped_cubes(&full, 0.5), vec![DyadicCube::root(2)]);

    let ok = Grid::new(&[0.0, 0.0], 1.0, 17).unwrap();
    let values: Vec<f64> = (0..ok.len()).map(|i| ok.point(i)[0]).collect();
    let cells = CellSet::from_grid(&ok, &values, |v| v > 0.0).unwrap();
    assert_eq!((cells.depth, cells.count()), (4, 128));
    let bad = Grid::new(&[0.0, 0.0], 1.0, 19).unwrap();
    assert!(CellSet::from_grid(&bad, &vec![0.0; bad.len()], |v| v > 0.0).is_err());
}
