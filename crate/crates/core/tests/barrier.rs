use std::time::Instant;

use abplab::barrier::{build_barrier, verify_barrier, BarrierSpec};
use abplab::linalg::SymMatrix;
use abplab::pucci::pucci_minus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lattice_has_no_violations_at_ten_thousand_samples() {
    let start = Instant::now();
    for n in 1..=3 {
        for ratio in [1.0, 2.0, 5.0] {
            let mut mbs = Vec::new();
            for eps0 in [0.5, 0.1, 0.01] {
                let b = build_barrier(n, 1.0, ratio, eps0).unwrap();
                let check = verify_barrier(&b, 10_000, 99);
                assert!(check.passed(), "n = {n}, ratio = {ratio}, eps0 = {eps0}: {:?}", check.reports);
                assert_eq!(check.total_violations(), 0);
                for rep in &check.reports {
                    assert!(rep.checked > 0, "{} checked nothing", rep.name);
                }
                mbs.push(b.m_b);
            }
            let spread = mbs.iter().fold(0.0f64, |m, v| m.max((v / mbs[0] - 1.0).abs()));
            assert!(spread < 0.01, "n = {n}, ratio = {ratio}: M_B = {mbs:?}");
        }
    }
    assert!(start.elapsed().as_secs_f64() < 30.0, "{:?}", start.elapsed());
}

#[test]
fn worked_example() {
    let b = build_barrier(2, 1.0, 1.0, 0.1).unwrap();
    assert_eq!(b.alpha, 1.0);
    assert!((b.q - 3.0).abs() < 1e-15);
    let corner = 1.5 * 2f64.sqrt();
    assert!((b.big_r - b.q * corner * b.r).abs() < 1e-9 * b.big_r);
    println!(
        "n = 2, lambda = Lambda = 1, eps0 = 0.1: r = {:.4}, R = {:.4}, M_B = {:.4}, C_B = {:.6}",
        b.r, b.big_r, b.m_b, b.c_b
    );
    println!("{}", b.constants_table());
    // The radii are pinned so regressions in the recipe show up.
    assert!((b.r - 1264.911).abs() < 1e-3, "{}", b.r);
    assert!((b.big_r - 8049.845).abs() < 1e-3, "{}", b.big_r);
}

#[test]
fn anisotropic_exponent_has_the_right_sign() {
    for n in 1..=3 {
        for (lam, big) in [(1.0, 1.0), (1.0, 2.0), (0.5, 3.0)] {
            let b = build_barrier(n, lam, big, 0.2).unwrap();
            let threshold = (big / lam * (n as f64 - 1.0) - 1.0).max(0.0);
            assert_eq!(b.alpha, threshold + 1.0);
            // M-(D^2 phi) = alpha M2 |x|^-(alpha+2) (lambda (alpha+1) - Lambda (n-1)) outside the core.
            assert!(big * (n as f64 - 1.0) - lam * (b.alpha + 1.0) < 0.0);
        }
    }
}

#[test]
fn constants_satisfy_the_admissibility_chain() {
    for n in 1..=3 {
        for ratio in [1.0, 2.0, 5.0] {
            let mut products = Vec::new();
            for eps0 in [0.5, 0.1, 0.01] {
                let b = build_barrier(n, 1.0, ratio, eps0).unwrap();
                let (lower, outer, slope) = b.admissibility();
                assert!(
                    lower <= b.m2 && b.m2 <= outer.min(slope) * (1.0 + 1e-12),
                    "{lower} <= {} <= min({outer}, {slope})",
                    b.m2
                );
                let corner = 1.5 * (n as f64).sqrt() * b.r;
                assert!(corner < b.big_r, "Q_3r must lie inside B_R");
                // Equality case M2 = M1 R^alpha, so phi(R) = 0 up to rounding.
                assert!(b.m1 - b.m2 * b.big_r.powf(-b.alpha) >= -1e-12 * b.m1);
                assert!(b.m_b > 1.0 && b.c_b.is_finite() && b.c_b >= 0.0);
                products.push(eps0 * b.r);
            }
            assert!(products.iter().all(|p| (p / products[0] - 1.0).abs() < 1e-12), "{products:?}");
        }
    }
}

/// Central differences of the value, as an oracle for the closed-form jet.
fn fd_jet(b: &BarrierSpec, x: &[f64], h: f64) -> (Vec<f64>, SymMatrix) {
    let n = x.len();
    let at = |d: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, s) in d {
            y[k] += s * h;
        }
        b.value(&y)
    };
    let grad = (0..n).map(|k| (at(&[(k, 1.0)]) - at(&[(k, -1.0)])) / (2.0 * h)).collect();
    let mut hess = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                (at(&[(i, 1.0)]) - 2.0 * b.value(x) + at(&[(i, -1.0)])) / (h * h)
            } else {
                (at(&[(i, 1.0), (j, 1.0)]) - at(&[(i, 1.0), (j, -1.0)]) - at(&[(i, -1.0), (j, 1.0)])
                    + at(&[(i, -1.0), (j, -1.0)]))
                    / (4.0 * h * h)
            };
            hess.set(i, j, v);
        }
    }
    (grad, hess)
}

#[test]
fn closed_form_jet_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..=3 {
        for ratio in [1.0, 5.0] {
            let b = build_barrier(n, 1.0, ratio, 0.1).unwrap();
            for i in 0..300 {
                let scale = [b.rho_match * 0.9, b.r, b.big_r][i % 3];
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
                let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let h = 1e-4 * b.rho_match;
                if rho < 10.0 * h || (rho - b.rho_match).abs() < 10.0 * h {
                    continue;
                }
                let jet = b.jet(&x);
                let (g, hs) = fd_jet(&b, &x, h);
                let gscale = b.eps0;
                for k in 0..n {
                    assert!(
                        (jet.gradient[k] - g[k]).abs() < 1e-5 * gscale,
                        "grad at {x:?}: {:?} vs {g:?}",
                        jet.gradient
                    );
                }
                let hscale = jet.hessian.norm().max(b.eps0 / b.rho_match);
                assert!((jet.hessian + hs.scale(-1.0)).norm() < 1e-3 * hscale, "hessian at {x:?}");
            }
        }
    }
}

#[test]
fn drift_constant_is_attained() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in 1..=3 {
        for ratio in [1.0, 2.0, 5.0] {
            let b = build_barrier(n, 1.0, ratio, 0.1).unwrap();
            let mut worst = f64::INFINITY;
            for i in 0..20_000 {
                // Points along random rays fill the core radially.
                let t = i as f64 / 19_999.0;
                let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let l = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                d.iter_mut().for_each(|v| *v *= t * b.r / 2.0 / l);
                let jet = b.jet(&d);
                let pm = pucci_minus(&jet.hessian, b.lambda, b.big_lambda);
                worst = worst.min(pm);
                assert!(pm + b.c_b * b.xi(&d) >= -1e-8 * (1.0 + pm.abs() + b.c_b));
            }
            assert!(b.c_b >= -worst - 1e-12 * b.c_b.max(1.0));
            assert!(b.c_b <= -worst + 1e-4 * b.c_b.max(1e-12), "C_B {} vs sampled {}", b.c_b, -worst);
            // Away from the core the Pucci value is nonnegative, so xi = 0 is harmless.
            for _ in 0..1000 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0 * b.big_r..2.0 * b.big_r)).collect();
                if x.iter().fold(0.0f64, |m, v| m.max(v.abs())) >= b.r / 2.0 {
                    assert_eq!(b.xi(&x), 0.0);
                    assert!(pucci_minus(&b.jet(&x).hessian, b.lambda, b.big_lambda) >= -1e-12);
                }
            }
        }
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(build_barrier(4, 1.0, 1.0, 0.1).is_err());
    assert!(build_barrier(2, 2.0, 1.0, 0.1).is_err());
    assert!(build_barrier(2, 1.0, 1.0, 0.0).is_err());
    assert!(build_barrier(2, 0.0, 1.0, 0.1).is_err());
}
