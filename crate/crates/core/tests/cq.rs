use std::f64::consts::PI;

use cqbem::cq::{
    bdf_symbol, contour_frequencies, forward_cq_apply, rk_delta, scalar_cq_weights, shift_multiplier,
    solve_cq, ButcherTableau, CqMethod, CqScheme, FrequencyData, StageSeries,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Symbol = Box<dyn Fn(Complex64) -> Complex64 + Sync>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn scalar_symbol(f: impl Fn(Complex64) -> Complex64 + Sync) -> impl Fn(Complex64, &[Complex64]) -> cqbem::Result<Vec<Complex64>> + Sync {
    move |s, x| Ok(x.iter().map(|v| v * f(s)).collect())
}

fn max_diff(a: &StageSeries, b: &StageSeries) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Contour with `λ^{N+1} = 1e-8`; data without a late onset would otherwise
/// see round-off amplified by `λ^{-N}`.
fn moderate(scheme: CqScheme) -> CqScheme {
    let n = scheme.steps() as f64;
    scheme.with_lambda(1e-8f64.powf(1.0 / (n + 1.0))).unwrap()
}

fn radau2(tau: f64, steps: usize) -> CqScheme {
    moderate(CqScheme::new(CqMethod::RadauIIA(2), tau, steps).unwrap())
}

#[test]
fn bdf_symbol_values() {
    assert_eq!(bdf_symbol(1, c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
    assert_eq!(bdf_symbol(2, c(1.0, 0.0)).unwrap(), c(0.0, 0.0));
    assert_eq!(bdf_symbol(2, c(0.0, 0.0)).unwrap(), c(1.5, 0.0));
    assert!(bdf_symbol(3, c(0.0, 0.0)).is_err());
    assert!(CqScheme::new(CqMethod::Bdf(3), 0.1, 10).is_err());
}

#[test]
fn radau_delta_at_origin_is_inverse_of_a() {
    let tab = ButcherTableau::radau_iia(2).unwrap();
    // A = [[5/12, -1/12], [3/4, 1/4]], det = 5/48 + 3/48 = 1/6
    let a = DMatrix::from_row_slice(2, 2, &[5.0 / 12.0, -1.0 / 12.0, 0.75, 0.25]);
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let inv = DMatrix::from_row_slice(2, 2, &[a[(1, 1)] / det, -a[(0, 1)] / det, -a[(1, 0)] / det, a[(0, 0)] / det]);
    let d = rk_delta(&tab, c(0.0, 0.0));
    for i in 0..2 {
        for j in 0..2 {
            assert!((d[(i, j)] - c(inv[(i, j)], 0.0)).norm() < 1e-13);
        }
    }
    assert!((inv[(0, 0)] - 1.5).abs() < 1e-14 && (inv[(1, 0)] + 4.5).abs() < 1e-14);
    // A^{-1} 𝟙 = (2, -2), b · (2, -2) = 1
    assert!(tab.r_infinity().abs() < 1e-14);
}

#[test]
fn delta_eigenvalues_lie_in_right_half_plane() {
    for m in 1..=3 {
        let tab = ButcherTableau::radau_iia(m).unwrap();
        for theta in [0.0, PI / 3.0, PI] {
            let d = rk_delta(&tab, Complex64::from_polar(0.9, theta));
            let ev = d.eigenvalues().unwrap();
            assert!(ev.iter().all(|z| z.re > 0.0), "m={m} theta={theta}");
        }
    }
}

#[test]
fn contour_points_and_frequencies() {
    let scheme = CqScheme::new(CqMethod::Bdf(1), 0.1, 3).unwrap().with_lambda(0.5).unwrap();
    let pts = contour_frequencies(&scheme).unwrap();
    let expect = [c(0.5, 0.0), c(0.0, 0.5), c(-0.5, 0.0), c(0.0, -0.5)];
    for (p, e) in pts.iter().zip(expect) {
        assert!((p.zeta - e).norm() < 1e-15);
    }
    match pts[0].data {
        FrequencyData::Scalar(s) => assert!((s - c(0.5 / 0.1, 0.0)).norm() < 1e-12 && s.im == 0.0),
        _ => panic!("BDF gives scalar frequencies"),
    }
    for method in [CqMethod::Bdf(1), CqMethod::Bdf(2), CqMethod::RadauIIA(1), CqMethod::RadauIIA(2), CqMethod::RadauIIA(3)] {
        let scheme = CqScheme::new(method, 0.05, 200).unwrap();
        for p in contour_frequencies(&scheme).unwrap() {
            assert!(p.data.frequencies().iter().all(|s| s.re > 0.0), "{method:?}");
        }
    }
}

#[test]
fn identity_and_difference_symbols() {
    let scheme = moderate(CqScheme::new(CqMethod::Bdf(1), 0.2, 12).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = StageSeries::scalar(13, 1, |_, _| c(rng.gen_range(-1.0..1.0), 0.0));
    let id = forward_cq_apply(&scheme, scalar_symbol(|_| c(1.0, 0.0)), &g).unwrap();
    assert!(max_diff(&id, &g) < 1e-9);
    let d = forward_cq_apply(&scheme, scalar_symbol(|s| s), &g).unwrap();
    for n in 0..13 {
        let prev = if n == 0 { c(0.0, 0.0) } else { g.get(n - 1, 0)[0] };
        let expect = (g.get(n, 0)[0] - prev) / 0.2;
        assert!((d.get(n, 0)[0] - expect).norm() < 1e-8);
    }
    let ones = StageSeries::scalar(13, 1, |_, _| c(1.0, 0.0));
    let integral = forward_cq_apply(&scheme, scalar_symbol(|s| 1.0 / s), &ones).unwrap();
    for n in 0..13 {
        assert!((integral.get(n, 0)[0] - c((n + 1) as f64 * 0.2, 0.0)).norm() < 1e-7);
    }
    let rk = radau2(0.2, 12);
    let g2 = StageSeries::scalar(13, 2, |n, l| c((n * 2 + l) as f64, 0.0));
    let id2 = forward_cq_apply(&rk, scalar_symbol(|_| c(1.0, 0.0)), &g2).unwrap();
    assert!(max_diff(&id2, &g2) < 1e-6);
}

#[test]
fn bdf_weights_for_differentiation() {
    let tau = 0.25;
    let scheme = CqScheme::new(CqMethod::Bdf(1), tau, 10).unwrap().with_lambda(0.9).unwrap();
    let w = scalar_cq_weights(&scheme, |s| s, 11).unwrap();
    let expect = [1.0 / tau, -1.0 / tau];
    for (n, wn) in w.iter().enumerate() {
        let e = expect.get(n).copied().unwrap_or(0.0);
        assert!((wn[(0, 0)] - c(e, 0.0)).norm() < 1e-14 / tau, "n={n}");
    }
    let scheme = CqScheme::new(CqMethod::Bdf(2), tau, 10).unwrap().with_lambda(0.9).unwrap();
    let w = scalar_cq_weights(&scheme, |s| s, 11).unwrap();
    let expect = [1.5 / tau, -2.0 / tau, 0.5 / tau];
    for (n, wn) in w.iter().enumerate() {
        let e = expect.get(n).copied().unwrap_or(0.0);
        assert!((wn[(0, 0)] - c(e, 0.0)).norm() < 1e-14 / tau, "n={n}");
    }
    let rk = radau2(0.1, 8);
    let w = scalar_cq_weights(&rk, |_| c(1.0, 0.0), 9).unwrap();
    assert!((&w[0] - DMatrix::<Complex64>::identity(2, 2)).norm() < 1e-7);
    assert!(w[1..].iter().all(|m| m.norm() < 1e-7));
    assert!(scalar_cq_weights(&rk, |s| s, 10).is_err());
}

fn random_symbol(rng: &mut ChaCha8Rng) -> Symbol {
    let a: f64 = rng.gen_range(0.5..2.0);
    let b: f64 = rng.gen_range(0.0..1.0);
    let cc: f64 = rng.gen_range(0.1..2.0);
    let k: i32 = rng.gen_range(-1..=1);
    Box::new(move |s: Complex64| s.powi(k) * (-s * b).exp() * a / (s + cc))
}

fn random_series(rng: &mut ChaCha8Rng, steps: usize, stages: usize) -> StageSeries {
    StageSeries::scalar(steps, stages, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

#[test]
fn composition_rule_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for method in [CqMethod::RadauIIA(2), CqMethod::RadauIIA(3), CqMethod::Bdf(2)] {
        for _ in 0..4 {
            let (k, l) = (random_symbol(&mut rng), random_symbol(&mut rng));
            // composition is independent of aliasing, so a radius close to 1
            // keeps the amplified round-off small
            let scheme = CqScheme::new(method, 0.1, 60).unwrap().with_lambda(1e-4f64.powf(1.0 / 61.0)).unwrap();
            let g = random_series(&mut rng, 61, scheme.stages());
            let lg = forward_cq_apply(&scheme, scalar_symbol(&l), &g).unwrap();
            let klg = forward_cq_apply(&scheme, scalar_symbol(&k), &lg).unwrap();
            let kl = forward_cq_apply(&scheme, scalar_symbol(|s| k(s) * l(s)), &g).unwrap();
            let rel = max_diff(&klg, &kl) / kl.max_norm();
            assert!(rel < 1e-10, "{method:?} rel={rel}");
        }
    }
}

#[test]
fn weights_reproduce_forward_application() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for method in [CqMethod::RadauIIA(2), CqMethod::Bdf(1), CqMethod::Bdf(2)] {
        // Future data wraps into early steps with weight λ^{N+1}; data
        // supported on the first half and weights decaying like e^{-4t}
        // keep that term far below the tolerance.
        let scheme = CqScheme::new(method, 0.1, 100).unwrap().with_lambda(1e-4f64.powf(1.0 / 101.0)).unwrap();
        let symbol = |s: Complex64| (-s * 0.3).exp() / (s + 4.0);
        let m = scheme.stages();
        let g = StageSeries::scalar(101, m, |n, _| {
            if n <= 50 {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                c(0.0, 0.0)
            }
        });
        let w = scalar_cq_weights(&scheme, symbol, 101).unwrap();
        let fwd = forward_cq_apply(&scheme, scalar_symbol(symbol), &g).unwrap();
        let direct = StageSeries::scalar(101, m, |n, i| {
            (0..=n)
                .map(|j| (0..m).map(|k| w[n - j][(i, k)] * g.get(j, k)[0]).sum::<Complex64>())
                .sum()
        });
        let rel = max_diff(&direct, &fwd) / fwd.max_norm();
        assert!(rel < 1e-10, "{method:?} rel={rel}");
    }
}

#[test]
fn applications_are_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scheme = radau2(0.05, 120);
    let n0 = 40;
    let g = StageSeries::scalar(121, 2, |n, _| if n < n0 { c(0.0, 0.0) } else { c(rng.gen_range(-1.0..1.0), 0.0) });
    let out = forward_cq_apply(&scheme, scalar_symbol(|s| s * s / (s + 2.0)), &g).unwrap();
    let early = (0..n0).flat_map(|n| out.get(n, 0).iter().chain(out.get(n, 1))).map(|z| z.norm()).fold(0.0, f64::max);
    assert!(early < 1e-6 * out.max_norm(), "early={early}");
}

/// Radau IIA stepping for `y' = -y + f`, `y(0) = 0`; returns stage values.
fn radau_integrator(tab: &ButcherTableau, tau: f64, steps: usize, f: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    let m = tab.stages();
    let a = tab.a();
    let lhs = DMatrix::<f64>::identity(m, m) + a * tau;
    let lu = lhs.lu();
    let mut y = 0.0;
    let mut out = Vec::new();
    for n in 0..steps {
        let fv = DVector::from_fn(m, |i, _| f((n as f64 + tab.c()[i]) * tau));
        let rhs = DVector::from_element(m, y) + a * fv * tau;
        let stages = lu.solve(&rhs).unwrap();
        y = stages[m - 1];
        out.push(stages.iter().copied().collect());
    }
    out
}

#[test]
fn solve_matches_radau_integrator_and_converges() {
    // y(t) = t^3 sin t solves y' + y = f
    let exact = |t: f64| t.powi(3) * t.sin();
    let f = |t: f64| 3.0 * t * t * t.sin() + t.powi(3) * t.cos() + exact(t);
    let tab = ButcherTableau::radau_iia(2).unwrap();
    let mut errors = Vec::new();
    let taus: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
    for &tau in &taus {
        let steps = (2.0 / tau).round() as usize;
        let scheme = radau2(tau, steps);
        let rhs = StageSeries::scalar(steps + 1, 2, |n, l| c(f(scheme.stage_time(n, l)), 0.0));
        let y = solve_cq(&scheme, scalar_symbol(|s| 1.0 / (s + 1.0)), &rhs).unwrap();
        let oracle = radau_integrator(&tab, tau, steps + 1, f);
        for n in 0..=steps {
            for l in 0..2 {
                assert!((y.get(n, l)[0].re - oracle[n][l]).abs() < 1e-6 * (1.0 + oracle[n][l].abs()));
            }
        }
        let err = (0..steps)
            .map(|n| (y.last_stage(n)[0].re - exact((n + 1) as f64 * tau)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
        let back = forward_cq_apply(&scheme, scalar_symbol(|s| s + 1.0), &y).unwrap();
        assert!(max_diff(&back, &rhs) < 1e-8 * rhs.max_norm());
    }
    for w in errors.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!(slope > 2.8, "slope {slope} from {errors:?}");
    }
    let scheme = radau2(0.1, 20);
    let zero = solve_cq(&scheme, scalar_symbol(|s| 1.0 / (s + 1.0)), &StageSeries::zeros(21, 2, 1)).unwrap();
    assert_eq!(zero.max_norm(), 0.0);
}

#[test]
fn delay_symbol_converges_with_third_order() {
    let g = |t: f64| if t > 0.0 { t.powi(6) * (-t).exp() * (2.0 * t).sin() } else { 0.0 };
    let mut errors = Vec::new();
    for tau in [0.1f64, 0.05, 0.025, 0.0125] {
        let steps = (4.0 / tau).round() as usize;
        let scheme = radau2(tau, steps);
        let gs = StageSeries::scalar(steps + 1, 2, |n, l| c(g(scheme.stage_time(n, l)), 0.0));
        let out = forward_cq_apply(&scheme, scalar_symbol(|s| (-s).exp()), &gs).unwrap();
        let err = (0..steps)
            .map(|n| (out.last_stage(n)[0].re - g((n + 1) as f64 * tau - 1.0)).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    for w in errors.windows(2) {
        let slope = (w[0] / w[1]).log2();
        assert!(slope >= 2.8, "slope {slope} from {errors:?}");
    }
}

#[test]
fn shift_multiplier_values() {
    assert_eq!(shift_multiplier(0.0, c(3.0, -2.0)), c(1.0, 0.0));
    let v = shift_multiplier(0.4, c(2.0, 0.0));
    assert!(v.re > 0.0 && v.re < 1.0 && v.im == 0.0);
}

proptest! {
    #[test]
    fn shift_modulus_is_exponential(eta in 0.0f64..5.0, re in 0.01f64..20.0, im in -50.0f64..50.0) {
        let v = shift_multiplier(eta, c(re, im));
        prop_assert!((v.norm() - (-eta * re).exp()).abs() < 1e-14);
    }

    #[test]
    fn delta_eigenvalues_have_positive_real_part(r in 0.0f64..0.999, theta in 0.0f64..(2.0 * PI)) {
        let tab = ButcherTableau::radau_iia(2).unwrap();
        let ev = rk_delta(&tab, Complex64::from_polar(r, theta)).eigenvalues().unwrap();
        prop_assert!(ev.iter().all(|z| z.re > 0.0));
    }
}
