use std::collections::BTreeSet;
use std::f64::consts::PI;

use cqbem::assembly::{
    assemble_single_layer, boundary_trace_single_layer, evaluate_potential, p1_l2_projection,
    single_layer_at, test_against_p0, trace_points, P0Vector, TRACE_POINTS,
};
use cqbem::geometry::{build_mesh, graded_mesh, refine, refine_uniform, GeometrySpec, Mesh, Point2};
use cqbem::kernels::{bessel_k0, green2d, LaplaceFrequency};
use cqbem::quadrature::gauss_legendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn freq(re: f64, im: f64) -> LaplaceFrequency {
    LaplaceFrequency::new(c(re, im)).unwrap()
}

/// `∫_0^∞ f(cosh t) dt` by the trapezoidal rule; `f` must decay in `cosh t`.
fn cosh_integral(f: impl Fn(f64) -> Complex64) -> Complex64 {
    let h = 0.01f64;
    let mut sum = f(1.0) * 0.5;
    let mut t: f64 = h;
    while t < 40.0 {
        sum += f(t.cosh());
        t += h;
    }
    sum * h
}

/// `∫_0^1 ∫_0^1 K_0(s|x-y|) dy dx` via `K_0(z) = ∫_0^∞ e^{-z cosh t} dt`.
fn self_entry_oracle(s: Complex64) -> Complex64 {
    cosh_integral(|ch| {
        let a = s * ch;
        (1.0 / a - (1.0 - (-a).exp()) / (a * a)) * 2.0
    }) / (2.0 * PI)
}

/// Unit elements meeting at `angle`: polar coordinates in the parameter square.
fn corner_entry_oracle(s: Complex64, angle: f64) -> Complex64 {
    let rule = gauss_legendre(40);
    let mut total = c(0.0, 0.0);
    for (lo, hi) in [(0.0, PI / 4.0), (PI / 4.0, PI / 2.0)] {
        for (phi, w) in rule.mapped(lo, hi) {
            let reach = if phi < PI / 4.0 { 1.0 / phi.cos() } else { 1.0 / phi.sin() };
            let g = (1.0 - (2.0 * phi).sin() * angle.cos()).sqrt();
            // ∫_0^R ρ e^{-aρ} dρ = (1 - e^{-aR}(1 + aR)) / a²
            let inner = cosh_integral(|ch| {
                let a = s * ch * g;
                (1.0 - (-a * reach).exp() * (1.0 + a * reach)) / (a * a)
            });
            total += inner * w;
        }
    }
    total / (2.0 * PI)
}

fn unit_segment_mesh(points: &[(f64, f64)]) -> Mesh {
    Mesh::from_nodes(&[points.iter().map(|&(x, y)| Point2::new(x, y)).collect()]).unwrap()
}

#[test]
fn self_entry_matches_integral_oracle() {
    let mesh = unit_segment_mesh(&[(0.0, 0.0), (1.0, 0.0)]);
    for s in [c(1.0, 0.0), c(0.3, 2.0), c(4.0, -3.0)] {
        let v = assemble_single_layer(&mesh, LaplaceFrequency::new(s).unwrap());
        let oracle = self_entry_oracle(s);
        let rel = ((v.entries[(0, 0)] - oracle) / oracle).norm();
        assert!(rel < 1e-8, "s={s} rel={rel}");
    }
}

#[test]
fn corner_entries_match_polar_oracle() {
    for angle in [PI / 2.0, PI / 3.0, 2.0 * PI / 3.0] {
        let mesh = Mesh::from_nodes(&[
            vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)],
            vec![Point2::new(0.0, 0.0), Point2::new(angle.cos(), angle.sin())],
        ])
        .unwrap();
        for s in [c(1.0, 0.0), c(0.5, 1.5)] {
            let v = assemble_single_layer(&mesh, LaplaceFrequency::new(s).unwrap());
            let oracle = corner_entry_oracle(s, angle);
            let rel = ((v.entries[(0, 1)] - oracle) / oracle).norm();
            assert!(rel < 1e-8, "angle={angle} s={s} rel={rel}");
        }
    }
}

#[test]
fn collinear_neighbours_match_polar_oracle() {
    let mesh = unit_segment_mesh(&[(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
    let s = c(1.0, 0.5);
    let v = assemble_single_layer(&mesh, LaplaceFrequency::new(s).unwrap());
    let oracle = corner_entry_oracle(s, PI);
    assert!(((v.entries[(0, 1)] - oracle) / oracle).norm() < 1e-8);
}

#[test]
fn separated_entry_matches_tensor_gauss() {
    let mesh = Mesh::from_nodes(&[
        vec![Point2::new(0.0, 0.0), Point2::new(0.2, 0.0)],
        vec![Point2::new(1.0, 0.5), Point2::new(1.1, 0.7)],
    ])
    .unwrap();
    let s = freq(1.5, 0.8);
    let v = assemble_single_layer(&mesh, s);
    let rule = gauss_legendre(30);
    let (e, f) = (mesh.element(0), mesh.element(1));
    let mut oracle = c(0.0, 0.0);
    for (x, wx) in rule.mapped(0.0, 1.0) {
        for (y, wy) in rule.mapped(0.0, 1.0) {
            let r = e.at(x).dist(f.at(y));
            oracle += green2d(s, r).unwrap() * (wx * wy * e.length() * f.length());
        }
    }
    assert!(((v.entries[(0, 1)] - oracle) / oracle).norm() < 1e-10);
}

#[test]
fn conjugate_frequency_gives_conjugate_matrix() {
    let mesh = graded_mesh(&GeometrySpec::Trapping, 3, 2.0).unwrap();
    let s = freq(0.7, 2.3);
    let a = assemble_single_layer(&mesh, s).entries;
    let b = assemble_single_layer(&mesh, s.conj()).entries;
    assert!((a.map(|z| z.conj()) - b).norm() < 1e-14 * a.norm());
}

#[test]
fn galerkin_residual_vanishes() {
    let mesh = graded_mesh(&GeometrySpec::FlatScreen, 6, 3.0).unwrap();
    let s = freq(1.0, 0.0);
    let v = assemble_single_layer(&mesh, s);
    let f = test_against_p0(&mesh, |p| (0.3 * p.x - 0.2 * p.y).exp());
    let phi = v.solve(&f).unwrap();
    let r = v.apply(&phi);
    let num: f64 = f.coefficients.iter().zip(&r.coefficients).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = f.coefficients.iter().map(|a| a.norm_sqr()).sum();
    assert!((num / den).sqrt() < 1e-10);
}

#[test]
fn energy_error_decreases_under_uniform_refinement() {
    let spec = GeometrySpec::FlatScreen;
    let g = |p: Point2| (0.5 * p.x).exp();
    let s = freq(1.0, 0.0);
    let reference = build_mesh(&spec, 64).unwrap();
    let v_ref = assemble_single_layer(&reference, s);
    let phi_ref = v_ref.solve(&test_against_p0(&reference, g)).unwrap();
    let mut previous = f64::INFINITY;
    for n in [2usize, 4, 8, 16, 32] {
        let mesh = build_mesh(&spec, n).unwrap();
        let phi = assemble_single_layer(&mesh, s).solve(&test_against_p0(&mesh, g)).unwrap();
        let ratio = 64 / n;
        let e: Vec<Complex64> = (0..64).map(|k| phi_ref.coefficients[k] - phi.coefficients[k / ratio]).collect();
        let ev = DVector::from_vec(e.clone());
        let energy = (ev.transpose() * &v_ref.entries * &ev)[(0, 0)].re;
        assert!(energy >= 0.0 && energy <= previous * (1.0 + 1e-10), "n={n}");
        previous = energy;
    }
}

#[test]
fn trace_at_midpoint_matches_oracle() {
    let mesh = unit_segment_mesh(&[(0.0, 0.0), (1.0, 0.0)]);
    let s = c(1.2, 0.9);
    let density = P0Vector { coefficients: vec![c(1.0, 0.0)] };
    let v = single_layer_at(&mesh, LaplaceFrequency::new(s).unwrap(), &density, Point2::new(0.5, 0.0)).unwrap();
    // 2 ∫_0^{1/2} K_0(su) du, with ∫_0^{1/2} e^{-au} du = (1 - e^{-a/2}) / a
    let oracle = cosh_integral(|ch| {
        let a = s * ch;
        (1.0 - (-a * 0.5).exp()) / a * 2.0
    }) / (2.0 * PI);
    assert!(((v - oracle) / oracle).norm() < 1e-8);
}

#[test]
fn trace_is_linear() {
    let mesh = graded_mesh(&GeometrySpec::Wedge, 3, 2.0).unwrap();
    let s = freq(0.8, -1.1);
    let m = mesh.len();
    let phi = P0Vector { coefficients: (0..m).map(|k| c(k as f64 * 0.3 - 1.0, 0.2)).collect() };
    let psi = P0Vector { coefficients: (0..m).map(|k| c((k as f64).sin(), -0.5)).collect() };
    let alpha = c(0.7, -1.3);
    let combo = P0Vector {
        coefficients: phi.coefficients.iter().zip(&psi.coefficients).map(|(a, b)| alpha * a + b).collect(),
    };
    let tp = boundary_trace_single_layer(&mesh, s, &phi).unwrap();
    let tq = boundary_trace_single_layer(&mesh, s, &psi).unwrap();
    let tc = boundary_trace_single_layer(&mesh, s, &combo).unwrap();
    for k in 0..tc.nodal_values.len() {
        let expect = alpha * tp.nodal_values[k] + tq.nodal_values[k];
        assert!((tc.nodal_values[k] - expect).norm() < 1e-12 * (1.0 + expect.norm()));
    }
    let zero = boundary_trace_single_layer(&mesh, s, &P0Vector::zeros(m)).unwrap();
    assert!(zero.nodal_values.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn potential_far_field_behaves_like_point_source() {
    let mesh = build_mesh(&GeometrySpec::FlatScreen, 8).unwrap();
    let s = freq(0.05, 0.0);
    let density = P0Vector { coefficients: vec![c(1.0, 0.0); 8] };
    let x = Point2::new(60.0, 80.0);
    let v = evaluate_potential(&mesh, s, &density, &[x]).unwrap()[0];
    let approx = green2d(s, 100.0).unwrap() * 2.0;
    assert!(((v - approx) / approx).norm() < 0.05);
}

#[test]
fn potential_matches_brute_force_quadrature() {
    let mesh = graded_mesh(&GeometrySpec::FlatScreen, 4, 2.0).unwrap();
    let s = freq(1.0, 1.0);
    let density = P0Vector { coefficients: (0..mesh.len()).map(|k| c(1.0 + k as f64, -0.5)).collect() };
    let x = Point2::new(2.0, 2.0);
    let v = evaluate_potential(&mesh, s, &density, &[x]).unwrap()[0];
    let mut brute = c(0.0, 0.0);
    for (e, d) in mesh.elements().iter().zip(&density.coefficients) {
        // 200 panels of 5-point Gauss: 1000 points per element
        let panels = 200;
        let rule = gauss_legendre(5);
        for k in 0..panels {
            let (lo, hi) = (k as f64 / panels as f64, (k + 1) as f64 / panels as f64);
            for (t, w) in rule.mapped(lo, hi) {
                brute += d * green2d(s, x.dist(e.at(t))).unwrap() * (w * e.length());
            }
        }
    }
    assert!(((v - brute) / brute).norm() < 1e-8);
    let zero = evaluate_potential(&mesh, s, &P0Vector::zeros(mesh.len()), &[x]).unwrap();
    assert_eq!(zero[0], c(0.0, 0.0));
    assert!(evaluate_potential(&mesh, s, &density, &[Point2::new(0.3, 0.0)]).is_err());
}

#[test]
fn potential_agrees_with_gauss_oracle_at_observation_point() {
    let mesh = graded_mesh(&GeometrySpec::FlatScreen, 4, 2.0).unwrap();
    let s = freq(1.0, 1.0);
    let density = P0Vector { coefficients: (0..mesh.len()).map(|k| c(1.0 + k as f64, -0.5)).collect() };
    let x = Point2::new(2.0, 2.0);
    let v = evaluate_potential(&mesh, s, &density, &[x]).unwrap()[0];
    let rule = gauss_legendre(40);
    let mut oracle = c(0.0, 0.0);
    for (e, d) in mesh.elements().iter().zip(&density.coefficients) {
        for (t, w) in rule.mapped(0.0, 1.0) {
            oracle += d * bessel_k0(s.value() * x.dist(e.at(t))).unwrap() / (2.0 * PI) * (w * e.length());
        }
    }
    assert!(((v - oracle) / oracle).norm() < 1e-8);
}

#[test]
fn traces_stay_finite_on_strongly_graded_slanted_elements() {
    let mesh = graded_mesh(&GeometrySpec::Trapping, 16, 3.0).unwrap();
    assert!(mesh.min_h() < 1e-3);
    let density = P0Vector {
        coefficients: vec![c(1.0, 0.0); mesh.len()],
    };
    for s in [freq(1.0, 0.0), freq(0.5, 30.0)] {
        let trace = boundary_trace_single_layer(&mesh, s, &density).unwrap();
        assert!(trace.nodal_values.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
        for x in trace_points(&mesh) {
            let v = single_layer_at(&mesh, s, &density, x).unwrap();
            assert!(v.re.is_finite() && v.im.is_finite(), "{x:?}");
        }
    }
}

#[test]
fn high_frequency_entries_are_consistent_under_subdivision() {
    for spec in [GeometrySpec::FlatScreen, GeometrySpec::Wedge] {
        let mesh = build_mesh(&spec, 4).unwrap();
        let fine = refine_uniform(&mesh);
        for s in [freq(3.2, 300.0), freq(20.0, 800.0), freq(400.0, 1500.0)] {
            let a = assemble_single_layer(&mesh, s).entries;
            let b = assemble_single_layer(&fine, s).entries;
            let scale = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for i in 0..mesh.len() {
                for j in 0..mesh.len() {
                    let sum = b[(2 * i, 2 * j)] + b[(2 * i + 1, 2 * j)] + b[(2 * i, 2 * j + 1)] + b[(2 * i + 1, 2 * j + 1)];
                    assert!((sum - a[(i, j)]).norm() < 1e-12 * scale, "{spec:?} s={} ({i},{j})", s.value());
                }
            }
        }
    }
}

fn p1_samples(mesh: &Mesh, f: impl Fn(Point2) -> f64) -> Vec<Complex64> {
    trace_points(mesh).into_iter().map(|p| c(f(p), 0.0)).collect()
}

#[test]
fn projection_reproduces_p1_and_constants() {
    let mesh = graded_mesh(&GeometrySpec::Trapping, 3, 2.0).unwrap();
    let constant = p1_l2_projection(&mesh, &p1_samples(&mesh, |_| 2.5)).unwrap();
    assert!(constant.nodal_values.iter().all(|v| (v.re - 2.5).abs() < 1e-12 && v.im == 0.0));
    let linear = p1_l2_projection(&mesh, &p1_samples(&mesh, |p| 1.0 + 2.0 * p.x - p.y)).unwrap();
    for comp in 0..mesh.component_count() {
        let first = mesh.left_vertex(mesh.component_range(comp).start);
        for (k, node) in mesh.component_nodes(comp).iter().enumerate() {
            let exact = 1.0 + 2.0 * node.x - node.y;
            assert!((linear.nodal_values[first + k].re - exact).abs() < 1e-12);
        }
    }
    assert!(p1_l2_projection(&mesh, &[c(0.0, 0.0)]).is_err());
}

#[test]
fn projection_of_bump_matches_normal_equations() {
    let mesh = build_mesh(&GeometrySpec::FlatScreen, 4).unwrap();
    // quadratic bump on element 1, zero elsewhere
    let bump = |e: usize, t: f64| if e == 1 { 4.0 * t * (1.0 - t) } else { 0.0 };
    let rule = gauss_legendre(TRACE_POINTS);
    let samples: Vec<Complex64> = (0..mesh.len())
        .flat_map(|e| rule.nodes.iter().map(move |&t| c(bump(e, t), 0.0)))
        .collect();
    let p = p1_l2_projection(&mesh, &samples).unwrap();
    // dense normal equations with a 20-point rule
    let n = mesh.vertex_count();
    let fine = gauss_legendre(20);
    let mut mass = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for e in 0..mesh.len() {
        let h = mesh.h(e);
        let v = mesh.left_vertex(e);
        for (t, w) in fine.mapped(0.0, 1.0) {
            let basis = [(v, 1.0 - t), (v + 1, t)];
            for &(i, bi) in &basis {
                rhs[i] += w * h * bi * bump(e, t);
                for &(j, bj) in &basis {
                    mass[(i, j)] += w * h * bi * bj;
                }
            }
        }
    }
    let oracle = mass.lu().solve(&rhs).unwrap();
    for k in 0..n {
        assert!((p.nodal_values[k].re - oracle[k]).abs() < 1e-10);
    }
}

fn random_mesh(kind: u8, n: usize, marks: Vec<usize>) -> Mesh {
    let spec = match kind % 3 {
        0 => GeometrySpec::FlatScreen,
        1 => GeometrySpec::Wedge,
        _ => GeometrySpec::Trapping,
    };
    let mesh = build_mesh(&spec, n).unwrap();
    let marked: BTreeSet<usize> = marks.into_iter().map(|m| m % mesh.len()).collect();
    refine(&mesh, &marked).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn real_frequency_matrix_is_symmetric_positive_definite(
        kind in 0u8..3,
        n in 1usize..6,
        marks in proptest::collection::vec(0usize..64, 0..6),
    ) {
        let mesh = random_mesh(kind, n, marks);
        let v = assemble_single_layer(&mesh, freq(1.0, 0.0)).entries;
        prop_assert!(v.iter().all(|z| z.im == 0.0));
        let re = v.map(|z| z.re);
        prop_assert!((&re - re.transpose()).norm() == 0.0);
        let min = re.symmetric_eigenvalues().min();
        prop_assert!(min > 0.0, "smallest eigenvalue {}", min);
    }

    #[test]
    fn galerkin_solution_has_vanishing_p0_residual(
        kind in 0u8..3,
        n in 1usize..5,
        marks in proptest::collection::vec(0usize..64, 0..4),
        kx in -1.0f64..1.0,
        ky in -1.0f64..1.0,
    ) {
        let mesh = random_mesh(kind, n, marks);
        let v = assemble_single_layer(&mesh, freq(1.0, 0.0));
        let f = test_against_p0(&mesh, |p| (kx * p.x + ky * p.y).sin() + 1.0);
        let phi = v.solve(&f).unwrap();
        let r = v.apply(&phi);
        let num: f64 = f.coefficients.iter().zip(&r.coefficients).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = f.coefficients.iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((num / den).sqrt() < 1e-10);
    }
}

#[test]
fn uniform_refinement_doubles_elements() {
    let mesh = build_mesh(&GeometrySpec::Wedge, 3).unwrap();
    assert_eq!(refine_uniform(&mesh).len(), 12);
}
