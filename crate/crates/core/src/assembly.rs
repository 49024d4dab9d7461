//! Galerkin discretization of the single-layer operator on piecewise
//! constants, potential evaluation and the P1 projection of boundary data.
//!
//! Quadrature pieces are sized from the geometry and `|s|`; every rule is
//! accurate to near machine precision, so the discrete operators are
//! analytic in `s` up to round-off.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Mesh, Point2, Segment};
use crate::kernels::{k0, LaplaceFrequency, EULER_GAMMA};
use crate::linalg::{CMatrix, CVector, DenseLu, CONDITION_WARNING};
use crate::quadrature::gauss_legendre;

/// Gauss points per element used for boundary samples and P1 projection.
pub const TRACE_POINTS: usize = 5;
/// Gauss points per element for testing data against P0.
const RHS_POINTS: usize = 8;
/// Pairs with `Re(s) · distance` beyond this contribute below `e^{-40}`.
const DECAY_CUTOFF: f64 = 40.0;
/// Longest piece integrated by a single tensor Gauss rule.
const MAX_PIECE: f64 = 0.25;
/// Admissibility ratio `distance / length` for plain Gauss rules.
const ADMISSIBLE: f64 = 0.75;
/// Relative distance below which a point counts as lying on an element;
/// bisection toward closer points would shrink pieces below round-off.
const ON_SEGMENT: f64 = 1e-9;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Radius `|s| r` up to which radial integrals use the ascending series.
const SERIES_REACH: f64 = 2.0;
/// Largest phase `|s| · length` of one Gauss piece beyond the series part.
const PIECE_PHASE: f64 = 16.0;
/// Largest phase `|s| · length` of a piece in tensor and angular rules.
const GAUSS_PHASE: f64 = 16.0;

/// Accumulates `Σ w K_0(s r)` together with radial integrals of `K_0`.
struct KernelSum {
    s: Complex64,
    modulus: f64,
    sum: Complex64,
}

impl KernelSum {
    fn new(s: Complex64) -> Self {
        Self {
            s,
            modulus: s.norm(),
            sum: ZERO,
        }
    }

    #[inline]
    fn node(&mut self, r: f64, w: f64) {
        self.sum += k0(self.s * r) * w;
    }

    /// `scale · ∫_0^a (α + βu) K_0(su) du`.
    ///
    /// The part with `|s|u <= SERIES_REACH` is integrated term by term from
    /// the ascending series; the rest runs over Gauss pieces that at most
    /// double in position and carry a bounded phase.
    fn radial(&mut self, a: f64, alpha: f64, beta: f64, scale: f64) {
        let a0 = a.min(SERIES_REACH / self.modulus);
        let mut value = ZERO;
        if alpha != 0.0 {
            value += series_moment(self.s, a0, 0) * alpha;
        }
        if beta != 0.0 {
            value += series_moment(self.s, a0, 1) * beta;
        }
        self.sum += value * scale;
        self.band(a0, a, |u| (alpha + beta * u) * scale);
    }

    /// `∫_lo^a w(u) K_0(su) du` for `lo > 0` on Gauss pieces that at most
    /// double in position and carry a bounded phase; stops once decayed.
    fn band(&mut self, mut lo: f64, a: f64, weight: impl Fn(f64) -> f64) {
        while lo < a * (1.0 - 1e-14) && self.s.re * lo <= DECAY_CUTOFF {
            let hi = (2.0 * lo).min(lo + PIECE_PHASE / self.modulus).min(a);
            let rule = gauss_legendre(phase_order(10, self.modulus * (hi - lo)));
            for (u, w) in rule.mapped(lo, hi) {
                self.node(u, weight(u) * w);
            }
            lo = hi;
        }
    }

    /// Longest piece for tensor Gauss rules at this frequency.
    fn piece_cap(&self) -> f64 {
        MAX_PIECE.min(GAUSS_PHASE / self.modulus)
    }

    fn green(self) -> Complex64 {
        self.sum / (2.0 * PI)
    }
}

/// `∫_0^a u^m K_0(su) du` for `|s| a <= SERIES_REACH` from
/// `K_0(z) = Σ_k (z/2)^{2k}/(k!)² (H_k - ln(z/2) - γ)`.
fn series_moment(s: Complex64, a: f64, m: u32) -> Complex64 {
    let half = s * (0.5 * a);
    let lead = -half.ln() - EULER_GAMMA;
    let sq = half * half;
    let mut t = Complex64::new(1.0, 0.0);
    let mut harmonic = 0.0;
    let mut sum = ZERO;
    for k in 0..40u32 {
        if k > 0 {
            let kf = f64::from(k);
            t = t * sq / (kf * kf);
            harmonic += 1.0 / kf;
        }
        let p = f64::from(2 * k + m + 1);
        let term = t / p * (lead + harmonic + 1.0 / p);
        sum += term;
        if term.norm_sqr() < 1e-36 * sum.norm_sqr() {
            break;
        }
    }
    sum * a.powi(m as i32 + 1)
}

/// Gauss order for a piece at relative distance `ratio` carrying phase `phase`.
fn gauss_order(ratio: f64, phase: f64) -> usize {
    let near = if ratio < 1.5 {
        8
    } else if ratio < 4.0 {
        6
    } else {
        4
    };
    phase_order(near, phase)
}

/// At least `base` points, more for pieces carrying an oscillation.
fn phase_order(base: usize, phase: f64) -> usize {
    if phase > 0.3 {
        base.max(8 + phase.ceil() as usize)
    } else {
        base
    }
}

fn segment_distance(p: &Segment, q: &Segment) -> f64 {
    p.distance_to(q.a)
        .0
        .min(p.distance_to(q.b).0)
        .min(q.distance_to(p.a).0)
        .min(q.distance_to(p.b).0)
}

/// Rule on `[0, 1]` resolving features at scale `delta` near `t = 0`; the
/// integrand oscillates with `phase` per unit length.
fn graded_unit(delta: f64, phase: f64, mut visit: impl FnMut(f64, f64)) {
    let mut piece = |lo: f64, hi: f64, base: usize| {
        let n = ((hi - lo) * phase / GAUSS_PHASE).ceil().max(1.0);
        let step = (hi - lo) / n;
        let rule = gauss_legendre(phase_order(base, step * phase));
        for k in 0..n as usize {
            let a = lo + k as f64 * step;
            for (x, w) in rule.mapped(a, (a + step).min(hi)) {
                visit(x, w);
            }
        }
    };
    if delta >= 0.5 {
        piece(0.0, 1.0, 16);
        return;
    }
    let mut hi = 1.0;
    while hi > delta {
        let lo = hi * 0.3;
        piece(lo, hi, 12);
        hi = lo;
    }
    piece(0.0, hi, 12);
}

/// `∫_E ∫_E K_0(s|x-y|) = 2 ∫_0^h (h-u) K_0(su) du`.
fn identical_pair(h: f64, acc: &mut KernelSum) {
    acc.radial(h, 2.0 * h, -2.0, 1.0);
}

/// Collinear elements of lengths `h1`, `h2` meeting end to end.
fn collinear_pair(h1: f64, h2: f64, acc: &mut KernelSum) {
    let (hmin, hmax) = (h1.min(h2), h1.max(h2));
    acc.radial(hmin, 0.0, 1.0, 1.0);
    acc.band(hmin, hmax, |_| hmin);
    acc.band(hmax, h1 + h2, |r| h1 + h2 - r);
}

/// Elements meeting at a corner: unit directions `t1`, `t2` point from the
/// shared vertex into each element.
fn corner_pair(h1: f64, t1: (f64, f64), h2: f64, t2: (f64, f64), acc: &mut KernelSum) {
    let scale = h1 * h2;
    // ρ moves by at most the length of the element swept by t
    let (phase1, phase2) = (acc.modulus * h2, acc.modulus * h1);
    // Triangle v/h2 <= u/h1: r = ξ ρ(t) and ∫_0^1 ξ K_0(sρξ) dξ = ρ^{-2} ∫_0^ρ u K_0(su) du.
    graded_unit((h1 / h2).min(1.0), phase1, |t, wt| {
        let rho = (h1 * t1.0 - t * h2 * t2.0).hypot(h1 * t1.1 - t * h2 * t2.1);
        acc.radial(rho, 0.0, 1.0, scale * wt / (rho * rho));
    });
    // Triangle u/h1 <= v/h2, with the roles of the elements exchanged.
    graded_unit((h2 / h1).min(1.0), phase2, |t, wt| {
        let rho = (t * h1 * t1.0 - h2 * t2.0).hypot(t * h1 * t1.1 - h2 * t2.1);
        acc.radial(rho, 0.0, 1.0, scale * wt / (rho * rho));
    });
}

/// Shared vertex of two distinct elements, if any.
fn shared_vertex(p: &Segment, q: &Segment) -> Option<(Point2, Point2, Point2)> {
    let tol = 1e-12 * p.length().min(q.length());
    for (pv, pfar) in [(p.a, p.b), (p.b, p.a)] {
        for (qv, qfar) in [(q.a, q.b), (q.b, q.a)] {
            if pv.dist(qv) <= tol {
                return Some((pv, pfar, qfar));
            }
        }
    }
    None
}

fn separated_pair(p: Segment, q: Segment, acc: &mut KernelSum, depth: usize) {
    let (lp, lq) = (p.length(), q.length());
    let dist = segment_distance(&p, &q);
    if acc.s.re * dist > DECAY_CUTOFF {
        return;
    }
    let longest = lp.max(lq);
    if depth < 60 && (dist < ADMISSIBLE * longest || longest > acc.piece_cap()) {
        let (long, other, swap) = if lp >= lq { (p, q, false) } else { (q, p, true) };
        let m = long.midpoint();
        for half in [Segment { a: long.a, b: m }, Segment { a: m, b: long.b }] {
            if swap {
                separated_pair(other, half, acc, depth + 1);
            } else {
                separated_pair(half, other, acc, depth + 1);
            }
        }
        return;
    }
    let rp = gauss_legendre(gauss_order(dist / lp, acc.modulus * lp));
    let rq = gauss_legendre(gauss_order(dist / lq, acc.modulus * lq));
    for (&x, &wx) in rp.nodes.iter().zip(&rp.weights) {
        let px = p.at(x);
        for (&y, &wy) in rq.nodes.iter().zip(&rq.weights) {
            acc.node(px.dist(q.at(y)), wx * wy * lp * lq);
        }
    }
}

/// `∫_{E_i} ∫_{E_j} G(s, |x - y|)` for an arbitrary element pair.
fn pair_entry(p: &Segment, q: &Segment, same: bool, s: Complex64) -> Complex64 {
    let mut acc = KernelSum::new(s);
    if same {
        identical_pair(p.length(), &mut acc);
    } else if let Some((v, pfar, qfar)) = shared_vertex(p, q) {
        let (h1, h2) = (p.length(), q.length());
        let t1 = ((pfar.x - v.x) / h1, (pfar.y - v.y) / h1);
        let t2 = ((qfar.x - v.x) / h2, (qfar.y - v.y) / h2);
        let cos = t1.0 * t2.0 + t1.1 * t2.1;
        if cos < -1.0 + 1e-12 {
            collinear_pair(h1, h2, &mut acc);
        } else {
            corner_pair(h1, t1, h2, t2, &mut acc);
        }
    } else {
        if s.re * segment_distance(p, q) > DECAY_CUTOFF {
            return ZERO;
        }
        separated_pair(*p, *q, &mut acc, 0);
    }
    acc.green()
}

fn point_segment_rec(x: Point2, seg: Segment, acc: &mut KernelSum, depth: usize) {
    let len = seg.length();
    let (dist, _) = seg.distance_to(x);
    if acc.s.re * dist > DECAY_CUTOFF {
        return;
    }
    if depth < 60 && (dist < ADMISSIBLE * len || len > acc.piece_cap()) {
        let m = seg.midpoint();
        point_segment_rec(x, Segment { a: seg.a, b: m }, acc, depth + 1);
        point_segment_rec(x, Segment { a: m, b: seg.b }, acc, depth + 1);
        return;
    }
    for (t, w) in gauss_legendre(gauss_order(dist / len, acc.modulus * len)).mapped(0.0, 1.0) {
        acc.node(x.dist(seg.at(t)), w * len);
    }
}

/// `∫_E G(s, |x - y|) ds(y)`; points within `ON_SEGMENT · |E|` of `E` are
/// treated as lying on it and split the integral at the foot.
fn point_segment(x: Point2, seg: &Segment, s: Complex64) -> Complex64 {
    let len = seg.length();
    let (dist, t) = seg.distance_to(x);
    if s.re * dist > DECAY_CUTOFF {
        return ZERO;
    }
    let mut acc = KernelSum::new(s);
    if dist <= ON_SEGMENT * len {
        for piece in [t * len, (1.0 - t) * len] {
            if piece > 0.0 {
                acc.radial(piece, 1.0, 0.0, 1.0);
            }
        }
    } else {
        point_segment_rec(x, *seg, &mut acc, 0);
    }
    acc.green()
}

/// Dense Galerkin matrix of `V(s)` on P0 elements.
#[derive(Debug, Clone)]
pub struct GalerkinMatrix {
    pub entries: CMatrix,
    pub frequency: LaplaceFrequency,
}

impl GalerkinMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// LU factorization; logs a warning when the condition estimate exceeds
    /// `CONDITION_WARNING`.
    pub fn factor(&self) -> Result<DenseLu> {
        let lu = DenseLu::new(self.entries.clone(), "single-layer Galerkin matrix")?;
        let cond = lu.condition_estimate();
        if cond > CONDITION_WARNING {
            log::warn!(
                "Galerkin matrix at s = {} has condition estimate {cond:.3e}",
                self.frequency.value()
            );
        }
        Ok(lu)
    }

    pub fn apply(&self, x: &P0Vector) -> P0Vector {
        let v = &self.entries * CVector::from_column_slice(&x.coefficients);
        P0Vector {
            coefficients: v.iter().copied().collect(),
        }
    }

    pub fn solve(&self, rhs: &P0Vector) -> Result<P0Vector> {
        let x = self.factor()?.solve(&CVector::from_column_slice(&rhs.coefficients));
        Ok(P0Vector {
            coefficients: x.iter().copied().collect(),
        })
    }
}

/// Piecewise-constant coefficients, one per element.
#[derive(Debug, Clone, PartialEq)]
pub struct P0Vector {
    pub coefficients: Vec<Complex64>,
}

impl P0Vector {
    pub fn zeros(n: usize) -> Self {
        Self {
            coefficients: vec![ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Continuous piecewise-linear function with nodal values per component
/// (see [`Mesh::left_vertex`] for the numbering).
#[derive(Debug, Clone, PartialEq)]
pub struct P1Function {
    pub nodal_values: Vec<Complex64>,
}

impl P1Function {
    /// Constant surface gradient on `element`.
    pub fn gradient(&self, mesh: &Mesh, element: usize) -> Complex64 {
        let v = mesh.left_vertex(element);
        (self.nodal_values[v + 1] - self.nodal_values[v]) / mesh.h(element)
    }
}

fn check_len(mesh: &Mesh, len: usize, name: &'static str) -> Result<()> {
    if len != mesh.len() {
        return Err(Error::arg(
            name,
            format!("length {len} does not match {} elements", mesh.len()),
        ));
    }
    Ok(())
}

/// Unchecked assembly at a complex frequency with `Re s > 0`.
pub(crate) fn assemble_matrix(mesh: &Mesh, s: Complex64) -> CMatrix {
    let m = mesh.len();
    let els = mesh.elements();
    let rows: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| pair_entry(&els[i], &els[j], i == j, s)).collect())
        .collect();
    let mut a = CMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            a[(i, i + k)] = v;
            a[(i + k, i)] = v;
        }
    }
    a
}

/// Galerkin matrix of the single-layer operator.
pub fn assemble_single_layer(mesh: &Mesh, s: LaplaceFrequency) -> GalerkinMatrix {
    GalerkinMatrix {
        entries: assemble_matrix(mesh, s.value()),
        frequency: s,
    }
}

/// `∫_{E_j} g ds` for every element.
pub fn test_against_p0<V: Into<Complex64>>(mesh: &Mesh, g: impl Fn(Point2) -> V) -> P0Vector {
    let rule = gauss_legendre(RHS_POINTS);
    P0Vector {
        coefficients: mesh
            .elements()
            .iter()
            .map(|e| {
                let h = e.length();
                rule.mapped(0.0, 1.0)
                    .map(|(t, w)| g(e.at(t)).into() * (w * h))
                    .sum()
            })
            .collect(),
    }
}

/// Sample points of boundary traces: `TRACE_POINTS` Gauss points per element.
pub fn trace_points(mesh: &Mesh) -> Vec<Point2> {
    let rule = gauss_legendre(TRACE_POINTS);
    mesh.elements()
        .iter()
        .flat_map(|e| rule.nodes.iter().map(move |&t| e.at(t)))
        .collect()
}

/// `(V(s) φ)(x)` at the trace points of the mesh (unchecked frequency).
pub(crate) fn trace_samples(mesh: &Mesh, s: Complex64, density: &[Complex64]) -> Vec<Complex64> {
    let points = trace_points(mesh);
    let els = mesh.elements();
    points
        .par_iter()
        .map(|&x| {
            els.iter()
                .zip(density)
                .filter(|(_, d)| **d != ZERO)
                .map(|(e, &d)| d * point_segment(x, e, s))
                .sum()
        })
        .collect()
}

/// Boundary trace of the single-layer potential, projected onto P1.
pub fn boundary_trace_single_layer(
    mesh: &Mesh,
    s: LaplaceFrequency,
    density: &P0Vector,
) -> Result<P1Function> {
    check_len(mesh, density.len(), "density")?;
    let samples = trace_samples(mesh, s.value(), &density.coefficients);
    p1_l2_projection(mesh, &samples)
}

/// `(V(s) φ)(x)` at a single point, which may lie on the boundary.
pub fn single_layer_at(mesh: &Mesh, s: LaplaceFrequency, density: &P0Vector, x: Point2) -> Result<Complex64> {
    check_len(mesh, density.len(), "density")?;
    Ok(mesh
        .elements()
        .iter()
        .zip(&density.coefficients)
        .map(|(e, &d)| d * point_segment(x, e, s.value()))
        .sum())
}

/// Rejects points closer than `1e-10` to the boundary.
pub(crate) fn check_off_boundary(mesh: &Mesh, points: &[Point2]) -> Result<()> {
    for &p in points {
        let d = mesh.distance_to(p);
        if !(d > 1e-10) {
            return Err(Error::PointOnBoundary {
                x: p.x,
                y: p.y,
                distance: d,
            });
        }
    }
    Ok(())
}

/// Unchecked potential evaluation.
pub(crate) fn potential_values(mesh: &Mesh, s: Complex64, density: &[Complex64], points: &[Point2]) -> Vec<Complex64> {
    points
        .iter()
        .map(|&x| {
            mesh.elements()
                .iter()
                .zip(density)
                .map(|(e, &d)| d * point_segment(x, e, s))
                .sum()
        })
        .collect()
}

/// Single-layer potential `S(s) φ` at points off the boundary.
pub fn evaluate_potential(
    mesh: &Mesh,
    s: LaplaceFrequency,
    density: &P0Vector,
    points: &[Point2],
) -> Result<Vec<Complex64>> {
    check_len(mesh, density.len(), "density")?;
    check_off_boundary(mesh, points)?;
    Ok(potential_values(mesh, s.value(), &density.coefficients, points))
}

/// L² projection onto continuous P1 per component; `samples` holds values at
/// the `TRACE_POINTS` Gauss points of every element in order.
pub fn p1_l2_projection(mesh: &Mesh, samples: &[Complex64]) -> Result<P1Function> {
    if samples.len() != TRACE_POINTS * mesh.len() {
        return Err(Error::arg(
            "samples",
            format!(
                "expected {} samples, found {}",
                TRACE_POINTS * mesh.len(),
                samples.len()
            ),
        ));
    }
    let rule = gauss_legendre(TRACE_POINTS);
    let mut values = vec![ZERO; mesh.vertex_count()];
    for c in 0..mesh.component_count() {
        let range = mesh.component_range(c);
        let n = range.len() + 1;
        let first = mesh.left_vertex(range.start);
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n - 1];
        let mut rhs = vec![ZERO; n];
        for (k, e) in range.clone().enumerate() {
            let h = mesh.h(e);
            diag[k] += h / 3.0;
            diag[k + 1] += h / 3.0;
            off[k] += h / 6.0;
            for (q, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                let f = samples[TRACE_POINTS * e + q] * (w * h);
                rhs[k] += f * (1.0 - t);
                rhs[k + 1] += f * t;
            }
        }
        let x = solve_tridiagonal(&diag, &off, rhs);
        values[first..first + n].copy_from_slice(&x);
    }
    Ok(P1Function {
        nodal_values: values,
    })
}

/// Thomas algorithm for a symmetric positive definite tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], mut rhs: Vec<Complex64>) -> Vec<Complex64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    for i in 1..n {
        let m = off[i - 1] / d[i - 1];
        d[i] -= m * off[i - 1];
        let prev = rhs[i - 1];
        rhs[i] -= prev * m;
    }
    rhs[n - 1] /= d[n - 1];
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] = (rhs[i] - next * off[i]) / d[i];
    }
    rhs
}
