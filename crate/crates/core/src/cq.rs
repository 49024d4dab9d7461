//! Convolution quadrature based on BDF and Radau IIA methods.
//!
//! Discrete convolutions are evaluated all at once: the stage sequence is
//! scaled by `λ^n`, transformed over the `N + 1` roots of unity, the
//! Laplace-domain symbol is applied independently at each contour point and
//! the result is transformed back.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigen_decompose, CMatrix};

/// Eigenvector bases with a larger condition number are rejected.
pub const EIGENBASIS_CONDITION_LIMIT: f64 = 1e8;
/// Default size of `λ^{N+1}`, balancing aliasing against amplified round-off.
pub const DEFAULT_ALIASING: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Implicit Runge–Kutta coefficients with a nonsingular `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    a: DMatrix<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    a_inv: DMatrix<f64>,
}

impl ButcherTableau {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let m = b.len();
        if m == 0 || a.nrows() != m || a.ncols() != m || c.len() != m {
            return Err(Error::arg("tableau", "inconsistent dimensions"));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::arg("tableau", "coefficient matrix A is singular"))?;
        Ok(Self { a, b, c, a_inv })
    }

    /// Radau IIA with `m ∈ {1, 2, 3}` stages.
    pub fn radau_iia(m: usize) -> Result<Self> {
        let (a, c) = match m {
            1 => (vec![1.0], vec![1.0]),
            2 => (
                vec![5.0 / 12.0, -1.0 / 12.0, 3.0 / 4.0, 1.0 / 4.0],
                vec![1.0 / 3.0, 1.0],
            ),
            3 => {
                let r6 = 6f64.sqrt();
                (
                    vec![
                        (88.0 - 7.0 * r6) / 360.0,
                        (296.0 - 169.0 * r6) / 1800.0,
                        (-2.0 + 3.0 * r6) / 225.0,
                        (296.0 + 169.0 * r6) / 1800.0,
                        (88.0 + 7.0 * r6) / 360.0,
                        (-2.0 - 3.0 * r6) / 225.0,
                        (16.0 - r6) / 36.0,
                        (16.0 + r6) / 36.0,
                        1.0 / 9.0,
                    ],
                    vec![(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0],
                )
            }
            _ => {
                return Err(Error::arg(
                    "stages",
                    format!("Radau IIA is available for 1 to 3 stages, got {m}"),
                ))
            }
        };
        let a = DMatrix::from_row_slice(m, m, &a);
        let b = a.row(m - 1).iter().copied().collect();
        Self::new(a, b, c)
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a_inv(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Stability function at infinity, `1 - b^T A^{-1} 𝟙`.
    pub fn r_infinity(&self) -> f64 {
        let m = self.stages();
        let row_sums: Vec<f64> = (0..m).map(|i| self.a_inv.row(i).sum()).collect();
        1.0 - self.b.iter().zip(&row_sums).map(|(b, r)| b * r).sum::<f64>()
    }
}

/// Time-stepping family underlying the quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CqMethod {
    RadauIIA(usize),
    Bdf(usize),
}

/// Time discretization: method, step `τ`, `N` steps and contour radius `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqScheme {
    method: CqMethod,
    tau: f64,
    steps: usize,
    lambda: f64,
    tableau: Option<ButcherTableau>,
}

impl CqScheme {
    /// Scheme with the default contour radius `λ = DEFAULT_ALIASING^{1/(N+1)}`.
    pub fn new(method: CqMethod, tau: f64, steps: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::arg("tau", format!("must be positive, got {tau}")));
        }
        if steps == 0 {
            return Err(Error::arg("steps", "must be at least 1"));
        }
        let tableau = match method {
            CqMethod::RadauIIA(m) => Some(ButcherTableau::radau_iia(m)?),
            CqMethod::Bdf(p) => {
                if !(1..=2).contains(&p) {
                    return Err(Error::arg(
                        "order",
                        format!("BDF order must be 1 or 2 for A-stability, got {p}"),
                    ));
                }
                None
            }
        };
        Ok(Self {
            method,
            tau,
            steps,
            lambda: default_lambda(steps),
            tableau,
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::arg("lambda", format!("must lie in (0, 1), got {lambda}")));
        }
        if !(lambda.powi(self.steps as i32 + 1) > 1e-300) {
            return Err(Error::arg("lambda", "lambda^(N+1) underflows"));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn method(&self) -> CqMethod {
        self.method
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of steps `N`; sequences carry `N + 1` entries.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn final_time(&self) -> f64 {
        self.tau * self.steps as f64
    }

    pub fn tableau(&self) -> Option<&ButcherTableau> {
        self.tableau.as_ref()
    }

    pub fn stages(&self) -> usize {
        self.tableau.as_ref().map_or(1, ButcherTableau::stages)
    }

    /// Stage offsets `c_ℓ`; BDF uses a single stage at offset 0.
    pub fn stage_offsets(&self) -> Vec<f64> {
        self.tableau.as_ref().map_or(vec![0.0], |t| t.c.clone())
    }

    /// Time of stage `ℓ` in step `n`.
    pub fn stage_time(&self, n: usize, stage: usize) -> f64 {
        (n as f64 + self.stage_offsets()[stage]) * self.tau
    }

    /// Step whose last stage sits at `t_i = iτ`, if it exists.
    pub fn step_of_time_point(&self, i: usize) -> Option<usize> {
        let n = match self.method {
            CqMethod::RadauIIA(_) => i.checked_sub(1)?,
            CqMethod::Bdf(_) => i,
        };
        (n <= self.steps).then_some(n)
    }

    /// Same method and step with a different number of steps.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        let mut s = Self::new(self.method, self.tau, steps)?;
        if (self.lambda - default_lambda(self.steps)).abs() > 0.0 {
            s = s.with_lambda(self.lambda.powf((self.steps as f64 + 1.0) / (steps as f64 + 1.0)))?;
        }
        Ok(s)
    }
}

/// `λ` with `λ^{N+1} = DEFAULT_ALIASING`.
pub fn default_lambda(steps: usize) -> f64 {
    DEFAULT_ALIASING.powf(1.0 / (steps as f64 + 1.0))
}

/// `δ(ζ) = Σ_{ℓ=1}^p (1-ζ)^ℓ / ℓ`.
pub fn bdf_symbol(p: usize, zeta: Complex64) -> Result<Complex64> {
    if !(1..=2).contains(&p) {
        return Err(Error::arg(
            "p",
            format!("BDF order must be 1 or 2 for A-stability, got {p}"),
        ));
    }
    let d = Complex64::new(1.0, 0.0) - zeta;
    Ok(if p == 1 { d } else { d + d * d * 0.5 })
}

/// `Δ(ζ) = A^{-1} - ζ/(1 - R(∞)ζ) A^{-1} 𝟙 b^T A^{-1}`.
pub fn rk_delta(tab: &ButcherTableau, zeta: Complex64) -> CMatrix {
    let m = tab.stages();
    let ai = &tab.a_inv;
    let ones_col: Vec<f64> = (0..m).map(|i| ai.row(i).sum()).collect();
    let b_row: Vec<f64> = (0..m)
        .map(|j| (0..m).map(|k| tab.b[k] * ai[(k, j)]).sum())
        .collect();
    let factor = zeta / (Complex64::new(1.0, 0.0) - zeta * tab.r_infinity());
    CMatrix::from_fn(m, m, |i, j| Complex64::new(ai[(i, j)], 0.0) - factor * (ones_col[i] * b_row[j]))
}

/// Laplace-domain data at one contour point.
#[derive(Debug, Clone)]
pub enum FrequencyData {
    /// BDF: `s = δ(ζ)/τ`.
    Scalar(Complex64),
    /// Runge–Kutta: `Δ(ζ)/τ = Q diag(s) Q^{-1}`.
    Diagonalized {
        frequencies: Vec<Complex64>,
        q: CMatrix,
        q_inv: CMatrix,
        condition: f64,
    },
}

impl FrequencyData {
    pub fn frequencies(&self) -> Vec<Complex64> {
        match self {
            FrequencyData::Scalar(s) => vec![*s],
            FrequencyData::Diagonalized { frequencies, .. } => frequencies.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContourPoint {
    pub zeta: Complex64,
    pub data: FrequencyData,
}

fn contour_zeta(scheme: &CqScheme, l: usize) -> Complex64 {
    let count = scheme.steps + 1;
    Complex64::from_polar(
        scheme.lambda,
        2.0 * std::f64::consts::PI * l as f64 / count as f64,
    )
}

fn frequency_data(scheme: &CqScheme, l: usize) -> Result<FrequencyData> {
    let zeta = contour_zeta(scheme, l);
    match (&scheme.tableau, scheme.method) {
        (None, CqMethod::Bdf(p)) => Ok(FrequencyData::Scalar(bdf_symbol(p, zeta)? / scheme.tau)),
        (Some(tab), _) => {
            let delta = rk_delta(tab, zeta) / Complex64::new(scheme.tau, 0.0);
            let eig = eigen_decompose(&delta).ok_or(Error::IllConditionedEigenbasis {
                index: l,
                condition: f64::INFINITY,
            })?;
            if eig.condition > EIGENBASIS_CONDITION_LIMIT {
                return Err(Error::IllConditionedEigenbasis {
                    index: l,
                    condition: eig.condition,
                });
            }
            Ok(FrequencyData::Diagonalized {
                frequencies: eig.values,
                q: eig.vectors,
                q_inv: eig.inverse,
                condition: eig.condition,
            })
        }
        (None, CqMethod::RadauIIA(_)) => unreachable!("Radau schemes carry a tableau"),
    }
}

/// Contour points `ζ_l = λ e^{2πil/(N+1)}`, `l = 0..=N`, with their
/// frequency data.
pub fn contour_frequencies(scheme: &CqScheme) -> Result<Vec<ContourPoint>> {
    (0..=scheme.steps)
        .map(|l| {
            Ok(ContourPoint {
                zeta: contour_zeta(scheme, l),
                data: frequency_data(scheme, l)?,
            })
        })
        .collect()
}

/// `e^{-sη}`.
pub fn shift_multiplier(eta: f64, s: Complex64) -> Complex64 {
    (-s * eta).exp()
}

/// Sequence of `N + 1` steps, each holding `stages` vectors of length `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSeries {
    steps: usize,
    stages: usize,
    dim: usize,
    data: Vec<Complex64>,
}

impl StageSeries {
    pub fn zeros(steps: usize, stages: usize, dim: usize) -> Self {
        Self {
            steps,
            stages,
            dim,
            data: vec![ZERO; steps * stages * dim],
        }
    }

    /// Series whose entry `(n, ℓ)` is produced by `f`.
    pub fn from_fn(
        steps: usize,
        stages: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize) -> Vec<Complex64>,
    ) -> Self {
        let mut s = Self::zeros(steps, stages, dim);
        for n in 0..steps {
            for l in 0..stages {
                let v = f(n, l);
                assert_eq!(v.len(), dim, "stage vector length");
                s.get_mut(n, l).copy_from_slice(&v);
            }
        }
        s
    }

    /// Scalar series from a function of `(n, ℓ)`.
    pub fn scalar(steps: usize, stages: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self::from_fn(steps, stages, 1, |n, l| vec![f(n, l)])
    }

    /// Number of stored steps (`N + 1` for a scheme with `N` steps).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, n: usize, stage: usize) -> &[Complex64] {
        let start = (n * self.stages + stage) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn get_mut(&mut self, n: usize, stage: usize) -> &mut [Complex64] {
        let start = (n * self.stages + stage) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// Last-stage vector of step `n`.
    pub fn last_stage(&self, n: usize) -> &[Complex64] {
        self.get(n, self.stages - 1)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    /// First `steps` steps.
    pub fn truncated(&self, steps: usize) -> Self {
        let len = steps * self.stages * self.dim;
        Self {
            steps,
            stages: self.stages,
            dim: self.dim,
            data: self.data[..len].to_vec(),
        }
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn map_values(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            data: self.data.iter().map(|&z| f(z)).collect(),
            ..self.clone()
        }
    }
}

/// Whether the symbol satisfies `K(conj s) = conj K(s)`, so that real data
/// has conjugate-symmetric transforms and half the contour suffices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Real,
}

struct Transform {
    count: usize,
    lambda: f64,
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
}

impl Transform {
    fn new(count: usize, lambda: f64) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            count,
            lambda,
            inverse: planner.plan_fft_inverse(count),
            forward: planner.plan_fft_forward(count),
        }
    }

    /// `ĝ_l = Σ_n g^n ζ_l^n`, returned frequency-major.
    fn analyse(&self, g: &StageSeries) -> Vec<Complex64> {
        let cols = g.stages * g.dim;
        let count = self.count;
        let mut buf = vec![ZERO; cols * count];
        buf.par_chunks_mut(count).enumerate().for_each(|(c, col)| {
            let mut scale = 1.0;
            for (n, v) in col.iter_mut().enumerate() {
                *v = g.data[n * cols + c] * scale;
                scale *= self.lambda;
            }
            self.inverse.process(col);
        });
        transpose(&buf, cols, count)
    }

    /// Inverse of `analyse` for frequency-major data with `cols` columns.
    fn synthesise(&self, spectrum: &[Complex64], stages: usize, dim: usize) -> StageSeries {
        let cols = stages * dim;
        let count = self.count;
        let mut buf = transpose(spectrum, count, cols);
        let inv_count = 1.0 / count as f64;
        let lambda = self.lambda;
        buf.par_chunks_mut(count).for_each(|col| {
            self.forward.process(col);
            let mut scale = inv_count;
            let inv_lambda = 1.0 / lambda;
            for v in col.iter_mut() {
                *v *= scale;
                scale *= inv_lambda;
            }
        });
        StageSeries {
            steps: count,
            stages,
            dim,
            data: transpose(&buf, cols, count),
        }
    }
}

/// Row-major `rows × cols` to row-major `cols × rows`.
fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Contour data for the needed points, retrying once with `λ` reduced by 1%
/// when an eigenbasis is ill-conditioned.
fn prepare(scheme: &CqScheme, needed: &[usize]) -> Result<(CqScheme, Vec<FrequencyData>)> {
    let attempt = |sch: &CqScheme| -> Result<Vec<FrequencyData>> {
        needed.iter().map(|&l| frequency_data(sch, l)).collect()
    };
    match attempt(scheme) {
        Ok(d) => Ok((scheme.clone(), d)),
        Err(Error::IllConditionedEigenbasis { index, condition }) => {
            log::warn!(
                "eigenbasis at contour point {index} has condition {condition:.3e}; retrying with lambda reduced by 1%"
            );
            let retry = scheme.clone().with_lambda(scheme.lambda * 0.99)?;
            let d = attempt(&retry)?;
            Ok((retry, d))
        }
        Err(e) => Err(e),
    }
}

/// Applies `action(s, x)` at the needed contour points and returns the
/// frequency-major output with its per-stage dimension.
fn apply_on_contour<F>(
    count: usize,
    symmetry: Symmetry,
    needed: &[usize],
    data: &[FrequencyData],
    spectrum: &[Complex64],
    stages: usize,
    dim: usize,
    action: F,
) -> Result<(Vec<Complex64>, usize)>
where
    F: Fn(Complex64, &[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    let cols = stages * dim;
    let outputs: Vec<Vec<Complex64>> = needed
        .par_iter()
        .zip(data)
        .map(|(&l, fd)| {
            let input = &spectrum[l * cols..(l + 1) * cols];
            apply_at_point(fd, input, stages, dim, &action).map_err(|e| Error::FrequencySolve {
                index: l,
                s: format!("{:?}", fd.frequencies()),
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let out_cols = outputs.first().map_or(0, Vec::len);
    let mut result = vec![ZERO; count * out_cols];
    for (&l, out) in needed.iter().zip(&outputs) {
        if out.len() != out_cols {
            return Err(Error::arg("symbol", "output dimension varies across frequencies"));
        }
        result[l * out_cols..(l + 1) * out_cols].copy_from_slice(out);
        if symmetry == Symmetry::Real && l != 0 && count - l != l {
            let mirror = count - l;
            for (k, v) in out.iter().enumerate() {
                result[mirror * out_cols + k] = v.conj();
            }
        }
    }
    Ok((result, out_cols / stages))
}

fn apply_at_point<F>(
    fd: &FrequencyData,
    input: &[Complex64],
    stages: usize,
    dim: usize,
    action: &F,
) -> Result<Vec<Complex64>>
where
    F: Fn(Complex64, &[Complex64]) -> Result<Vec<Complex64>>,
{
    match fd {
        FrequencyData::Scalar(s) => action(*s, input),
        FrequencyData::Diagonalized {
            frequencies, q, q_inv, ..
        } => {
            let m = stages;
            let mut outs: Vec<Vec<Complex64>> = Vec::with_capacity(m);
            for k in 0..m {
                let mut h = vec![ZERO; dim];
                for l in 0..m {
                    let c = q_inv[(k, l)];
                    for (hd, x) in h.iter_mut().zip(&input[l * dim..(l + 1) * dim]) {
                        *hd += c * x;
                    }
                }
                outs.push(action(frequencies[k], &h)?);
            }
            let out_dim = outs[0].len();
            let mut result = vec![ZERO; m * out_dim];
            for l in 0..m {
                for (k, o) in outs.iter().enumerate() {
                    let c = q[(l, k)];
                    for (r, x) in result[l * out_dim..(l + 1) * out_dim].iter_mut().zip(o) {
                        *r += c * x;
                    }
                }
            }
            Ok(result)
        }
    }
}

fn check_series(scheme: &CqScheme, g: &StageSeries) -> Result<()> {
    if g.steps != scheme.steps + 1 {
        return Err(Error::arg(
            "series",
            format!("expected {} steps, found {}", scheme.steps + 1, g.steps),
        ));
    }
    if g.stages != scheme.stages() {
        return Err(Error::arg(
            "series",
            format!("expected {} stages, found {}", scheme.stages(), g.stages),
        ));
    }
    Ok(())
}

/// `K(∂_t^τ) g` with `symbol(s, x) = K(s) x`.
pub fn forward_cq_apply<F>(scheme: &CqScheme, symbol: F, g: &StageSeries) -> Result<StageSeries>
where
    F: Fn(Complex64, &[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    forward_cq_apply_with(scheme, Symmetry::General, symbol, g)
}

/// `forward_cq_apply` with an explicit symmetry hint; `Symmetry::Real`
/// requires real data and a symbol commuting with conjugation.
pub fn forward_cq_apply_with<F>(
    scheme: &CqScheme,
    symmetry: Symmetry,
    symbol: F,
    g: &StageSeries,
) -> Result<StageSeries>
where
    F: Fn(Complex64, &[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    check_series(scheme, g)?;
    let symmetry = if symmetry == Symmetry::Real && !g.is_real() {
        Symmetry::General
    } else {
        symmetry
    };
    let count = scheme.steps + 1;
    let needed: Vec<usize> = match symmetry {
        Symmetry::General => (0..count).collect(),
        Symmetry::Real => (0..=count / 2).collect(),
    };
    let (used, data) = prepare(scheme, &needed)?;
    let transform = Transform::new(count, used.lambda);
    let spectrum = transform.analyse(g);
    let (out, out_dim) = apply_on_contour(count, symmetry, &needed, &data, &spectrum, g.stages, g.dim, symbol)?;
    let series = transform.synthesise(&out, g.stages, out_dim);
    Ok(match symmetry {
        Symmetry::Real => series.map_values(|z| Complex64::new(z.re, 0.0)),
        Symmetry::General => series,
    })
}

/// Solves `K(∂_t^τ) φ = rhs` given `resolvent(s, x) = K(s)^{-1} x`.
pub fn solve_cq<F>(scheme: &CqScheme, resolvent: F, rhs: &StageSeries) -> Result<StageSeries>
where
    F: Fn(Complex64, &[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    forward_cq_apply_with(scheme, Symmetry::General, resolvent, rhs)
}

/// `solve_cq` with a symmetry hint.
pub fn solve_cq_with<F>(
    scheme: &CqScheme,
    symmetry: Symmetry,
    resolvent: F,
    rhs: &StageSeries,
) -> Result<StageSeries>
where
    F: Fn(Complex64, &[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    forward_cq_apply_with(scheme, symmetry, resolvent, rhs)
}

/// Convolution weights `W_0, ..., W_{count-1}` of a scalar symbol, as
/// `m × m` blocks (`1 × 1` for BDF).
pub fn scalar_cq_weights<F>(scheme: &CqScheme, symbol: F, count: usize) -> Result<Vec<CMatrix>>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let len = scheme.steps + 1;
    if count > len {
        return Err(Error::arg(
            "count",
            format!("at most N + 1 = {len} weights are available, requested {count}"),
        ));
    }
    let m = scheme.stages();
    // Column j of W_n is the response to a unit impulse in stage j at step 0.
    let mut weights = vec![CMatrix::zeros(m, m); count];
    for j in 0..m {
        let impulse = StageSeries::scalar(len, m, |n, l| {
            if n == 0 && l == j {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        let out = forward_cq_apply(scheme, |s, x| Ok(x.iter().map(|v| v * symbol(s)).collect()), &impulse)?;
        for (n, w) in weights.iter_mut().enumerate() {
            for i in 0..m {
                w[(i, j)] = out.get(n, i)[0];
            }
        }
    }
    Ok(weights)
}
