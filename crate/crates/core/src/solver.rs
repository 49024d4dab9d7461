//! Time-domain scattering by a sound-soft boundary: incident data, density
//! solves in plain and shifted form, and the scattered field.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_single_layer, check_off_boundary, potential_values, test_against_p0};
use crate::cq::{forward_cq_apply_with, shift_multiplier, solve_cq_with, CqScheme, StageSeries, Symmetry};
use crate::error::{Error, Result};
use crate::geometry::{GeometrySpec, Mesh, Point2};
use crate::kernels::LaplaceFrequency;
use crate::linalg::CVector;

/// Windowed plane wave `u^inc(x, t) = f(t - x·d - delay)` with
/// `f(t) = sin(ω(t - t_lag)) H(t) H(L - t)` and a logistic `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentWave {
    pub omega: f64,
    pub window: f64,
    pub beta: f64,
    pub t_lag: f64,
    pub direction: (f64, f64),
    /// Arrival delay keeping the data negligible for `t ≤ 0`.
    pub delay: f64,
}

impl Default for IncidentWave {
    fn default() -> Self {
        Self {
            omega: 2.0,
            window: 2.0,
            beta: 5.0,
            t_lag: 4.0,
            direction: (-3f64.sqrt() / 2.0, 0.5),
            delay: 5.0,
        }
    }
}

impl IncidentWave {
    pub fn validate(&self) -> Result<()> {
        let (dx, dy) = self.direction;
        if !((dx.hypot(dy) - 1.0).abs() < 1e-12) {
            return Err(Error::arg("direction", format!("must be a unit vector, got ({dx}, {dy})")));
        }
        if !(self.beta > 0.0) {
            return Err(Error::arg("beta", format!("must be positive, got {}", self.beta)));
        }
        for (name, v) in [("omega", self.omega), ("window", self.window), ("t_lag", self.t_lag), ("delay", self.delay)] {
            if !v.is_finite() {
                return Err(Error::arg(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// A wave that vanishes identically.
    pub fn silent() -> Self {
        Self {
            omega: 0.0,
            ..Self::default()
        }
    }

    pub fn value(&self, x: Point2, t: f64) -> f64 {
        let (dx, dy) = self.direction;
        window_profile(self, t - x.x * dx - x.y * dy - self.delay)
    }
}

/// `1 - 1/(1 + e^{βt})`, evaluated without overflow.
fn smoothed_heaviside(beta: f64, t: f64) -> f64 {
    let z = beta * t;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `f(t) = sin(ω(t - t_lag)) H(t) H(L - t)`.
pub fn window_profile(wave: &IncidentWave, t: f64) -> f64 {
    (wave.omega * (t - wave.t_lag)).sin()
        * smoothed_heaviside(wave.beta, t)
        * smoothed_heaviside(wave.beta, wave.window - t)
}

/// Geometry, incident wave and time discretization of one scattering run.
#[derive(Debug, Clone)]
pub struct ScatteringProblem {
    pub geometry: GeometrySpec,
    pub wave: IncidentWave,
    pub final_time: f64,
    pub scheme: CqScheme,
    /// Temporal shift `η ≥ 0`; zero selects the plain formulation.
    pub shift_eta: f64,
}

impl ScatteringProblem {
    pub fn new(
        geometry: GeometrySpec,
        wave: IncidentWave,
        scheme: CqScheme,
        shift_eta: f64,
    ) -> Result<Self> {
        wave.validate()?;
        if !(shift_eta >= 0.0) || !shift_eta.is_finite() {
            return Err(Error::arg("shift_eta", format!("must be nonnegative, got {shift_eta}")));
        }
        geometry.polylines()?;
        Ok(Self {
            geometry,
            wave,
            final_time: scheme.final_time(),
            scheme,
            shift_eta,
        })
    }

    /// Steps appended so that the shifted data covers `[T, T + η]`.
    fn extra_steps(&self) -> usize {
        if self.shift_eta > 0.0 {
            (self.shift_eta / self.scheme.tau() - 1e-12).ceil() as usize
        } else {
            0
        }
    }

    fn extended_scheme(&self) -> Result<CqScheme> {
        match self.extra_steps() {
            0 => Ok(self.scheme.clone()),
            k => self.scheme.with_steps(self.scheme.steps() + k),
        }
    }
}

fn rhs_on(problem: &ScatteringProblem, scheme: &CqScheme, mesh: &Mesh) -> StageSeries {
    let wave = problem.wave;
    let eta = problem.shift_eta;
    StageSeries::from_fn(scheme.steps() + 1, scheme.stages(), mesh.len(), |n, l| {
        let t = scheme.stage_time(n, l) + eta;
        test_against_p0(mesh, |x| -wave.value(x, t)).coefficients
    })
}

/// `-⟨v_h, u^inc(t)⟩` at every stage time, sampled at `t + η` in shifted form.
pub fn incident_rhs(problem: &ScatteringProblem, mesh: &Mesh) -> StageSeries {
    rhs_on(problem, &problem.scheme, mesh)
}

/// Discrete density `φ_h^τ` with its mesh and scheme.
#[derive(Debug, Clone)]
pub struct DensityHistory {
    pub stages: StageSeries,
    pub mesh: Mesh,
    pub scheme: CqScheme,
}

impl DensityHistory {
    /// Time points `t_i = iτ`, `i = 1..=N`, with the step holding them.
    pub fn time_points(&self) -> Vec<(f64, usize)> {
        time_points(&self.scheme)
    }
}

pub(crate) fn time_points(scheme: &CqScheme) -> Vec<(f64, usize)> {
    (1..=scheme.steps())
        .filter_map(|i| scheme.step_of_time_point(i).map(|n| (i as f64 * scheme.tau(), n)))
        .collect()
}

/// Solves `V(∂_t^τ) φ = rhs`; in shifted form the resolvent carries
/// `e^{-sη}`, the horizon is extended by `⌈η/τ⌉` steps and the tail dropped.
pub fn solve_density(problem: &ScatteringProblem, mesh: &Mesh) -> Result<DensityHistory> {
    let scheme = problem.extended_scheme()?;
    let rhs = rhs_on(problem, &scheme, mesh);
    let eta = problem.shift_eta;
    let resolvent = |s: Complex64, x: &[Complex64]| -> Result<Vec<Complex64>> {
        if x.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
            return Ok(x.to_vec());
        }
        let lu = assemble_single_layer(mesh, LaplaceFrequency::new(s)?).factor()?;
        let shift = shift_multiplier(eta, s);
        Ok(lu.solve(&CVector::from_column_slice(x)).iter().map(|v| v * shift).collect())
    };
    let phi = solve_cq_with(&scheme, Symmetry::Real, resolvent, &rhs)?;
    Ok(DensityHistory {
        stages: phi.truncated(problem.scheme.steps() + 1),
        mesh: mesh.clone(),
        scheme: problem.scheme.clone(),
    })
}

/// Scattered field at points off the boundary, sampled at `t_i = iτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHistory {
    pub times: Vec<f64>,
    /// `values[k][i]` is the field at point `k` and time `times[i]`.
    pub values: Vec<Vec<f64>>,
}

/// `u = S(∂_t^τ) φ` at the given points.
pub fn evaluate_field(history: &DensityHistory, points: &[Point2]) -> Result<FieldHistory> {
    let mesh = &history.mesh;
    check_off_boundary(mesh, points)?;
    let symbol = |s: Complex64, x: &[Complex64]| -> Result<Vec<Complex64>> {
        Ok(potential_values(mesh, s, x, points))
    };
    let out = if points.is_empty() {
        StageSeries::zeros(history.stages.steps(), history.stages.stages(), 0)
    } else {
        forward_cq_apply_with(&history.scheme, Symmetry::Real, symbol, &history.stages)?
    };
    let tp = history.time_points();
    Ok(FieldHistory {
        times: tp.iter().map(|&(t, _)| t).collect(),
        values: (0..points.len())
            .map(|k| tp.iter().map(|&(_, n)| out.last_stage(n)[k].re).collect())
            .collect(),
    })
}
