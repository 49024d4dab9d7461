//! Residual-based a posteriori error indicators and energy norms.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::assembly::{assemble_matrix, p1_l2_projection, trace_points, trace_samples, P1Function};
use crate::cq::{forward_cq_apply_with, shift_multiplier, CqScheme, StageSeries, Symmetry};
use crate::error::{Error, Result};
use crate::geometry::{common_refinement, Mesh};
use crate::linalg::{CMatrix, CVector};
use crate::solver::{time_points, DensityHistory, FieldHistory, ScatteringProblem};

/// Projected residual `R_h^τ = P_h - f_h` as nodal P1 values at every stage.
#[derive(Debug, Clone)]
pub struct ResidualHistory {
    pub nodal: StageSeries,
    pub mesh: Mesh,
    pub scheme: CqScheme,
}

impl ResidualHistory {
    pub fn tau(&self) -> f64 {
        self.scheme.tau()
    }

    /// Residuals at the time points `t_i = iτ`.
    pub fn at_time_points(&self) -> Vec<P1Function> {
        time_points(&self.scheme)
            .into_iter()
            .map(|(_, n)| P1Function {
                nodal_values: self.nodal.last_stage(n).to_vec(),
            })
            .collect()
    }
}

/// Which temporal derivatives enter the indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum DerivativeSet {
    /// `k ∈ {0}`.
    #[default]
    Zero,
    /// `k ∈ {0, 2}`.
    ZeroAndTwo,
}

/// Per-element indicators `η(E_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorVector {
    pub eta: Vec<f64>,
}

impl IndicatorVector {
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.eta.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("element_index,eta\n");
        for (j, e) in self.eta.iter().enumerate() {
            let _ = writeln!(out, "{j},{e:.17e}");
        }
        out
    }
}

/// Residual of the boundary integral equation projected onto P1.
///
/// The single-layer trace of the density is applied by convolution
/// quadrature at the trace points; the data are sampled there, passed
/// through the discrete shift in shifted form, and subtracted.
pub fn compute_residual(history: &DensityHistory, problem: &ScatteringProblem) -> Result<ResidualHistory> {
    let mesh = &history.mesh;
    let scheme = &history.scheme;
    let phi = &history.stages;
    if phi.dim() != mesh.len() {
        return Err(Error::MeshMismatch(format!(
            "density has {} entries for {} elements",
            phi.dim(),
            mesh.len()
        )));
    }
    let trace = forward_cq_apply_with(
        scheme,
        Symmetry::Real,
        |s, x| Ok(trace_samples(mesh, s, x)),
        phi,
    )?;
    let points = trace_points(mesh);
    let wave = problem.wave;
    let eta = problem.shift_eta;
    let mut data = StageSeries::from_fn(phi.steps(), phi.stages(), points.len(), |n, l| {
        let t = scheme.stage_time(n, l) + eta;
        points.iter().map(|&x| Complex64::new(-wave.value(x, t), 0.0)).collect()
    });
    if eta > 0.0 {
        data = forward_cq_apply_with(
            scheme,
            Symmetry::Real,
            |s, x| {
                let j = shift_multiplier(eta, s);
                Ok(x.iter().map(|v| v * j).collect())
            },
            &data,
        )?;
    }
    let mut nodal = StageSeries::zeros(phi.steps(), phi.stages(), mesh.vertex_count());
    for n in 0..phi.steps() {
        for l in 0..phi.stages() {
            let diff: Vec<Complex64> = trace
                .get(n, l)
                .iter()
                .zip(data.get(n, l))
                .map(|(a, b)| a - b)
                .collect();
            let p = p1_l2_projection(mesh, &diff)?;
            nodal.get_mut(n, l).copy_from_slice(&p.nodal_values);
        }
    }
    Ok(ResidualHistory {
        nodal,
        mesh: mesh.clone(),
        scheme: scheme.clone(),
    })
}

fn accumulate(mesh: &Mesh, scheme: &CqScheme, series: &StageSeries, sums: &mut [f64]) {
    for (_, n) in time_points(scheme) {
        let p = P1Function {
            nodal_values: series.last_stage(n).to_vec(),
        };
        for (j, acc) in sums.iter_mut().enumerate() {
            // ∇_Γ of a P1 function is constant per element, so the element
            // integral is exactly h |∇R|²
            *acc += mesh.h(j) * p.gradient(mesh, j).norm_sqr();
        }
    }
}

/// `η(E_j)² = τ h_j Σ_k Σ_i ∫_{E_j} |∇_Γ (∂_t^τ)^k R(t_i)|²`.
pub fn indicators(residual: &ResidualHistory, k_set: DerivativeSet) -> Result<IndicatorVector> {
    let mesh = &residual.mesh;
    let mut sums = vec![0.0; mesh.len()];
    accumulate(mesh, &residual.scheme, &residual.nodal, &mut sums);
    if k_set == DerivativeSet::ZeroAndTwo {
        let second = forward_cq_apply_with(
            &residual.scheme,
            Symmetry::Real,
            |s, x| Ok(x.iter().map(|v| v * s * s).collect()),
            &residual.nodal,
        )?;
        accumulate(mesh, &residual.scheme, &second, &mut sums);
    }
    let tau = residual.tau();
    Ok(IndicatorVector {
        eta: sums
            .iter()
            .enumerate()
            .map(|(j, s)| (tau * mesh.h(j) * s).sqrt())
            .collect(),
    })
}

/// `sqrt(Σ_j η(E_j)²)`.
pub fn global_estimate(ind: &IndicatorVector) -> f64 {
    ind.eta.iter().map(|e| e * e).sum::<f64>().sqrt()
}

fn quadratic_form(v: &CMatrix, x: &[Complex64]) -> f64 {
    let x = CVector::from_column_slice(x);
    (x.adjoint() * v * &x)[(0, 0)].re
}

/// `sqrt(τ Σ_i ⟨φ(t_i), V(1) φ(t_i)⟩)`.
pub fn energy_norm(history: &DensityHistory) -> f64 {
    let v = assemble_matrix(&history.mesh, Complex64::new(1.0, 0.0));
    let tau = history.scheme.tau();
    let sum: f64 = history
        .time_points()
        .iter()
        .map(|&(_, n)| quadratic_form(&v, history.stages.last_stage(n)))
        .sum();
    (tau * sum).max(0.0).sqrt()
}

/// Matches each time point of the coarser history with the step of the
/// finer one at the same time.
fn matched_steps(coarse: &CqScheme, fine: &CqScheme) -> Result<Vec<(usize, usize)>> {
    let ratio = coarse.tau() / fine.tau();
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::arg(
            "tau",
            format!("step {} is not a multiple of {}", coarse.tau(), fine.tau()),
        ));
    }
    if (coarse.final_time() - fine.final_time()).abs() > 1e-9 * coarse.final_time() {
        return Err(Error::arg("final_time", "histories cover different intervals"));
    }
    let k = k as usize;
    (1..=coarse.steps())
        .map(|i| {
            match (coarse.step_of_time_point(i), fine.step_of_time_point(i * k)) {
                (Some(a), Some(b)) => Ok((a, b)),
                _ => Err(Error::arg("tau", "time point outside the history")),
            }
        })
        .collect()
}

/// Energy norm of `a - b` for histories on possibly different meshes and
/// steps; the sum runs over the time points of the coarser step.
pub fn energy_distance(a: &DensityHistory, b: &DensityHistory) -> Result<f64> {
    let (coarse, fine) = if a.scheme.tau() >= b.scheme.tau() { (a, b) } else { (b, a) };
    let pairs = matched_steps(&coarse.scheme, &fine.scheme)?;
    let common = common_refinement(&coarse.mesh, &fine.mesh)?;
    let v = assemble_matrix(&common.mesh, Complex64::new(1.0, 0.0));
    let mut sum = 0.0;
    for (nc, nf) in pairs {
        let pc = coarse.stages.last_stage(nc);
        let pf = fine.stages.last_stage(nf);
        let e: Vec<Complex64> = common
            .parent_a
            .iter()
            .zip(&common.parent_b)
            .map(|(&i, &j)| pc[i] - pf[j])
            .collect();
        sum += quadratic_form(&v, &e);
    }
    Ok((coarse.scheme.tau() * sum).max(0.0).sqrt())
}

/// `sqrt(τ Σ_i Σ_k |u_a(x_k, t_i) - u_b(x_k, t_i)|²)` over the time points of
/// the coarser history.
pub fn point_error(a: &FieldHistory, b: &FieldHistory) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::arg("points", "field histories use different points"));
    }
    let (coarse, fine) = if a.times.len() <= b.times.len() { (a, b) } else { (b, a) };
    if coarse.times.is_empty() {
        return Ok(0.0);
    }
    let tau = coarse.times[0];
    let mut sum = 0.0;
    for (i, &t) in coarse.times.iter().enumerate() {
        let j = fine
            .times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or_else(|| Error::arg("times", format!("time {t} missing from the finer history")))?;
        for k in 0..coarse.values.len() {
            sum += (coarse.values[k][i] - fine.values[k][j]).powi(2);
        }
    }
    Ok((tau * sum).sqrt())
}
