//! Solve, estimate, mark and refine.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{compute_residual, energy_norm, global_estimate, indicators, DerivativeSet, IndicatorVector};
use crate::geometry::{refine, Mesh};
use crate::solver::{solve_density, DensityHistory, ScatteringProblem};

/// Marking rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MarkingStrategy {
    /// `η(E_j) > θ η_max`.
    #[default]
    Maximum,
    /// Smallest set with `Σ_marked η² ≥ θ² Σ η²`.
    Dorfler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub theta: f64,
    pub max_iterations: usize,
    pub target_estimate: f64,
    pub k_set: DerivativeSet,
    pub marking: MarkingStrategy,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            max_iterations: 8,
            target_estimate: 0.0,
            k_set: DerivativeSet::Zero,
            marking: MarkingStrategy::Maximum,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        if self.max_iterations == 0 {
            return Err(Error::arg("max_iterations", "must be at least 1"));
        }
        if !(self.target_estimate >= 0.0) {
            return Err(Error::arg(
                "target_estimate",
                format!("must be nonnegative, got {}", self.target_estimate),
            ));
        }
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::arg("theta", format!("must lie in (0, 1), got {theta}")));
    }
    Ok(())
}

/// `{ j : η(E_j) > θ max_k η(E_k) }`.
pub fn mark(ind: &IndicatorVector, theta: f64) -> Result<BTreeSet<usize>> {
    check_theta(theta)?;
    let max = ind.max();
    if max == 0.0 {
        return Ok(BTreeSet::new());
    }
    Ok(ind
        .eta
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > theta * max)
        .map(|(j, _)| j)
        .collect())
}

/// Smallest set of largest indicators carrying a `θ²` share of `Σ η²`;
/// ties are broken by element index.
pub fn mark_dorfler(ind: &IndicatorVector, theta: f64) -> Result<BTreeSet<usize>> {
    check_theta(theta)?;
    let total: f64 = ind.eta.iter().map(|e| e * e).sum();
    if total == 0.0 {
        return Ok(BTreeSet::new());
    }
    let mut order: Vec<usize> = (0..ind.len()).collect();
    order.sort_by(|&a, &b| ind.eta[b].total_cmp(&ind.eta[a]).then(a.cmp(&b)));
    let goal = theta * theta * total;
    let mut acc = 0.0;
    let mut out = BTreeSet::new();
    for j in order {
        if acc >= goal {
            break;
        }
        acc += ind.eta[j] * ind.eta[j];
        out.insert(j);
    }
    Ok(out)
}

/// One pass of the loop.
#[derive(Debug, Clone)]
pub struct AdaptiveStep {
    pub mesh: Mesh,
    pub dofs: usize,
    pub estimate: f64,
    pub energy: f64,
    pub marked: usize,
    pub indicators: IndicatorVector,
}

#[derive(Debug, Clone, Default)]
pub struct AdaptiveTrace {
    pub steps: Vec<AdaptiveStep>,
    /// Density of the last iteration.
    pub density: Option<DensityHistory>,
}

impl AdaptiveTrace {
    /// The last mesh solved on.
    pub fn final_mesh(&self) -> Option<&Mesh> {
        self.steps.last().map(|s| &s.mesh)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,dofs,estimate,marked\n");
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{:.17e},{}", s.dofs, s.estimate, s.marked);
        }
        out
    }
}

/// Failure inside the loop with the iterations completed before it.
#[derive(Debug)]
pub struct AdaptiveFailure {
    pub error: Error,
    pub partial: AdaptiveTrace,
}

impl std::fmt::Display for AdaptiveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "adaptive loop failed after {} iterations: {}",
            self.partial.steps.len(),
            self.error
        )
    }
}

impl std::error::Error for AdaptiveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<AdaptiveFailure> for Error {
    fn from(f: AdaptiveFailure) -> Self {
        f.error
    }
}

/// Runs until the estimate reaches the target, nothing is marked, or
/// `max_iterations` solves have been done.
pub fn adaptive_loop(
    problem: &ScatteringProblem,
    initial: &Mesh,
    cfg: &AdaptiveConfig,
) -> std::result::Result<AdaptiveTrace, AdaptiveFailure> {
    let mut trace = AdaptiveTrace::default();
    if let Err(error) = cfg.validate() {
        return Err(AdaptiveFailure { error, partial: trace });
    }
    let mut mesh = initial.clone();
    for it in 0..cfg.max_iterations {
        let step = (|| -> Result<(AdaptiveStep, BTreeSet<usize>, DensityHistory)> {
            let density = solve_density(problem, &mesh)?;
            let ind = indicators(&compute_residual(&density, problem)?, cfg.k_set)?;
            let estimate = global_estimate(&ind);
            let marked = if estimate <= cfg.target_estimate {
                BTreeSet::new()
            } else {
                match cfg.marking {
                    MarkingStrategy::Maximum => mark(&ind, cfg.theta)?,
                    MarkingStrategy::Dorfler => mark_dorfler(&ind, cfg.theta)?,
                }
            };
            let step = AdaptiveStep {
                mesh: mesh.clone(),
                dofs: mesh.len(),
                estimate,
                energy: energy_norm(&density),
                marked: marked.len(),
                indicators: ind,
            };
            Ok((step, marked, density))
        })();
        let (step, marked, density) = match step {
            Ok(v) => v,
            Err(error) => return Err(AdaptiveFailure { error, partial: trace }),
        };
        log::info!(
            "adaptive iteration {it}: {} elements, estimate {:.4e}, {} marked",
            step.dofs,
            step.estimate,
            step.marked
        );
        trace.steps.push(step);
        trace.density = Some(density);
        if marked.is_empty() || it + 1 == cfg.max_iterations {
            break;
        }
        mesh = match refine(&mesh, &marked) {
            Ok(m) => m,
            Err(error) => return Err(AdaptiveFailure { error, partial: trace }),
        };
    }
    Ok(trace)
}
