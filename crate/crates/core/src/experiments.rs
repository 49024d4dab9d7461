//! Convergence, efficiency and snapshot studies with CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{adaptive_loop, AdaptiveConfig, AdaptiveTrace, MarkingStrategy};
use crate::cq::{CqMethod, CqScheme};
use crate::error::{Error, Result};
use crate::estimator::{
    compute_residual, energy_distance, global_estimate, indicators, point_error, DerivativeSet,
};
use crate::geometry::{build_mesh, graded_mesh, GeometrySpec, Mesh, Point2};
use crate::solver::{evaluate_field, solve_density, DensityHistory, FieldHistory, IncidentWave, ScatteringProblem};

/// Observation points for point errors.
pub const OBSERVATION_POINTS: [Point2; 4] = [
    Point2::new(2.0, 2.0),
    Point2::new(-2.0, 2.0),
    Point2::new(-2.0, -2.0),
    Point2::new(2.0, -2.0),
];

/// Grid points closer than this to Γ are left out of field snapshots.
const SNAPSHOT_CLEARANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryName {
    FlatScreen,
    Wedge,
    Trapping,
}

impl GeometryName {
    pub fn spec(self) -> GeometrySpec {
        match self {
            GeometryName::FlatScreen => GeometrySpec::FlatScreen,
            GeometryName::Wedge => GeometrySpec::Wedge,
            GeometryName::Trapping => GeometrySpec::Trapping,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GeometryName::FlatScreen => "flat-screen",
            GeometryName::Wedge => "wedge",
            GeometryName::Trapping => "trapping",
        }
    }
}

impl std::str::FromStr for GeometryName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat-screen" => Ok(GeometryName::FlatScreen),
            "wedge" => Ok(GeometryName::Wedge),
            "trapping" => Ok(GeometryName::Trapping),
            _ => Err(config_error("geometry", format!("unknown geometry `{s}`"))),
        }
    }
}

/// Mesh refinement strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Uniform,
    Adaptive,
    /// Algebraic grading `(j/n)^β` toward every component endpoint.
    Graded(f64),
}

impl Strategy {
    pub fn label(self) -> String {
        String::from(self)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Strategy::Uniform),
            "adaptive" => Ok(Strategy::Adaptive),
            _ => {
                let beta = s
                    .strip_prefix("graded")
                    .map(|b| b.trim_start_matches(':'))
                    .and_then(|b| b.parse::<f64>().ok())
                    .ok_or_else(|| config_error("strategy", format!("unknown strategy `{s}`")))?;
                if !(beta >= 1.0 && beta.is_finite()) {
                    return Err(config_error("strategy", format!("grading exponent must be at least 1, got {beta}")));
                }
                Ok(Strategy::Graded(beta))
            }
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        match s {
            Strategy::Uniform => "uniform".into(),
            Strategy::Adaptive => "adaptive".into(),
            Strategy::Graded(b) => format!("graded{b}"),
        }
    }
}

fn config_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

/// All study parameters; every field defaults to the flat-screen setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryName,
    pub omega: f64,
    pub window: f64,
    pub beta: f64,
    pub t_lag: f64,
    pub direction: [f64; 2],
    pub delay: f64,
    pub final_time: f64,
    pub tau: f64,
    /// `radau1..3`, `bdf1` or `bdf2`.
    pub method: String,
    pub shift_eta: f64,
    pub strategy: Strategy,
    pub theta: f64,
    pub marking: MarkingStrategy,
    pub k_set: DerivativeSet,
    /// Refinement levels of uniform and graded meshes.
    pub levels: usize,
    /// Iterations of the adaptive loop.
    pub iterations: usize,
    /// Elements per component of the coarsest uniform and adaptive mesh.
    pub initial_elements: usize,
    pub taus: Vec<f64>,
    pub benchmark_tau: f64,
    pub efficiency_taus: Vec<f64>,
    /// Adaptive meshes entering the efficiency grid.
    pub efficiency_meshes: usize,
    pub snapshot_times: Vec<f64>,
    pub grid_points: usize,
    pub grid_extent: f64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let w = IncidentWave::default();
        Self {
            geometry: GeometryName::FlatScreen,
            omega: w.omega,
            window: w.window,
            beta: w.beta,
            t_lag: w.t_lag,
            direction: [w.direction.0, w.direction.1],
            delay: w.delay,
            final_time: 10.0,
            tau: 0.1,
            method: "radau2".into(),
            shift_eta: 0.0,
            strategy: Strategy::Adaptive,
            theta: 0.5,
            marking: MarkingStrategy::Maximum,
            k_set: DerivativeSet::Zero,
            levels: 4,
            iterations: 10,
            initial_elements: 4,
            taus: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            benchmark_tau: 10.0 / 6400.0,
            efficiency_taus: vec![0.4, 0.2, 0.1, 0.05],
            efficiency_meshes: 4,
            snapshot_times: vec![2.0, 4.0, 6.0, 8.0],
            grid_points: 101,
            grid_extent: 3.0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn steps_for(final_time: f64, tau: f64, field: &str) -> Result<usize> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(config_error(field, format!("step must be positive, got {tau}")));
    }
    let n = (final_time / tau).round();
    if n < 1.0 || (n * tau - final_time).abs() > 1e-9 * final_time {
        return Err(config_error(
            field,
            format!("step {tau} does not divide the final time {final_time}"),
        ));
    }
    Ok(n as usize)
}

fn divides(coarse: f64, fine: f64) -> bool {
    let k = (coarse / fine).round();
    k >= 1.0 && (k * fine - coarse).abs() <= 1e-9 * coarse
}

impl ExperimentConfig {
    /// Parses a flat `key = value` file; absent keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let start = e.span().map_or(0, |s| s.start.min(text.len()));
            let line = text[..start].matches('\n').count() + 1;
            let key = text
                .lines()
                .nth(line - 1)
                .and_then(|l| l.split_once('='))
                .map(|(k, _)| k.trim())
                .filter(|k| !k.is_empty());
            let reason = match key {
                Some(k) if e.span().is_some() => format!("`{k}`: {}", e.message()),
                _ => e.message().to_string(),
            };
            Error::Parse { line, reason }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.wave().validate().map_err(|e| config_error("wave", e.to_string()))?;
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(config_error("final_time", format!("must be positive, got {}", self.final_time)));
        }
        steps_for(self.final_time, self.tau, "tau")?;
        self.cq_method()?;
        if !(self.shift_eta >= 0.0 && self.shift_eta.is_finite()) {
            return Err(config_error("shift_eta", format!("must be nonnegative, got {}", self.shift_eta)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(config_error("theta", format!("must lie in (0, 1), got {}", self.theta)));
        }
        for (field, v) in [
            ("levels", self.levels),
            ("iterations", self.iterations),
            ("initial_elements", self.initial_elements),
            ("efficiency_meshes", self.efficiency_meshes),
        ] {
            if v == 0 {
                return Err(config_error(field, "must be at least 1"));
            }
        }
        steps_for(self.final_time, self.benchmark_tau, "benchmark_tau")?;
        for (field, taus) in [("taus", &self.taus), ("efficiency_taus", &self.efficiency_taus)] {
            if taus.is_empty() {
                return Err(config_error(field, "needs at least one step"));
            }
            for &t in taus {
                steps_for(self.final_time, t, field)?;
            }
        }
        for &t in &self.taus {
            if !divides(t, self.benchmark_tau) {
                return Err(config_error(
                    "benchmark_tau",
                    format!("{} does not divide the step {t}", self.benchmark_tau),
                ));
            }
        }
        if self.grid_points < 2 {
            return Err(config_error("grid_points", "must be at least 2"));
        }
        if !(self.grid_extent > 0.0 && self.grid_extent.is_finite()) {
            return Err(config_error("grid_extent", "must be positive"));
        }
        Ok(())
    }

    pub fn cq_method(&self) -> Result<CqMethod> {
        let m = self.method.as_str();
        let parse = |digits: &str| digits.parse::<usize>().ok();
        let method = if let Some(k) = m.strip_prefix("radau").and_then(parse) {
            CqMethod::RadauIIA(k)
        } else if let Some(k) = m.strip_prefix("bdf").and_then(parse) {
            CqMethod::Bdf(k)
        } else {
            return Err(config_error("method", format!("unknown method `{m}`")));
        };
        CqScheme::new(method, 1.0, 1).map_err(|e| config_error("method", e.to_string()))?;
        Ok(method)
    }

    /// The incident wave with the direction normalized.
    pub fn wave(&self) -> IncidentWave {
        let [dx, dy] = self.direction;
        let norm = dx.hypot(dy);
        let direction = if (norm - 1.0).abs() < 1e-6 { (dx / norm, dy / norm) } else { (dx, dy) };
        IncidentWave {
            omega: self.omega,
            window: self.window,
            beta: self.beta,
            t_lag: self.t_lag,
            direction,
            delay: self.delay,
        }
    }

    pub fn scheme(&self, tau: f64) -> Result<CqScheme> {
        CqScheme::new(self.cq_method()?, tau, steps_for(self.final_time, tau, "tau")?)
    }

    pub fn problem(&self, tau: f64, eta: f64) -> Result<ScatteringProblem> {
        ScatteringProblem::new(self.geometry.spec(), self.wave(), self.scheme(tau)?, eta)
    }

    pub fn adaptive_config(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            theta: self.theta,
            max_iterations: self.iterations,
            target_estimate: 0.0,
            k_set: self.k_set,
            marking: self.marking,
        }
    }

    /// Coarsest uniform mesh, also the start of the adaptive loop.
    pub fn initial_mesh(&self) -> Result<Mesh> {
        build_mesh(&self.geometry.spec(), self.initial_elements)
    }

    /// Uniform or graded mesh of refinement level `level`.
    pub fn level_mesh(&self, strategy: Strategy, level: usize) -> Result<Mesh> {
        let spec = self.geometry.spec();
        match strategy {
            Strategy::Uniform => build_mesh(&spec, self.initial_elements << level),
            Strategy::Graded(beta) => graded_mesh(&spec, (self.initial_elements / 2).max(1) << level, beta),
            Strategy::Adaptive => Err(config_error("strategy", "adaptive meshes come from the adaptive loop")),
        }
    }

    /// Runs the adaptive loop at `tau` with the configured shift.
    pub fn adaptive_trace(&self, tau: f64) -> Result<AdaptiveTrace> {
        let p = self.problem(tau, self.shift_eta)?;
        Ok(adaptive_loop(&p, &self.initial_mesh()?, &self.adaptive_config())?)
    }
}

/// `log₂(e_{k-1}/e_k)` where the abscissa halves (or doubles), blank otherwise.
pub fn halving_rates(abscissa: &[f64], errors: &[f64]) -> Vec<Option<f64>> {
    (0..errors.len())
        .map(|k| {
            if k == 0 {
                return None;
            }
            let ratio = abscissa[k - 1] / abscissa[k];
            let halving = (ratio - 2.0).abs() < 1e-12 || (ratio - 0.5).abs() < 1e-12;
            (halving && errors[k] > 0.0 && errors[k - 1] > 0.0).then(|| (errors[k - 1] / errors[k]).log2())
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub dofs: usize,
    pub tau: f64,
    pub error: f64,
    pub point_error: f64,
    pub estimate: Option<f64>,
    pub rate: Option<f64>,
    pub rate_point: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub kind: TableKind,
    pub rows: Vec<ConvergenceRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

impl ConvergenceTable {
    pub fn new(kind: TableKind, mut rows: Vec<ConvergenceRow>) -> Self {
        let x: Vec<f64> = rows
            .iter()
            .map(|r| match kind {
                TableKind::Spatial => r.dofs as f64,
                TableKind::Temporal => r.tau,
            })
            .collect();
        let e: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let p: Vec<f64> = rows.iter().map(|r| r.point_error).collect();
        let (re, rp) = (halving_rates(&x, &e), halving_rates(&x, &p));
        for (k, r) in rows.iter_mut().enumerate() {
            r.rate = re[k];
            r.rate_point = rp[k];
        }
        Self { kind, rows }
    }

    fn abscissa(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| match self.kind {
                TableKind::Spatial => r.dofs as f64,
                TableKind::Temporal => r.tau,
            })
            .collect()
    }

    /// Decay rate of the error: `-d ln e / d ln DOFs` for spatial tables,
    /// `d ln e / d ln τ` for temporal ones.
    pub fn error_slope(&self) -> Option<f64> {
        let e: Vec<f64> = self.rows.iter().map(|r| r.error).collect();
        self.oriented(loglog_slope(&self.abscissa(), &e))
    }

    pub fn point_slope(&self) -> Option<f64> {
        let e: Vec<f64> = self.rows.iter().map(|r| r.point_error).collect();
        self.oriented(loglog_slope(&self.abscissa(), &e))
    }

    pub fn estimate_slope(&self) -> Option<f64> {
        let (x, e): (Vec<f64>, Vec<f64>) = self
            .abscissa()
            .into_iter()
            .zip(&self.rows)
            .filter_map(|(x, r)| r.estimate.map(|v| (x, v)))
            .unzip();
        self.oriented(loglog_slope(&x, &e))
    }

    fn oriented(&self, s: Option<f64>) -> Option<f64> {
        match self.kind {
            TableKind::Spatial => s.map(|v| -v),
            TableKind::Temporal => s,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.kind {
            TableKind::Spatial => {
                out.push_str("level,dofs,energy_error,point_error,estimate,rate_energy\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{:.10e},{:.10e},{},{}",
                        r.level,
                        r.dofs,
                        r.error,
                        r.point_error,
                        fmt_opt(r.estimate),
                        fmt_opt(r.rate)
                    );
                }
            }
            TableKind::Temporal => {
                out.push_str("tau,density_error,point_error,rate_density,rate_point\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{:.10e},{:.10e},{:.10e},{},{}",
                        r.tau,
                        r.error,
                        r.point_error,
                        fmt_opt(r.rate),
                        fmt_opt(r.rate_point)
                    );
                }
            }
        }
        out
    }
}

fn estimate_of(history: &DensityHistory, problem: &ScatteringProblem, k_set: DerivativeSet) -> Result<f64> {
    Ok(global_estimate(&indicators(&compute_residual(history, problem)?, k_set)?))
}

fn observe(history: &DensityHistory) -> Result<FieldHistory> {
    evaluate_field(history, &OBSERVATION_POINTS)
}

/// Reference for spatial studies: the 3-graded mesh one level beyond the
/// finest graded level.
pub fn spatial_reference_mesh(cfg: &ExperimentConfig) -> Result<Mesh> {
    cfg.level_mesh(Strategy::Graded(3.0), cfg.levels)
}

/// Spatial convergence at fixed `cfg.tau` for `cfg.strategy`.
pub fn run_spatial_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let p = cfg.problem(cfg.tau, cfg.shift_eta)?;
    let reference = solve_density(&p, &spatial_reference_mesh(cfg)?)?;
    run_spatial_study_against(cfg, &reference)
}

/// Spatial convergence against a given reference solution.
pub fn run_spatial_study_against(cfg: &ExperimentConfig, reference: &DensityHistory) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let p = cfg.problem(cfg.tau, cfg.shift_eta)?;
    let reference_field = observe(reference)?;
    let mut rows = Vec::new();
    let mut record = |level: usize, history: &DensityHistory, estimate: f64| -> Result<()> {
        rows.push(ConvergenceRow {
            level,
            dofs: history.mesh.len(),
            tau: cfg.tau,
            error: energy_distance(history, reference)?,
            point_error: point_error(&observe(history)?, &reference_field)?,
            estimate: Some(estimate),
            rate: None,
            rate_point: None,
        });
        Ok(())
    };
    match cfg.strategy {
        Strategy::Adaptive => {
            let trace = adaptive_loop(&p, &cfg.initial_mesh()?, &cfg.adaptive_config())?;
            for (level, step) in trace.steps.iter().enumerate() {
                let h = solve_density(&p, &step.mesh)?;
                record(level, &h, step.estimate)?;
            }
        }
        strategy => {
            for level in 0..cfg.levels {
                let mesh = cfg.level_mesh(strategy, level)?;
                let h = solve_density(&p, &mesh)?;
                let est = estimate_of(&h, &p, cfg.k_set)?;
                record(level, &h, est)?;
            }
        }
    }
    Ok(ConvergenceTable::new(TableKind::Spatial, rows))
}

/// Temporal convergence on the adaptive mesh obtained at `cfg.tau`, against
/// the `cfg.benchmark_tau` solution on the same mesh and with the same shift.
pub fn run_time_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let trace = cfg.adaptive_trace(cfg.tau)?;
    let mesh = trace.final_mesh().cloned().ok_or_else(|| config_error("iterations", "no adaptive mesh"))?;
    run_time_study_on(cfg, &mesh)
}

/// Temporal convergence on a given mesh.
pub fn run_time_study_on(cfg: &ExperimentConfig, mesh: &Mesh) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let benchmark = solve_density(&cfg.problem(cfg.benchmark_tau, cfg.shift_eta)?, mesh)?;
    let benchmark_field = observe(&benchmark)?;
    let mut rows = Vec::new();
    for (level, &tau) in cfg.taus.iter().enumerate() {
        let h = solve_density(&cfg.problem(tau, cfg.shift_eta)?, mesh)?;
        if h.mesh != benchmark.mesh {
            return Err(Error::MeshMismatch("benchmark uses a different mesh".into()));
        }
        rows.push(ConvergenceRow {
            level,
            dofs: mesh.len(),
            tau,
            error: energy_distance(&h, &benchmark)?,
            point_error: point_error(&observe(&h)?, &benchmark_field)?,
            estimate: None,
            rate: None,
            rate_point: None,
        });
    }
    Ok(ConvergenceTable::new(TableKind::Temporal, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub dofs: usize,
    pub tau: f64,
    pub error: f64,
    pub estimate: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub c: f64,
    pub p: f64,
    pub rows: Vec<EfficiencyRow>,
}

impl EfficiencyReport {
    pub fn min_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min)
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    /// Share of grid points with `lo <= ratio <= hi`.
    pub fn fraction_within(&self, lo: f64, hi: f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let n = self.rows.iter().filter(|r| r.ratio >= lo && r.ratio <= hi).count();
        n as f64 / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dofs,tau,error,estimate,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.10e},{:.10e},{:.10e},{:.10e}",
                r.dofs, r.tau, r.error, r.estimate, r.ratio
            );
        }
        out
    }
}

/// `e / (η + C τ^p)`, zero when both error and denominator vanish.
pub fn efficiency_ratio(error: f64, estimate: f64, c: f64, p: f64, tau: f64) -> f64 {
    let den = estimate + c * tau.powf(p);
    if den == 0.0 {
        0.0
    } else {
        error / den
    }
}

/// Meshes of the efficiency grid: evenly spaced iterates of the adaptive loop.
pub fn efficiency_meshes(cfg: &ExperimentConfig, trace: &AdaptiveTrace) -> Vec<Mesh> {
    let n = trace.steps.len();
    let k = cfg.efficiency_meshes.min(n);
    let mut idx: Vec<usize> = (0..k)
        .map(|j| if k == 1 { n - 1 } else { j * (n - 1) / (k - 1) })
        .collect();
    idx.dedup();
    idx.into_iter().map(|i| trace.steps[i].mesh.clone()).collect()
}

/// Reference for the efficiency study: a 3-graded mesh with at least twice
/// the elements of the finest grid mesh, at a quarter of the smallest step.
pub fn efficiency_reference(cfg: &ExperimentConfig, meshes: &[Mesh]) -> Result<(Mesh, f64)> {
    let finest = meshes.iter().map(Mesh::len).max().unwrap_or(1);
    let spec = cfg.geometry.spec();
    let per_half = (finest / spec.component_count()).max(1).next_power_of_two();
    let mesh = graded_mesh(&spec, per_half, 3.0)?;
    let tau = cfg.efficiency_taus.iter().copied().fold(f64::INFINITY, f64::min) / 4.0;
    Ok((mesh, tau))
}

/// Ratios `e_M / (η_M + C τ^p)` over adaptive meshes × `cfg.efficiency_taus`.
pub fn run_efficiency_study(cfg: &ExperimentConfig, c: f64, p: f64) -> Result<EfficiencyReport> {
    cfg.validate()?;
    if !(c > 0.0 && p > 0.0) {
        return Err(config_error("efficiency", format!("C and p must be positive, got {c} and {p}")));
    }
    let trace = cfg.adaptive_trace(cfg.tau)?;
    let meshes = efficiency_meshes(cfg, &trace);
    run_efficiency_study_on(cfg, &meshes, c, p)
}

pub fn run_efficiency_study_on(cfg: &ExperimentConfig, meshes: &[Mesh], c: f64, p: f64) -> Result<EfficiencyReport> {
    let (ref_mesh, ref_tau) = efficiency_reference(cfg, meshes)?;
    let reference = solve_density(&cfg.problem(ref_tau, cfg.shift_eta)?, &ref_mesh)?;
    let mut rows = Vec::new();
    for mesh in meshes {
        for &tau in &cfg.efficiency_taus {
            let problem = cfg.problem(tau, cfg.shift_eta)?;
            let h = solve_density(&problem, mesh)?;
            let error = energy_distance(&h, &reference)?;
            let estimate = estimate_of(&h, &problem, cfg.k_set)?;
            rows.push(EfficiencyRow {
                dofs: mesh.len(),
                tau,
                error,
                estimate,
                ratio: efficiency_ratio(error, estimate, c, p, tau),
            });
        }
    }
    Ok(EfficiencyReport { c, p, rows })
}

/// Mesh of the configured strategy at its finest level.
pub fn strategy_mesh(cfg: &ExperimentConfig) -> Result<Mesh> {
    match cfg.strategy {
        Strategy::Adaptive => cfg
            .adaptive_trace(cfg.tau)?
            .final_mesh()
            .cloned()
            .ok_or_else(|| config_error("iterations", "no adaptive mesh")),
        s => cfg.level_mesh(s, cfg.levels - 1),
    }
}

/// `s_arclength,phi` at element midpoints; arclength runs on across components.
pub fn density_snapshot_csv(history: &DensityHistory, time_index: Option<usize>) -> String {
    let mesh = &history.mesh;
    let mut out = String::from("s_arclength,phi\n");
    let mut offset = 0.0;
    for c in 0..mesh.component_count() {
        let arc = mesh.arclengths(c);
        for (k, e) in mesh.component_range(c).enumerate() {
            let s = offset + 0.5 * (arc[k] + arc[k + 1]);
            let phi = time_index.map_or(0.0, |n| history.stages.last_stage(n)[e].re);
            let _ = writeln!(out, "{s:.10e},{phi:.10e}");
        }
        offset += arc.last().copied().unwrap_or(0.0);
    }
    out
}

/// Uniform grid over `[-extent, extent]²` without points near Γ.
pub fn snapshot_grid(mesh: &Mesh, points: usize, extent: f64) -> Vec<Point2> {
    let step = 2.0 * extent / (points - 1) as f64;
    let mut out = Vec::new();
    for j in 0..points {
        for i in 0..points {
            let p = Point2::new(-extent + i as f64 * step, -extent + j as f64 * step);
            if mesh.distance_to(p) > SNAPSHOT_CLEARANCE {
                out.push(p);
            }
        }
    }
    out
}

fn time_label(t: f64) -> String {
    format!("{t:.4}").trim_end_matches('0').trim_end_matches('.').replace('.', "p")
}

/// Writes density and field snapshots at `times`; returns the written paths.
pub fn emit_snapshots(cfg: &ExperimentConfig, times: &[f64]) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    for &t in times {
        if !(t >= 0.0 && t <= cfg.final_time) {
            return Err(config_error(
                "snapshot_times",
                format!("time {t} lies outside [0, {}]", cfg.final_time),
            ));
        }
    }
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let mesh = strategy_mesh(cfg)?;
    let history = solve_density(&cfg.problem(cfg.tau, cfg.shift_eta)?, &mesh)?;
    let grid = snapshot_grid(&mesh, cfg.grid_points, cfg.grid_extent);
    let field = evaluate_field(&history, &grid)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut written = Vec::new();
    for &t in times {
        let i = (t / cfg.tau).round() as usize;
        let step = if i == 0 { None } else { history.scheme.step_of_time_point(i) };
        let label = time_label(t);
        let density = cfg.out_dir.join(format!("density_t{label}.csv"));
        std::fs::write(&density, density_snapshot_csv(&history, step))?;
        let mut csv = String::from("x,y,u\n");
        for (k, p) in grid.iter().enumerate() {
            let u = if i == 0 { 0.0 } else { field.values[k][i - 1] };
            let _ = writeln!(csv, "{:.10e},{:.10e},{u:.10e}", p.x, p.y);
        }
        let fpath = cfg.out_dir.join(format!("field_t{label}.csv"));
        std::fs::write(&fpath, csv)?;
        written.push(density);
        written.push(fpath);
    }
    Ok(written)
}

/// Writes `contents` to `cfg.out_dir/name`.
pub fn write_output(cfg: &ExperimentConfig, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
