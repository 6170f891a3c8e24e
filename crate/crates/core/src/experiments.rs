//! Scripted experiments: the parametric feasibility sweep over `(a, b)` for
//! the three controller structures, and the domain-of-attraction comparison
//! between the derivative-dependent design and its derivative-free baseline.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::{GlobalCertificate, LocalCertificate};
use crate::contour::marching_squares;
use crate::io::fmt_f64;
use crate::lmi::{SolveStatus, Sense};
use crate::model::{parse_model_with_overrides, Mode, ModelError, ModelSpec, Region, TsModel};
use crate::par::{map_indexed, Execution};
use crate::sim::{
    estimate_doa, integrate_batch, monitor_bounds, trace_level_set, vector_field, BoundsReport, DoaEstimate, SimError,
    Trajectory, DEFAULT_DT, DEFAULT_T_END,
};
use crate::svg::{Marker, Plot};
use crate::synth_global::{
    substitute, synthesize_global, GlobalOptions, SynthError, Theorem2Problem, VerificationReport,
};
use crate::synth_local::synthesize_local;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
    }
}

// ---------------------------------------------------------------------------
// Parametric sweep
// ---------------------------------------------------------------------------

pub const SWEEP_A_RANGE: (f64, f64) = (0.0, 10.0);
pub const SWEEP_B_RANGE: (f64, f64) = (1.0, 2.0);
/// Largest NSD eigenvalue accepted when one mode's solution is substituted
/// into a richer mode's constraints.
pub const NESTING_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Model file text with parameters `a` and `b`.
    pub template: String,
    /// Extra dotted-key overrides applied before every grid point.
    pub overrides: Vec<(String, String)>,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub modes: Vec<Mode>,
    pub options: GlobalOptions,
}

impl SweepSpec {
    /// `na x nb` grid over the default parameter box, all three modes.
    pub fn grid(template: &str, na: usize, nb: usize) -> Self {
        Self {
            template: template.to_string(),
            overrides: Vec::new(),
            a_values: linspace(SWEEP_A_RANGE.0, SWEEP_A_RANGE.1, na),
            b_values: linspace(SWEEP_B_RANGE.0, SWEEP_B_RANGE.1, nb),
            modes: vec![Mode::Quadratic, Mode::TraditionalPdc, Mode::Proposed],
            options: GlobalOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let monotone = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
        if !monotone(&self.a_values) || !monotone(&self.b_values) {
            return Err(ExperimentError::Spec("parameter grids must be non-empty and strictly increasing".into()));
        }
        if self.modes.is_empty() {
            return Err(ExperimentError::Spec("at least one mode is required".into()));
        }
        Ok(())
    }

    fn model_at(&self, a: f64, b: f64) -> Result<ModelSpec, ModelError> {
        let mut ov = self.overrides.clone();
        ov.push(("params.a".into(), fmt_f64(a)));
        ov.push(("params.b".into(), fmt_f64(b)));
        parse_model_with_overrides(&self.template, &ov)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub a: f64,
    pub b: f64,
    pub mode: Mode,
    /// Solver success confirmed by the dense verification.
    pub feasible: bool,
    pub status: Option<SolveStatus>,
    pub solver_status: String,
    pub solve_time_s: f64,
    /// Largest eigenvalue of the sampled Lyapunov-derivative matrices.
    pub worst_eigenvalue: Option<f64>,
    /// Largest real part over the frozen closed loops `A_i + B_i K_i`.
    pub frozen_max_real_part: Option<f64>,
    pub certificate: Option<GlobalCertificate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestingRecord {
    pub a: f64,
    pub b: f64,
    pub from: Mode,
    pub into: Mode,
    pub max_nsd_eigenvalue: f64,
    pub min_psd_eigenvalue: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub modes: Vec<Mode>,
    /// Ordered by `b`, then `a`, then mode (as in `modes`).
    pub records: Vec<SweepRecord>,
    pub nesting: Vec<NestingRecord>,
    pub elapsed_s: f64,
}

fn nesting_record(a: f64, b: f64, from: Mode, into: Mode, built: &Theorem2Problem, cert: &GlobalCertificate) -> Option<NestingRecord> {
    let lmi = cert.variables.as_ref()?;
    let checks = substitute(built, lmi);
    let max_nsd = checks
        .iter()
        .filter(|c| c.sense == Sense::Nsd)
        .map(|c| c.extreme_eigenvalue)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_psd = checks
        .iter()
        .filter(|c| c.sense == Sense::Psd)
        .map(|c| c.extreme_eigenvalue)
        .fold(f64::INFINITY, f64::min);
    Some(NestingRecord {
        a,
        b,
        from,
        into,
        max_nsd_eigenvalue: max_nsd,
        min_psd_eigenvalue: min_psd,
        ok: max_nsd <= NESTING_TOLERANCE && min_psd >= -NESTING_TOLERANCE,
    })
}

fn sweep_point(spec: &SweepSpec, a: f64, b: f64) -> (Vec<SweepRecord>, Vec<NestingRecord>) {
    let failed = |mode: Mode, err: String| SweepRecord {
        a,
        b,
        mode,
        feasible: false,
        status: None,
        solver_status: String::new(),
        solve_time_s: 0.0,
        worst_eigenvalue: None,
        frozen_max_real_part: None,
        certificate: None,
        error: Some(err),
    };
    let parsed = match spec.model_at(a, b) {
        Ok(p) => p,
        Err(e) => return (spec.modes.iter().map(|m| failed(*m, e.to_string())).collect(), Vec::new()),
    };
    let mut records = Vec::new();
    let mut built: Vec<(Mode, Theorem2Problem)> = Vec::new();
    for &mode in &spec.modes {
        let config = crate::model::SynthesisConfig { mode, ..parsed.config.clone() };
        match synthesize_global(&parsed.model, &config, &spec.options) {
            Ok((out, problem)) => {
                let ver = out.verification.as_ref();
                records.push(SweepRecord {
                    a,
                    b,
                    mode,
                    feasible: out.feasible,
                    status: Some(out.status),
                    solver_status: out.diagnostics.solver_status.clone(),
                    solve_time_s: out.elapsed_s,
                    worst_eigenvalue: ver.map(|v| v.worst_lyapunov_eigenvalue),
                    frozen_max_real_part: ver.map(|v| v.frozen_max_real_part),
                    certificate: out.certificate.filter(|_| out.feasible),
                    error: out.recovery_error,
                });
                built.push((mode, problem));
            }
            Err(e) => records.push(failed(mode, e.to_string())),
        }
    }
    let mut nesting = Vec::new();
    for (from, into) in [(Mode::Quadratic, Mode::TraditionalPdc), (Mode::TraditionalPdc, Mode::Proposed)] {
        let cert = records.iter().find(|r| r.mode == from).and_then(|r| r.certificate.as_ref());
        let target = built.iter().find(|(m, _)| *m == into).map(|(_, p)| p);
        if let (Some(cert), Some(target)) = (cert, target) {
            nesting.extend(nesting_record(a, b, from, into, target, cert));
        }
    }
    (records, nesting)
}

/// Solves every grid point under every mode. Grid points are independent
/// work items; per-point failures are recorded, never propagated.
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let start = Instant::now();
    let na = spec.a_values.len();
    let per_point = map_indexed(exec, na * spec.b_values.len(), |k| {
        sweep_point(spec, spec.a_values[k % na], spec.b_values[k / na])
    });
    let mut result = SweepResult {
        a_values: spec.a_values.clone(),
        b_values: spec.b_values.clone(),
        modes: spec.modes.clone(),
        records: Vec::new(),
        nesting: Vec::new(),
        elapsed_s: 0.0,
    };
    for (records, nesting) in per_point {
        result.records.extend(records);
        result.nesting.extend(nesting);
    }
    result.elapsed_s = start.elapsed().as_secs_f64();
    Ok(result)
}

impl SweepResult {
    pub fn records_for(&self, mode: Mode) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(move |r| r.mode == mode)
    }

    pub fn feasible_count(&self, mode: Mode) -> (usize, usize) {
        let all: Vec<_> = self.records_for(mode).collect();
        (all.iter().filter(|r| r.feasible).count(), all.len())
    }

    /// Whether the set of feasible `b` values is the same for every sampled `a`.
    pub fn b_pattern_constant_in_a(&self, mode: Mode) -> bool {
        let pattern = |a: f64| -> Vec<bool> {
            self.b_values
                .iter()
                .map(|&b| self.records_for(mode).any(|r| r.a == a && r.b == b && r.feasible))
                .collect()
        };
        let first = pattern(self.a_values[0]);
        self.a_values.iter().all(|&a| pattern(a) == first)
    }

    /// Deterministic per-point outcome table (no timings).
    pub fn csv(&self) -> String {
        let mut s = String::from("a,b,mode,feasible,solver_status,worst_eigenvalue,frozen_max_real_part,error\n");
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt_f64(r.a),
                fmt_f64(r.b),
                r.mode.as_str(),
                r.feasible as u8,
                r.solver_status,
                opt(r.worst_eigenvalue),
                opt(r.frozen_max_real_part),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        s
    }

    /// Per-point wall-clock solve times.
    pub fn timing_csv(&self) -> String {
        let mut s = String::from("a,b,mode,feasible,time_s\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{},{}", fmt_f64(r.a), fmt_f64(r.b), r.mode.as_str(), r.feasible as u8, fmt_f64(r.solve_time_s));
        }
        s
    }

    pub fn nesting_csv(&self) -> String {
        let mut s = String::from("a,b,from,into,max_nsd_eigenvalue,min_psd_eigenvalue,ok\n");
        for n in &self.nesting {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fmt_f64(n.a),
                fmt_f64(n.b),
                n.from.as_str(),
                n.into.as_str(),
                fmt_f64(n.max_nsd_eigenvalue),
                fmt_f64(n.min_psd_eigenvalue),
                n.ok as u8
            );
        }
        s
    }

    /// Scatter of the feasible points: quadratic as upward triangles,
    /// traditional PDC as downward triangles, proposed as dots; infeasible
    /// proposed points are crossed.
    pub fn svg(&self) -> String {
        let pad = |lo: f64, hi: f64| {
            let d = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
            (lo - d, hi + d)
        };
        let x = pad(self.a_values[0], *self.a_values.last().unwrap());
        let y = pad(self.b_values[0], *self.b_values.last().unwrap());
        let mut p = Plot::new(x, y).title("Stabilization region by controller structure").labels("a", "b");
        let style = |m: Mode| match m {
            Mode::Quadratic => (Marker::TriangleUp, "red", 6.0),
            Mode::TraditionalPdc => (Marker::TriangleDown, "blue", 6.0),
            Mode::Proposed => (Marker::Dot, "black", 4.0),
        };
        for r in &self.records {
            if r.feasible {
                let (shape, color, size) = style(r.mode);
                p.marker([r.a, r.b], shape, color, size);
            } else if r.mode == Mode::Proposed {
                p.marker([r.a, r.b], Marker::Cross, "gray", 3.0);
            }
        }
        for m in &self.modes {
            let (_, color, _) = style(*m);
            p.legend(m.as_str(), color);
        }
        p.render()
    }
}

// ---------------------------------------------------------------------------
// Domain-of-attraction comparison
// ---------------------------------------------------------------------------

/// Derivative-free comparison design: rule-wise PDC with a fuzzy Lyapunov
/// function and no well-posedness restriction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaselineParams {
    pub alpha: f64,
    pub phi: f64,
    pub mu: f64,
    pub mode: Mode,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { alpha: 0.016, phi: 12.0, mu: 1.0, mode: Mode::TraditionalPdc }
    }
}

impl BaselineParams {
    pub fn overrides(&self, r: usize) -> Vec<(String, String)> {
        let rep = |v: f64| format!("[{}]", vec![fmt_f64(v); r].join(","));
        vec![
            ("config.alpha".into(), fmt_f64(self.alpha)),
            ("config.phi".into(), rep(self.phi)),
            ("config.mu".into(), rep(self.mu)),
            ("config.mode".into(), format!("\"{}\"", self.mode.as_str())),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct DoaComparisonSpec {
    pub model_text: String,
    pub overrides: Vec<(String, String)>,
    pub baseline: BaselineParams,
    /// Grid cells per axis for the area estimate.
    pub resolution: usize,
    /// Trajectories started on each certified boundary for the bound monitor.
    pub boundary_trajectories: usize,
    pub dt: f64,
    pub t_end: f64,
    pub options: GlobalOptions,
}

impl DoaComparisonSpec {
    pub fn new(model_text: &str) -> Self {
        Self {
            model_text: model_text.to_string(),
            overrides: Vec::new(),
            baseline: BaselineParams::default(),
            resolution: 201,
            boundary_trajectories: 12,
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            options: GlobalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub x0: Vec<f64>,
    pub max_v: f64,
    pub final_norm: f64,
    pub left_region: bool,
    pub bounds: BoundsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoaBranch {
    pub label: String,
    pub feasible: bool,
    pub status: SolveStatus,
    pub log_det_h: Option<f64>,
    pub inner_ellipsoid_ratio: Option<f64>,
    pub area: Option<f64>,
    pub cells_inside: Option<usize>,
    pub verification: Option<VerificationReport>,
    pub trajectories: Vec<TrajectorySummary>,
    pub bounds_ok: bool,
    /// Written separately as a certificate file.
    #[serde(skip)]
    pub certificate: Option<LocalCertificate>,
    pub elapsed_s: f64,
    #[serde(skip)]
    pub doa: Option<DoaEstimate>,
    #[serde(skip)]
    pub paths: Vec<Trajectory>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoaComparison {
    pub resolution: usize,
    pub region: Region,
    pub baseline: BaselineParams,
    pub proposed: DoaBranch,
    pub derivative_free: DoaBranch,
    pub area_ratio: Option<f64>,
    pub elapsed_s: f64,
}

/// Bound-monitor summary of one trajectory under a local certificate.
pub fn summarize_trajectory(traj: &Trajectory, cert: &LocalCertificate) -> TrajectorySummary {
    let last = traj.final_state();
    TrajectorySummary {
        x0: traj.x[0].clone(),
        max_v: traj.v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        final_norm: last.iter().map(|v| v * v).sum::<f64>().sqrt(),
        left_region: traj.left_region(),
        bounds: monitor_bounds(traj, &cert.phi, &cert.mu),
    }
}

/// Scale of the guard box (relative to the operating box) used by boundary
/// runs: a level set that is not contained in the operating box is traced
/// and simulated in full, and only trajectories leaving the guard box are
/// stopped.
pub const GUARD_FACTOR: f64 = 10.0;

pub fn guard_region(region: &Region) -> Region {
    Region {
        lower: region.lower.iter().map(|v| v * GUARD_FACTOR).collect(),
        upper: region.upper.iter().map(|v| v * GUARD_FACTOR).collect(),
    }
}

/// Starts trajectories on the traced boundary of `{V <= 1}` and collects
/// their bound-monitor summaries.
pub fn boundary_runs(
    model: &TsModel,
    cert: &LocalCertificate,
    count: usize,
    dt: f64,
    t_end: f64,
    exec: Execution,
) -> Result<(Vec<Trajectory>, Vec<TrajectorySummary>), ExperimentError> {
    let region = guard_region(&model.region);
    let starts = trace_level_set(&cert.global, model, &region, count)?;
    let mut paths = Vec::new();
    for t in integrate_batch(model, &cert.global, &region, &starts, t_end, dt, exec) {
        paths.push(t?);
    }
    let summaries = paths.iter().map(|t| summarize_trajectory(t, cert)).collect();
    Ok((paths, summaries))
}

fn run_branch(
    label: &str,
    parsed: &ModelSpec,
    spec: &DoaComparisonSpec,
    exec: Execution,
) -> Result<DoaBranch, ExperimentError> {
    let start = Instant::now();
    let sectors = parsed
        .sectors
        .as_ref()
        .ok_or_else(|| ExperimentError::Spec("the model file has no gradient sector data (`zeta`)".into()))?;
    let opts = GlobalOptions { exec, ..spec.options.clone() };
    let (out, _) = synthesize_local(&parsed.model, sectors, &parsed.config, &opts)?;
    let mut branch = DoaBranch {
        label: label.to_string(),
        feasible: out.feasible,
        status: out.status,
        log_det_h: out.log_det_h,
        inner_ellipsoid_ratio: out.inner_ellipsoid_ratio,
        area: None,
        cells_inside: None,
        verification: out.verification,
        trajectories: Vec::new(),
        bounds_ok: false,
        certificate: None,
        elapsed_s: 0.0,
        doa: None,
        paths: Vec::new(),
    };
    if let (true, Some(cert)) = (out.feasible, out.certificate) {
        let res = vec![spec.resolution; parsed.model.n];
        let doa = estimate_doa(&cert.global, &parsed.model, &parsed.model.region, &res, exec)?;
        branch.area = Some(doa.area);
        branch.cells_inside = Some(doa.count());
        branch.doa = Some(doa);
        if parsed.model.n == 2 && spec.boundary_trajectories > 0 {
            let (paths, summaries) =
                boundary_runs(&parsed.model, &cert, spec.boundary_trajectories, spec.dt, spec.t_end, exec)?;
            branch.bounds_ok = summaries.iter().all(|s| s.bounds.ok());
            branch.trajectories = summaries;
            branch.paths = paths;
        }
        branch.certificate = Some(cert);
    }
    branch.elapsed_s = start.elapsed().as_secs_f64();
    Ok(branch)
}

/// Synthesizes the derivative-dependent and derivative-free local designs
/// for the same plant, estimates both certified domains on the operating
/// box and reports the area ratio.
pub fn run_doa_comparison(spec: &DoaComparisonSpec, exec: Execution) -> Result<DoaComparison, ExperimentError> {
    let start = Instant::now();
    if spec.resolution == 0 {
        return Err(ExperimentError::Spec("resolution must be positive".into()));
    }
    let proposed = parse_model_with_overrides(&spec.model_text, &spec.overrides)?;
    let mut ov = spec.overrides.clone();
    ov.extend(spec.baseline.overrides(proposed.model.rules()));
    let baseline = parse_model_with_overrides(&spec.model_text, &ov)?;
    let p = run_branch("proposed", &proposed, spec, exec)?;
    let b = run_branch("derivative_free", &baseline, spec, exec)?;
    let area_ratio = match (p.area, b.area) {
        (Some(pa), Some(ba)) if ba > 0.0 => Some(pa / ba),
        _ => None,
    };
    Ok(DoaComparison {
        resolution: spec.resolution,
        region: proposed.model.region.clone(),
        baseline: spec.baseline,
        proposed: p,
        derivative_free: b,
        area_ratio,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// Fixed-certificate replay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub trajectories: Vec<TrajectorySummary>,
    /// Largest `V` increase between consecutive samples while `|x| > 1e-4`.
    pub max_v_increase: f64,
    pub max_v: f64,
    pub max_final_norm: f64,
    pub max_abs_hdot: Vec<f64>,
    pub min_abs_factor: Vec<f64>,
    pub v_level_ok: bool,
    pub convergence_ok: bool,
    pub decrease_ok: bool,
    pub hdot_ok: bool,
    pub factor_ok: bool,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.v_level_ok && self.convergence_ok && self.decrease_ok && self.hdot_ok && self.factor_ok
    }
}

/// Simulates a fixed certificate from `count` points on its traced boundary
/// and checks the guarantees of the local design: the level set is
/// invariant (`V <= 1 + 1e-3`), states reach `|x| <= 1e-3` by the horizon,
/// `V` decreases step to step away from the origin, and the derivative and
/// well-posedness bounds hold inside the level set.
pub fn replay_certificate(
    model: &TsModel,
    cert: &LocalCertificate,
    count: usize,
    dt: f64,
    t_end: f64,
    exec: Execution,
) -> Result<(ReplayReport, Vec<Trajectory>), ExperimentError> {
    let (paths, summaries) = boundary_runs(model, cert, count, dt, t_end, exec)?;
    let r = cert.phi.len();
    let mut rep = ReplayReport {
        trajectories: Vec::new(),
        max_v_increase: f64::NEG_INFINITY,
        max_v: f64::NEG_INFINITY,
        max_final_norm: 0.0,
        max_abs_hdot: vec![0.0; r],
        min_abs_factor: vec![f64::INFINITY; r],
        v_level_ok: true,
        convergence_ok: true,
        decrease_ok: true,
        hdot_ok: true,
        factor_ok: true,
    };
    for (traj, s) in paths.iter().zip(&summaries) {
        for k in 0..traj.len().saturating_sub(1) {
            let norm = traj.x[k].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-4 {
                rep.max_v_increase = rep.max_v_increase.max(traj.v[k + 1] - traj.v[k]);
            }
        }
        rep.max_v = rep.max_v.max(s.max_v);
        rep.max_final_norm = rep.max_final_norm.max(s.final_norm);
        for v in 0..r {
            rep.max_abs_hdot[v] = rep.max_abs_hdot[v].max(s.bounds.max_abs_hdot[v]);
            rep.min_abs_factor[v] = rep.min_abs_factor[v].min(s.bounds.min_abs_factor[v]);
        }
        rep.hdot_ok &= s.bounds.hdot_violations == 0;
        rep.factor_ok &= s.bounds.factor_violations == 0;
        rep.convergence_ok &= !s.left_region && s.final_norm <= 1e-3;
    }
    rep.v_level_ok = rep.max_v <= 1.0 + 1e-3;
    rep.decrease_ok = rep.max_v_increase < 0.0;
    rep.trajectories = summaries;
    Ok((rep, paths))
}

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

/// One certified domain drawn in a phase-plane figure.
pub struct DoaLayer<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub doa: &'a DoaEstimate,
}

fn axis_centers(doa: &DoaEstimate, k: usize) -> Vec<f64> {
    let h = (doa.upper[k] - doa.lower[k]) / doa.resolution[k] as f64;
    (0..doa.resolution[k]).map(|i| doa.lower[k] + (i as f64 + 0.5) * h).collect()
}

/// `{V = 1}` polylines of a planar estimate.
pub fn level_curves(doa: &DoaEstimate) -> Vec<Vec<[f64; 2]>> {
    marching_squares(&axis_centers(doa, 0), &axis_centers(doa, 1), &doa.values, 1.0)
}

/// `(curve index, x1, x2)` rows for CSV output of [`level_curves`].
pub fn level_set_rows(curves: &[Vec<[f64; 2]>]) -> Vec<Vec<f64>> {
    curves
        .iter()
        .enumerate()
        .flat_map(|(k, c)| c.iter().map(move |p| vec![k as f64, p[0], p[1]]))
        .collect()
}

/// Phase-plane figure: shaded certified domains with their level curves,
/// the operating box, trajectories and (optionally) closed-loop arrows.
pub fn phase_plane_svg(
    title: &str,
    region: &Region,
    layers: &[DoaLayer<'_>],
    trajectories: &[(&Trajectory, &str)],
    field: Option<(&TsModel, &GlobalCertificate)>,
) -> String {
    let pad = |k: usize| {
        let d = 0.05 * (region.upper[k] - region.lower[k]);
        (region.lower[k] - d, region.upper[k] + d)
    };
    let mut p = Plot::new(pad(0), pad(1)).title(title).labels("x1", "x2");
    if let Some((model, cert)) = field {
        let (nx, ny) = (17, 17);
        let arrows = vector_field(model, cert, region, nx, ny);
        let len = 0.4 * ((region.upper[0] - region.lower[0]) / nx as f64).min((region.upper[1] - region.lower[1]) / ny as f64);
        let sx = (region.upper[0] - region.lower[0]) / (region.upper[1] - region.lower[1]);
        for (x, v) in arrows {
            // normalize in plot-aspect units so all arrows have similar length
            let (vx, vy) = (v[0], v[1] * sx);
            let n = (vx * vx + vy * vy).sqrt();
            if n > 0.0 {
                p.arrow(x, [len * vx / n, len * vy / n / sx], "#999999");
            }
        }
    }
    for layer in layers {
        let curves = level_curves(layer.doa);
        let closed: Vec<Vec<[f64; 2]>> = curves.iter().filter(|c| c.len() > 2 && c.first() == c.last()).cloned().collect();
        p.region(&closed, layer.color, 0.25);
        for c in &curves {
            p.polyline(c, layer.color, 1.5, None);
        }
        p.legend(layer.label, layer.color);
    }
    p.rect([region.lower[0], region.lower[1]], [region.upper[0], region.upper[1]], "black", Some("6 3"));
    for (traj, color) in trajectories {
        let pts: Vec<[f64; 2]> = traj.x.iter().step_by(10).map(|x| [x[0], x[1]]).collect();
        p.polyline(&pts, color, 0.8, None);
        if let Some(x0) = traj.x.first() {
            p.marker([x0[0], x0[1]], Marker::Dot, color, 3.0);
        }
    }
    p.render()
}

/// `V(t)` curves of a trajectory batch.
pub fn lyapunov_svg(title: &str, trajectories: &[&Trajectory]) -> String {
    let t_max = trajectories.iter().filter_map(|t| t.t.last().copied()).fold(0.0, f64::max).max(1e-9);
    let v_max = trajectories.iter().flat_map(|t| t.v.iter().copied()).fold(0.0, f64::max).max(1e-9);
    let mut p = Plot::new((0.0, t_max), (0.0, 1.05 * v_max)).title(title).labels("t [s]", "V(x)");
    for traj in trajectories {
        let pts: Vec<[f64; 2]> = traj.t.iter().zip(&traj.v).step_by(10).map(|(t, v)| [*t, *v]).collect();
        p.polyline(&pts, "black", 0.8, None);
    }
    p.polyline(&[[0.0, 1.0], [t_max, 1.0]], "red", 1.0, Some("4 2"));
    p.render()
}

impl DoaComparison {
    pub fn svg(&self) -> String {
        let mut layers = Vec::new();
        let mut trajs = Vec::new();
        for (branch, color) in [(&self.derivative_free, "#d62728"), (&self.proposed, "#1f77b4")] {
            if let Some(doa) = &branch.doa {
                layers.push(DoaLayer { label: &branch.label, color, doa });
            }
            trajs.extend(branch.paths.iter().map(|t| (t, color)));
        }
        phase_plane_svg("Certified domains of attraction", &self.region, &layers, &trajs, None)
    }
}
