//! Command-line front end. Every subcommand reads a model file, writes its
//! artifacts under `--out` and finishes with a `manifest.json` recording the
//! input hashes, the tool version and timings.
//!
//! Exit codes: 0 success, 1 infeasible or failed verification, 2 usage or
//! input errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::certificate::{load_published, CertificateFile, GlobalCertificate, LocalCertificate};
use crate::dpoly::enumerate_vertices;
use crate::experiments::{
    boundary_runs, level_curves, level_set_rows, lyapunov_svg, phase_plane_svg, replay_certificate, run_doa_comparison, run_sweep, BaselineParams,
    summarize_trajectory, DoaComparisonSpec, DoaLayer, SweepSpec, TrajectorySummary,
};
use crate::io::{sha256_hex, write_csv, write_json, write_text};
use crate::model::{parse_model_with_overrides, Mode, ModelSpec};
use crate::par::Execution;
use crate::sim::{estimate_doa, integrate_batch, DEFAULT_DT, DEFAULT_T_END};
use crate::synth_global::{synthesize_global, verify_certificate, GlobalOptions};
use crate::synth_local::{inner_ellipsoid_ratio, synthesize_local};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Proposed,
    TraditionalPdc,
    Quadratic,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Proposed => Mode::Proposed,
            ModeArg::TraditionalPdc => Mode::TraditionalPdc,
            ModeArg::Quadratic => Mode::Quadratic,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tspdc", version, about = "Derivative-dependent PDC synthesis for Takagi-Sugeno fuzzy models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (created if absent).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Model-file override `key=value` (dotted path such as `config.alpha`,
    /// or a bare parameter name); repeatable.
    #[arg(long = "set", global = true, value_parser = parse_key_value)]
    pub set: Vec<(String, String)>,
    /// Seed for the verification samples.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Run on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vertices of the membership-derivative polytope (one vertex per column).
    Vertices {
        /// Optional model file; provides the number of rules and the bounds.
        model: Option<PathBuf>,
        /// Interval `LO,HI` applied to every rule.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        phi: Option<Vec<f64>>,
        /// Per-rule lower bounds.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lower: Option<Vec<f64>>,
        /// Per-rule upper bounds.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        upper: Option<Vec<f64>>,
        /// Number of rules when no model file is given.
        #[arg(long, default_value_t = 2)]
        rules: usize,
    },
    /// Global synthesis over the whole state space.
    Synth {
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Simplex samples for the dense verification.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Local synthesis with a maximized certified region.
    SynthLocal {
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Use the derivative-free comparison parameters instead of the file's.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value_t = BaselineParams::default().alpha)]
        baseline_alpha: f64,
        #[arg(long, default_value_t = BaselineParams::default().phi)]
        baseline_phi: f64,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Closed-loop simulation under a certificate.
    Simulate {
        model: PathBuf,
        /// Certificate file (as written by `synth`/`synth-local`, or a
        /// published-gains file).
        #[arg(long)]
        cert: PathBuf,
        /// Initial state `X1,X2,...`; repeatable.
        #[arg(long = "x0", allow_hyphen_values = true)]
        x0: Vec<String>,
        /// Start this many trajectories on the boundary of `{V <= 1}` instead.
        #[arg(long)]
        boundary: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = DEFAULT_T_END)]
        t_end: f64,
    },
    /// Grid estimate of the certified domain `{V <= 1}`.
    Doa {
        model: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        /// Cells per axis, `N` or `NxM`.
        #[arg(long, default_value = "201")]
        resolution: String,
        /// Boundary trajectories drawn in the figure.
        #[arg(long, default_value_t = 8)]
        trajectories: usize,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = DEFAULT_T_END)]
        t_end: f64,
    },
    /// Feasibility sweep over the `(a, b)` parameter box.
    Sweep {
        model: PathBuf,
        /// Grid points `NAxNB`.
        #[arg(long, default_value = "21x11")]
        grid: String,
        /// Restrict to these modes (repeatable); default all three.
        #[arg(long, value_enum)]
        mode: Vec<ModeArg>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Certified-domain comparison against the derivative-free design.
    DoaCompare {
        model: PathBuf,
        #[arg(long, default_value = "201")]
        resolution: String,
        #[arg(long, default_value_t = BaselineParams::default().alpha)]
        baseline_alpha: f64,
        #[arg(long, default_value_t = BaselineParams::default().phi)]
        baseline_phi: f64,
        /// Also replay a fixed (e.g. published) certificate.
        #[arg(long)]
        published: Option<PathBuf>,
        /// Trajectories per certified boundary.
        #[arg(long, default_value_t = 12)]
        trajectories: usize,
        #[arg(long, default_value_t = DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = DEFAULT_T_END)]
        t_end: f64,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Dense re-verification of a certificate against a model.
    Verify {
        model: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    if k.trim().is_empty() {
        return Err(format!("empty key in `{s}`"));
    }
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// `N` or `NxM` (also `N×M`).
pub fn parse_grid(s: &str, dims: usize) -> Result<Vec<usize>, String> {
    let parts: Vec<&str> = s.split(['x', 'X', '×']).collect();
    let vals = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad grid `{s}`")))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.contains(&0) {
        return Err(format!("grid counts must be positive in `{s}`"));
    }
    match vals.len() {
        1 => Ok(vec![vals[0]; dims]),
        n if n == dims => Ok(vals),
        _ => Err(format!("grid `{s}` needs 1 or {dims} counts")),
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable/invalid input files (exit 2).
    Usage(String),
    /// Infeasible problem or failed verification (exit 1).
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Failed(format!("cannot write output: {e}"))
}

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

/// Run bookkeeping: inputs read, outputs written, timings.
struct Session {
    out: PathBuf,
    exec: Execution,
    seed: u64,
    overrides: Vec<(String, String)>,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    timings: serde_json::Map<String, serde_json::Value>,
}

impl Session {
    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = std::fs::read(path).map_err(|e| usage(format!("cannot read `{}`: {e}", path.display())))?;
        self.inputs.push(InputRecord { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        String::from_utf8(bytes).map_err(|_| usage(format!("`{}` is not UTF-8 text", path.display())))
    }

    fn model(&mut self, path: &Path) -> Result<ModelSpec, CliError> {
        let text = self.read(path)?;
        let spec = parse_model_with_overrides(&text, &self.overrides)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
        for w in &spec.warnings {
            log::warn!("{w}");
        }
        Ok(spec)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, v: &T) -> Result<(), CliError> {
        let p = self.path(name);
        write_json(&p, v).map_err(io_err)
    }

    fn text(&mut self, name: &str, s: &str) -> Result<(), CliError> {
        let p = self.path(name);
        write_text(&p, s).map_err(io_err)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<f64>>) -> Result<(), CliError> {
        let p = self.path(name);
        write_csv(&p, header, rows).map_err(io_err)
    }

    fn time(&mut self, label: &str, t: Instant) {
        self.timings.insert(label.to_string(), json!(t.elapsed().as_secs_f64()));
    }

    fn options(&self, samples: Option<usize>) -> GlobalOptions {
        let mut o = GlobalOptions { seed: self.seed, exec: self.exec, ..GlobalOptions::default() };
        if let Some(s) = samples {
            o.samples = s;
        }
        o
    }
}

/// A certificate file as read from disk: either one written by this tool or
/// a published-gains file.
struct LoadedCertificate {
    global: GlobalCertificate,
    local: Option<LocalCertificate>,
    notes: Vec<String>,
}

fn load_certificate(session: &mut Session, path: &Path) -> Result<LoadedCertificate, CliError> {
    let text = session.read(path)?;
    match CertificateFile::parse(&text) {
        Ok(file) => Ok(LoadedCertificate { local: file.local_certificate(), global: file.global, notes: file.notes }),
        Err(native) => match load_published(&text) {
            Ok((local, notes)) => Ok(LoadedCertificate { global: local.global.clone(), local: Some(local), notes }),
            Err(_) => Err(usage(format!("{}: not a certificate file: {native}", path.display()))),
        },
    }
}

fn check_compatible(spec: &ModelSpec, cert: &GlobalCertificate) -> Result<(), CliError> {
    let (m, n) = cert.k[0].shape();
    if cert.rules() != spec.model.rules() || n != spec.model.n || m != spec.model.m {
        return Err(usage(format!(
            "certificate ({} rules, n = {n}, m = {m}) does not match the model ({} rules, n = {}, m = {})",
            cert.rules(),
            spec.model.rules(),
            spec.model.n,
            spec.model.m
        )));
    }
    Ok(())
}

fn parse_state(s: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| usage(format!("bad initial state `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != n {
        return Err(usage(format!("initial state `{s}` needs {n} components")));
    }
    Ok(v)
}

fn cmd_vertices(
    s: &mut Session,
    model: Option<&Path>,
    phi: Option<&[f64]>,
    lower: Option<&[f64]>,
    upper: Option<&[f64]>,
    rules: usize,
) -> Result<(), CliError> {
    let spec = model.map(|p| s.model(p)).transpose()?;
    let r = spec.as_ref().map_or(rules, |m| m.model.rules());
    let (lo, hi) = match (phi, lower, upper) {
        (Some([a, b]), None, None) => (vec![*a; r], vec![*b; r]),
        (Some(_), _, _) => return Err(usage("--phi takes exactly two values LO,HI")),
        (None, Some(l), Some(u)) => (l.to_vec(), u.to_vec()),
        (None, None, None) => match &spec {
            Some(m) => (m.config.phi_lower.clone(), m.config.phi_upper.clone()),
            None => return Err(usage("give --phi LO,HI, --lower/--upper, or a model file")),
        },
        _ => return Err(usage("--lower and --upper go together")),
    };
    let poly = enumerate_vertices(&lo, &hi).map_err(usage)?;
    let csv = poly.to_csv();
    print!("{csv}");
    s.text("vertices.csv", &csv)?;
    s.json("vertices.json", &poly)
}

fn cmd_synth(s: &mut Session, model: &Path, mode: Option<ModeArg>, samples: Option<usize>) -> Result<(), CliError> {
    let mut spec = s.model(model)?;
    if let Some(m) = mode {
        spec.config.mode = m.into();
    }
    let t = Instant::now();
    let (out, _) = synthesize_global(&spec.model, &spec.config, &s.options(samples)).map_err(failed)?;
    s.time("synthesis_s", t);
    let failed_checks: Vec<_> = out.checks.iter().filter(|c| !c.ok).collect();
    s.json(
        "synth_report.json",
        &json!({
            "mode": spec.config.mode,
            "feasible": out.feasible,
            "status": out.status,
            "solver": out.diagnostics,
            "failed_checks": failed_checks,
            "verification": out.verification,
            "recovery_error": out.recovery_error,
        }),
    )?;
    if let Some(cert) = &out.certificate {
        let mut file = CertificateFile::from_global(cert.clone());
        file.solver = Some(out.diagnostics.clone());
        file.verification = out.verification.as_ref().map(|v| serde_json::to_value(v).expect("report serializes"));
        s.text("certificate.json", &file.to_json())?;
    }
    eprintln!(
        "{}: {} (solver {}, {} iterations)",
        spec.config.mode.as_str(),
        if out.feasible { "feasible" } else { "infeasible" },
        out.diagnostics.solver_status,
        out.diagnostics.iterations
    );
    if out.feasible {
        Ok(())
    } else {
        Err(failed(format!("no verified certificate ({:?})", out.status)))
    }
}

fn cmd_synth_local(
    s: &mut Session,
    model: &Path,
    mode: Option<ModeArg>,
    baseline: Option<BaselineParams>,
    samples: Option<usize>,
) -> Result<(), CliError> {
    if let Some(b) = baseline {
        let r = s.model(model)?.model.rules();
        s.inputs.pop();
        s.overrides.extend(b.overrides(r));
    }
    let mut spec = s.model(model)?;
    if let Some(m) = mode {
        spec.config.mode = m.into();
    }
    let sectors = spec.sectors.clone().ok_or_else(|| usage("the model file has no gradient sector data (`zeta`)"))?;
    let t = Instant::now();
    let (out, built) = synthesize_local(&spec.model, &sectors, &spec.config, &s.options(samples)).map_err(|e| match e {
        crate::synth_global::SynthError::MissingLocal(_) => usage(e),
        e => failed(e),
    })?;
    s.time("synthesis_s", t);
    let name = if baseline.is_some() { "baseline" } else { "local" };
    let failed_checks: Vec<_> = out.checks.iter().filter(|c| !c.ok).collect();
    s.json(
        &format!("synth_{name}_report.json"),
        &json!({
            "mode": spec.config.mode,
            "alpha": spec.config.alpha,
            "feasible": out.feasible,
            "status": out.status,
            "log_det_h": out.log_det_h,
            "inner_ellipsoid_ratio": out.inner_ellipsoid_ratio,
            "constraint_counts": {
                "vertex": built.counts.vertex,
                "omega1": built.counts.omega1,
                "q": built.counts.q,
                "x": built.counts.x,
                "lyap_qf": built.counts.lyap_qf,
            },
            "solver": out.diagnostics,
            "failed_checks": failed_checks,
            "verification": out.verification,
            "recovery_error": out.recovery_error,
        }),
    )?;
    if let Some(cert) = &out.certificate {
        let mut file = CertificateFile::from_local(cert);
        file.solver = Some(out.diagnostics.clone());
        file.verification = out.verification.as_ref().map(|v| serde_json::to_value(v).expect("report serializes"));
        s.text(&format!("certificate_{name}.json"), &file.to_json())?;
    }
    eprintln!(
        "{name} ({}): {} log det H = {:?}, inner ellipsoid ratio = {:?}",
        spec.config.mode.as_str(),
        if out.feasible { "feasible," } else { "infeasible," },
        out.log_det_h,
        out.inner_ellipsoid_ratio
    );
    if out.feasible {
        Ok(())
    } else {
        Err(failed(format!("no verified local certificate ({:?})", out.status)))
    }
}

fn write_trajectories(s: &mut Session, prefix: &str, paths: &[crate::sim::Trajectory]) -> Result<(), CliError> {
    for (k, traj) in paths.iter().enumerate() {
        let header = traj.csv_header();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        s.csv(&format!("{prefix}_{k:03}.csv"), &header, traj.csv_rows())?;
    }
    Ok(())
}

fn cmd_simulate(
    s: &mut Session,
    model: &Path,
    cert: &Path,
    x0: &[String],
    boundary: Option<usize>,
    dt: f64,
    t_end: f64,
) -> Result<(), CliError> {
    let spec = s.model(model)?;
    let loaded = load_certificate(s, cert)?;
    check_compatible(&spec, &loaded.global)?;
    if !spec.model.has_memberships() {
        return Err(usage("simulation needs membership functions in the model file"));
    }
    let t = Instant::now();
    let (paths, report) = if x0.is_empty() {
        let count = boundary.unwrap_or(36);
        let local = loaded.local.clone().ok_or_else(|| usage("boundary starts need a local certificate; pass --x0"))?;
        let (rep, paths) = replay_certificate(&spec.model, &local, count, dt, t_end, s.exec).map_err(failed)?;
        let v = serde_json::to_value(&rep).expect("report serializes");
        (paths, Some((rep.passed(), v)))
    } else {
        let starts = x0.iter().map(|v| parse_state(v, spec.model.n)).collect::<Result<Vec<_>, _>>()?;
        let mut paths = Vec::new();
        for r in integrate_batch(&spec.model, &loaded.global, &spec.model.region, &starts, t_end, dt, s.exec) {
            paths.push(r.map_err(failed)?);
        }
        let summaries: Vec<TrajectorySummary> = match &loaded.local {
            Some(l) => paths.iter().map(|p| summarize_trajectory(p, l)).collect(),
            None => Vec::new(),
        };
        (paths, (!summaries.is_empty()).then(|| (true, json!({ "trajectories": summaries }))))
    };
    s.time("simulation_s", t);
    write_trajectories(s, "trajectory", &paths)?;
    let mut summary = json!({
        "dt": dt,
        "t_end": t_end,
        "count": paths.len(),
        "notes": loaded.notes,
        "final_states": paths.iter().map(|p| p.final_state().to_vec()).collect::<Vec<_>>(),
        "left_region": paths.iter().map(|p| p.left_region()).collect::<Vec<_>>(),
    });
    let mut passed = true;
    if let Some((ok, rep)) = report {
        summary["report"] = rep;
        summary["passed"] = json!(ok);
        passed = ok;
    }
    s.json("simulation.json", &summary)?;
    if spec.model.n == 2 {
        let refs: Vec<_> = paths.iter().map(|p| (p, "#1f77b4")).collect();
        s.text("trajectories.svg", &phase_plane_svg("Closed-loop trajectories", &spec.model.region, &[], &refs, Some((&spec.model, &loaded.global))))?;
    }
    let v_refs: Vec<_> = paths.iter().collect();
    s.text("lyapunov.svg", &lyapunov_svg("Lyapunov function along trajectories", &v_refs))?;
    if passed {
        Ok(())
    } else {
        Err(failed("trajectory checks failed; see simulation.json"))
    }
}

fn cmd_doa(
    s: &mut Session,
    model: &Path,
    cert: &Path,
    resolution: &str,
    trajectories: usize,
    dt: f64,
    t_end: f64,
) -> Result<(), CliError> {
    let spec = s.model(model)?;
    let loaded = load_certificate(s, cert)?;
    check_compatible(&spec, &loaded.global)?;
    let res = parse_grid(resolution, spec.model.n).map_err(usage)?;
    let region = spec.model.region.clone();
    let t = Instant::now();
    let doa = estimate_doa(&loaded.global, &spec.model, &region, &res, s.exec).map_err(failed)?;
    s.time("doa_s", t);
    let header: Vec<String> = (1..=spec.model.n).map(|k| format!("x{k}")).chain(["V".into(), "inside".into()]).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..doa.mask.len())
        .map(|flat| {
            let mut rest = flat;
            let idx: Vec<usize> = doa.resolution.iter().map(|&n| {
                let i = rest % n;
                rest /= n;
                i
            }).collect();
            let mut row = doa.cell_center(&idx);
            row.push(doa.values[flat]);
            row.push(if doa.mask[flat] { 1.0 } else { 0.0 });
            row
        })
        .collect();
    s.csv("doa_grid.csv", &header, rows)?;
    s.json(
        "doa.json",
        &json!({
            "resolution": doa.resolution,
            "lower": doa.lower,
            "upper": doa.upper,
            "cells_inside": doa.count(),
            "cell_volume": doa.cell_volume,
            "area": doa.area,
            "notes": loaded.notes,
        }),
    )?;
    if spec.model.n == 2 {
        let curves = level_curves(&doa);
        s.csv("doa_boundary.csv", &["curve", "x1", "x2"], level_set_rows(&curves))?;
        let mut paths = Vec::new();
        if trajectories > 0 && spec.model.has_memberships() {
            if let Some(local) = &loaded.local {
                paths = boundary_runs(&spec.model, local, trajectories, dt, t_end, s.exec).map_err(failed)?.0;
            }
        }
        let refs: Vec<_> = paths.iter().map(|p| (p, "black")).collect();
        let layers = [DoaLayer { label: "V <= 1", color: "#1f77b4", doa: &doa }];
        let field = spec.model.has_memberships().then_some((&spec.model, &loaded.global));
        s.text("doa.svg", &phase_plane_svg("Certified domain of attraction", &region, &layers, &refs, field))?;
    }
    eprintln!("certified area {:.6} ({} of {} cells)", doa.area, doa.count(), doa.mask.len());
    Ok(())
}

fn cmd_sweep(s: &mut Session, model: &Path, grid: &str, modes: &[ModeArg], samples: Option<usize>) -> Result<(), CliError> {
    let text = s.read(model)?;
    // validate the template (and the overrides) once up front
    parse_model_with_overrides(&text, &s.overrides).map_err(|e| usage(format!("{}: {e}", model.display())))?;
    let g = parse_grid(grid, 2).map_err(usage)?;
    let mut spec = SweepSpec::grid(&text, g[0], g[1]);
    spec.overrides = s.overrides.clone();
    spec.options = s.options(samples);
    if !modes.is_empty() {
        spec.modes = modes.iter().map(|m| (*m).into()).collect();
    }
    let t = Instant::now();
    let res = run_sweep(&spec, s.exec).map_err(usage)?;
    s.time("sweep_s", t);
    s.text("sweep.csv", &res.csv())?;
    s.text("sweep_timing.csv", &res.timing_csv())?;
    s.text("nesting.csv", &res.nesting_csv())?;
    s.text("sweep.svg", &res.svg())?;
    let mut per_mode = serde_json::Map::new();
    for m in &res.modes {
        let (ok, total) = res.feasible_count(*m);
        per_mode.insert(
            m.as_str().into(),
            json!({ "feasible": ok, "points": total, "b_pattern_constant_in_a": res.b_pattern_constant_in_a(*m) }),
        );
        eprintln!("{:>16}: {ok}/{total} feasible", m.as_str());
    }
    s.json(
        "sweep_summary.json",
        &json!({
            "grid": [res.a_values.len(), res.b_values.len()],
            "modes": per_mode,
            "nesting_checks": res.nesting.len(),
            "nesting_failures": res.nesting.iter().filter(|n| !n.ok).count(),
            "errors": res.records.iter().filter(|r| r.error.is_some()).count(),
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_doa_compare(
    s: &mut Session,
    model: &Path,
    resolution: &str,
    baseline: BaselineParams,
    published: Option<&Path>,
    trajectories: usize,
    dt: f64,
    t_end: f64,
    samples: Option<usize>,
) -> Result<(), CliError> {
    let text = s.read(model)?;
    let parsed = parse_model_with_overrides(&text, &s.overrides).map_err(|e| usage(format!("{}: {e}", model.display())))?;
    let res = parse_grid(resolution, 1).map_err(usage)?[0];
    let mut spec = DoaComparisonSpec::new(&text);
    spec.overrides = s.overrides.clone();
    spec.baseline = baseline;
    spec.resolution = res;
    spec.boundary_trajectories = trajectories;
    spec.dt = dt;
    spec.t_end = t_end;
    spec.options = s.options(samples);
    let t = Instant::now();
    let cmp = run_doa_comparison(&spec, s.exec).map_err(failed)?;
    s.time("comparison_s", t);
    let mut report = serde_json::to_value(&cmp).expect("comparison serializes");
    for (branch, name) in [(&cmp.proposed, "proposed"), (&cmp.derivative_free, "baseline")] {
        if let Some(c) = &branch.certificate {
            s.text(&format!("certificate_{name}.json"), &CertificateFile::from_local(c).to_json())?;
        }
        if let Some(d) = &branch.doa {
            let curves = level_curves(d);
            s.csv(&format!("doa_boundary_{name}.csv"), &["curve", "x1", "x2"], level_set_rows(&curves))?;
        }
        write_trajectories(s, &format!("trajectory_{name}"), &branch.paths)?;
    }
    if let Some(p) = published {
        let loaded = load_certificate(s, p)?;
        check_compatible(&parsed, &loaded.global)?;
        if let Some(local) = &loaded.local {
            let t = Instant::now();
            let doa = estimate_doa(&local.global, &parsed.model, &parsed.model.region, &vec![res; parsed.model.n], s.exec)
                .map_err(failed)?;
            let (rep, paths) = replay_certificate(&parsed.model, local, 36, dt, t_end, s.exec).map_err(failed)?;
            s.time("published_replay_s", t);
            report["published"] = json!({
                "area": doa.area,
                "notes": loaded.notes,
                "replay_passed": rep.passed(),
                "replay": rep,
            });
            let refs: Vec<_> = paths.iter().map(|p| (p, "black")).collect();
            let layers = [DoaLayer { label: "published V <= 1", color: "#2ca02c", doa: &doa }];
            s.text(
                "published_replay.svg",
                &phase_plane_svg("Published certificate replay", &parsed.model.region, &layers, &refs, Some((&parsed.model, &local.global))),
            )?;
        }
    }
    s.json("comparison.json", &report)?;
    s.text("doa_compare.svg", &cmp.svg())?;
    eprintln!(
        "proposed area {:?}, derivative-free area {:?}, ratio {:?}",
        cmp.proposed.area, cmp.derivative_free.area, cmp.area_ratio
    );
    match (cmp.proposed.feasible, cmp.derivative_free.feasible) {
        (true, true) => Ok(()),
        (p, b) => Err(failed(format!("infeasible branch (proposed feasible: {p}, derivative-free feasible: {b})"))),
    }
}

fn cmd_verify(s: &mut Session, model: &Path, cert: &Path, samples: Option<usize>) -> Result<(), CliError> {
    let spec = s.model(model)?;
    let loaded = load_certificate(s, cert)?;
    check_compatible(&spec, &loaded.global)?;
    let opts = s.options(samples);
    let t = Instant::now();
    let report = verify_certificate(&loaded.global, &spec.model, opts.samples, opts.seed, s.exec);
    s.time("verification_s", t);
    let ratio = loaded
        .local
        .as_ref()
        .and_then(|l| l.h_enl.as_ref().and_then(|h| inner_ellipsoid_ratio(h, &l.global.p)));
    let ratio_ok = ratio.is_none_or(|r| r <= 1.0 + 1e-6);
    s.json(
        "verification.json",
        &json!({ "passed": report.passed && ratio_ok, "report": report, "inner_ellipsoid_ratio": ratio, "notes": loaded.notes }),
    )?;
    eprintln!(
        "verification {}: worst Lyapunov-derivative eigenvalue {:.3e}, frozen max real part {:.3e}",
        if report.passed && ratio_ok { "passed" } else { "FAILED" },
        report.worst_lyapunov_eigenvalue,
        report.frozen_max_real_part
    );
    if report.passed && ratio_ok {
        Ok(())
    } else {
        Err(failed("verification failed; see verification.json"))
    }
}

fn dispatch(cli: &Cli, s: &mut Session) -> Result<(), CliError> {
    let baseline = |alpha: f64, phi: f64| BaselineParams { alpha, phi, ..BaselineParams::default() };
    match &cli.command {
        Command::Vertices { model, phi, lower, upper, rules } => {
            cmd_vertices(s, model.as_deref(), phi.as_deref(), lower.as_deref(), upper.as_deref(), *rules)
        }
        Command::Synth { model, mode, samples } => cmd_synth(s, model, *mode, *samples),
        Command::SynthLocal { model, mode, baseline: b, baseline_alpha, baseline_phi, samples } => {
            cmd_synth_local(s, model, *mode, b.then(|| baseline(*baseline_alpha, *baseline_phi)), *samples)
        }
        Command::Simulate { model, cert, x0, boundary, dt, t_end } => cmd_simulate(s, model, cert, x0, *boundary, *dt, *t_end),
        Command::Doa { model, cert, resolution, trajectories, dt, t_end } => {
            cmd_doa(s, model, cert, resolution, *trajectories, *dt, *t_end)
        }
        Command::Sweep { model, grid, mode, samples } => cmd_sweep(s, model, grid, mode, *samples),
        Command::DoaCompare { model, resolution, baseline_alpha, baseline_phi, published, trajectories, dt, t_end, samples } => {
            cmd_doa_compare(
                s,
                model,
                resolution,
                baseline(*baseline_alpha, *baseline_phi),
                published.as_deref(),
                *trajectories,
                *dt,
                *t_end,
                *samples,
            )
        }
        Command::Verify { model, cert, samples } => cmd_verify(s, model, cert, *samples),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Vertices { .. } => "vertices",
        Command::Synth { .. } => "synth",
        Command::SynthLocal { .. } => "synth-local",
        Command::Simulate { .. } => "simulate",
        Command::Doa { .. } => "doa",
        Command::Sweep { .. } => "sweep",
        Command::DoaCompare { .. } => "doa-compare",
        Command::Verify { .. } => "verify",
    }
}

/// Runs a parsed invocation and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let start = Instant::now();
    let mut session = Session {
        out: cli.out.clone(),
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
        seed: cli.seed,
        overrides: cli.set.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        timings: serde_json::Map::new(),
    };
    let result = dispatch(cli, &mut session);
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tspdc {}: {e}", command_name(&cli.command));
            e.exit_code()
        }
    };
    // usage errors leave no artifacts behind
    if code != 2 {
        session.timings.insert("total_s".into(), json!(start.elapsed().as_secs_f64()));
        let manifest = json!({
            "tool": "tspdc",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command_name(&cli.command),
            "overrides": session.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>(),
            "seed": session.seed,
            "parallel": session.exec.is_parallel(),
            "inputs": session.inputs,
            "outputs": session.outputs,
            "exit_code": code,
            "timings": session.timings,
        });
        if let Err(e) = write_json(&session.out.join("manifest.json"), &manifest) {
            eprintln!("tspdc: cannot write manifest: {e}");
            return 1;
        }
    }
    code
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => {
            let level = match cli.verbose {
                0 => "warn",
                1 => "info",
                _ => "debug",
            };
            let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
            execute(&cli)
        }
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() { 2 } else { 0 }
        }
    }
}
