//! Finite vertex conditions for the derivative-dependent PDC law
//! `u = K(h) x + L(h') x`, gain recovery and dense verification.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::{GlobalCertificate, LmiVariables};
use crate::dpoly::{enumerate_vertices, DerivativePolytope, PolytopeError};
use crate::lmi::{
    solve_with, AffineMatrixExpr, ConstraintCheck, LmiError, Matrix, Objective, SdpProblem, SdpSolution,
    Sense, SolveStatus, SolverDiagnostics, SolverSettings, Structure, Var,
};
use crate::model::{blend_matrices, Mode, ModelError, SynthesisConfig, TsModel};
use crate::par::{map_indexed, Execution};

/// Largest admissible condition number of `R` during gain recovery.
pub const MAX_R_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Polytope(#[from] PolytopeError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("R + R' is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    RNotCoercive { min_eig: f64 },
    #[error("R is near-singular (condition number {cond:.3e} > {MAX_R_CONDITION:.0e})")]
    SingularR { cond: f64 },
    #[error("recovered P_{rule} is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositive { rule: usize, min_eig: f64 },
    #[error("missing local configuration: {0}")]
    MissingLocal(String),
    #[error("no certificate: solver status {0:?}")]
    NotFeasible(SolveStatus),
}

/// Handles of the SDP variables. In quadratic mode every entry of `t` is the
/// same variable; `u` is empty unless derivative gains are synthesized.
#[derive(Debug, Clone)]
pub struct Theorem2Vars {
    pub r: Var,
    pub t: Vec<Var>,
    pub s: Vec<Var>,
    pub u: Vec<Var>,
}

impl Theorem2Vars {
    pub fn declare(problem: &mut SdpProblem, model: &TsModel, mode: Mode) -> Result<Self, LmiError> {
        let (n, m, r) = (model.n, model.m, model.rules());
        let rv = problem.add_var("R", n, n, Structure::Full)?;
        let t = match mode {
            Mode::Quadratic => vec![problem.add_var("T", n, n, Structure::Symmetric)?; r],
            _ => (0..r)
                .map(|i| problem.add_var(&format!("T{}", i + 1), n, n, Structure::Symmetric))
                .collect::<Result<_, _>>()?,
        };
        let s = (0..r)
            .map(|i| problem.add_var(&format!("S{}", i + 1), m, n, Structure::Full))
            .collect::<Result<_, _>>()?;
        let u = if mode.has_derivative_gains() {
            (0..r)
                .map(|i| problem.add_var(&format!("U{}", i + 1), m, n, Structure::Full))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };
        Ok(Self { r: rv, t, s, u })
    }

    /// Distinct `T` variables (one in quadratic mode).
    pub fn distinct_t(&self) -> Vec<Var> {
        let mut out: Vec<Var> = Vec::new();
        for t in &self.t {
            if !out.contains(t) {
                out.push(*t);
            }
        }
        out
    }

    pub fn extract(&self, sol: &SdpSolution, m: usize) -> LmiVariables {
        let n = self.r.rows;
        LmiVariables {
            r: sol.value(self.r).clone(),
            t: self.t.iter().map(|v| sol.value(*v).clone()).collect(),
            s: self.s.iter().map(|v| sol.value(*v).clone()).collect(),
            u: if self.u.is_empty() {
                vec![Matrix::zeros(m, n); self.s.len()]
            } else {
                self.u.iter().map(|v| sol.value(*v).clone()).collect()
            },
        }
    }

    /// Full value vector for `problem` taking `R, T, S, U` from `lmi` (missing
    /// `U` read as zero) and every other variable from `extra` or zero.
    pub fn substitution_values(&self, problem: &SdpProblem, lmi: &LmiVariables, extra: &[(Var, Matrix)]) -> Vec<Matrix> {
        let mut values: Vec<Matrix> = problem.vars.iter().map(|v| Matrix::zeros(v.rows, v.cols)).collect();
        values[self.r.id] = lmi.r.clone();
        for (i, t) in self.t.iter().enumerate() {
            values[t.id] = lmi.t[i.min(lmi.t.len() - 1)].clone();
        }
        for (j, s) in self.s.iter().enumerate() {
            values[s.id] = lmi.s[j].clone();
        }
        for (k, u) in self.u.iter().enumerate() {
            if let Some(val) = lmi.u.get(k) {
                values[u.id] = val.clone();
            }
        }
        for (v, val) in extra {
            values[v.id] = val.clone();
        }
        values
    }
}

fn check_rule(model: &TsModel, i: usize, what: &str) -> Result<(), SynthError> {
    if i >= model.rules() {
        return Err(SynthError::Index(format!("{what} = {} but the model has {} rules", i + 1, model.rules())));
    }
    Ok(())
}

/// `A_i R + B_i S_j + B_i sum_k w_k U_k` (the `U` sum over `weights`).
pub(crate) fn closed_loop_expr(
    model: &TsModel,
    vars: &Theorem2Vars,
    i: usize,
    j: usize,
    weights: &[f64],
) -> AffineMatrixExpr {
    let n = model.n;
    let eye = Matrix::identity(n, n);
    let mut e = AffineMatrixExpr::product(&model.a[i], vars.r, &eye)
        + AffineMatrixExpr::product(&model.b[i], vars.s[j], &eye);
    for (k, u) in vars.u.iter().enumerate() {
        if weights[k] != 0.0 {
            e += AffineMatrixExpr::product(&(&model.b[i] * weights[k]), *u, &eye);
        }
    }
    e
}

/// Vertex matrix `M_{i,j,l}` (2n x 2n) with rule indices counted from zero.
pub fn assemble_m(
    model: &TsModel,
    vars: &Theorem2Vars,
    i: usize,
    j: usize,
    l: usize,
    alpha: f64,
    poly: &DerivativePolytope,
) -> Result<AffineMatrixExpr, SynthError> {
    check_rule(model, i, "i")?;
    check_rule(model, j, "j")?;
    let v = poly
        .vertices
        .get(l)
        .ok_or_else(|| SynthError::Index(format!("vertex {} of {}", l + 1, poly.len())))?;
    if v.len() != model.rules() {
        return Err(SynthError::Index(format!("vertex has {} entries for {} rules", v.len(), model.rules())));
    }
    let n = model.n;
    let closed = closed_loop_expr(model, vars, i, j, v);
    let mut b11 = closed.he();
    for (k, t) in vars.t.iter().enumerate() {
        if v[k] != 0.0 {
            b11 += AffineMatrixExpr::var(*t).scale(v[k]);
        }
    }
    let r = AffineMatrixExpr::var(vars.r);
    let b21 = AffineMatrixExpr::var(vars.t[i]) - r.transpose() + closed.scale(alpha);
    let b22 = (r.clone() + r.transpose()).scale(-alpha);
    let m = AffineMatrixExpr::sym_blocks(&[vec![b11], vec![b21, b22]]);
    debug_assert_eq!((m.rows, m.cols), (2 * n, 2 * n));
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct Theorem2Problem {
    pub problem: SdpProblem,
    pub vars: Theorem2Vars,
    pub polytope: DerivativePolytope,
    pub mode: Mode,
    pub alpha: f64,
}

/// Adds `T_i > 0`, `M_iil < 0` and `M_ijl + M_jil < 0` (i < j) for every
/// vertex to `problem`.
pub(crate) fn add_theorem2_constraints(
    problem: &mut SdpProblem,
    model: &TsModel,
    vars: &Theorem2Vars,
    alpha: f64,
    poly: &DerivativePolytope,
) -> Result<(), SynthError> {
    let r = model.rules();
    for (i, t) in vars.t.iter().enumerate() {
        problem.add_lmi(format!("T{} > 0", i + 1), AffineMatrixExpr::var(*t), Sense::Psd, true)?;
    }
    for l in 0..poly.len() {
        for i in 0..r {
            let m = assemble_m(model, vars, i, i, l, alpha, poly)?;
            problem.add_lmi(format!("M[{},{},{}] < 0", i + 1, i + 1, l + 1), m, Sense::Nsd, true)?;
        }
        for i in 0..r {
            for j in i + 1..r {
                let m = assemble_m(model, vars, i, j, l, alpha, poly)? + assemble_m(model, vars, j, i, l, alpha, poly)?;
                problem.add_lmi(
                    format!("M[{},{},{}] + M[{},{},{}] < 0", i + 1, j + 1, l + 1, j + 1, i + 1, l + 1),
                    m,
                    Sense::Nsd,
                    true,
                )?;
            }
        }
    }
    Ok(())
}

/// Assembles the vertex conditions with a small trace-minimizing objective
/// that selects a well-conditioned interior point.
pub fn build_theorem2(
    model: &TsModel,
    config: &SynthesisConfig,
    poly: &DerivativePolytope,
) -> Result<Theorem2Problem, SynthError> {
    config.validate(model.rules(), model.n)?;
    if poly.r() != model.rules() {
        return Err(SynthError::Index(format!("polytope has {} rules, model {}", poly.r(), model.rules())));
    }
    let mut problem = SdpProblem::new(config.epsilon);
    let vars = Theorem2Vars::declare(&mut problem, model, config.mode)?;
    add_theorem2_constraints(&mut problem, model, &vars, config.alpha, poly)?;
    let n = model.n;
    problem.set_objective(Objective::Linear(
        vars.distinct_t().into_iter().map(|t| (t, Matrix::identity(n, n))).collect(),
    ));
    Ok(Theorem2Problem {
        problem,
        vars,
        polytope: poly.clone(),
        mode: config.mode,
        alpha: config.alpha,
    })
}

/// `K_i = S_i R^-1`, `L_k = U_k R^-1`, `P_i = R^-T T_i R^-1`.
pub fn recover_gains(
    lmi: &LmiVariables,
    mode: Mode,
    alpha: f64,
    polytope: &DerivativePolytope,
) -> Result<GlobalCertificate, SynthError> {
    let r = &lmi.r;
    let coercive = (r + r.transpose()).symmetric_eigenvalues().min();
    if !(coercive > 0.0) {
        return Err(SynthError::RNotCoercive { min_eig: coercive });
    }
    let sv = r.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= MAX_R_CONDITION) {
        return Err(SynthError::SingularR { cond });
    }
    let rinv = r.clone().try_inverse().ok_or(SynthError::SingularR { cond: f64::INFINITY })?;
    let k = lmi.s.iter().map(|s| s * &rinv).collect();
    let l = lmi.u.iter().map(|u| u * &rinv).collect();
    let mut p = Vec::with_capacity(lmi.t.len());
    for (i, t) in lmi.t.iter().enumerate() {
        let pi = rinv.transpose() * t * &rinv;
        let pi = (&pi + pi.transpose()) * 0.5;
        let min_eig = pi.symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(SynthError::NotPositive { rule: i + 1, min_eig });
        }
        p.push(pi);
    }
    Ok(GlobalCertificate {
        mode,
        alpha,
        polytope: polytope.clone(),
        variables: Some(lmi.clone()),
        k,
        l,
        p,
    })
}

/// Dense parametrized matrix `M(h, d)` built from the LMI variables.
pub fn theorem1_matrix(model: &TsModel, lmi: &LmiVariables, alpha: f64, h: &[f64], d: &[f64]) -> Matrix {
    let n = model.n;
    let (a, b) = model.blend(h);
    let r = &lmi.r;
    let closed = &a * r + &b * blend_matrices(&lmi.s, h) + &b * blend_matrices(&lmi.u, d);
    let b11 = blend_matrices(&lmi.t, d) + &closed + closed.transpose();
    let b21 = blend_matrices(&lmi.t, h) - r.transpose() + &closed * alpha;
    let b22 = (r + r.transpose()) * -alpha;
    let mut m = Matrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&b11);
    m.view_mut((n, 0), (n, n)).copy_from(&b21);
    m.view_mut((0, n), (n, n)).copy_from(&b21.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&b22);
    m
}

/// Lyapunov-derivative matrix `P(d) + He(P(h) A_cl(h, d))` with
/// `A_cl = A(h) + B(h) K(h) + B(h) L(d)`; negative definite whenever the
/// parametrized LMI holds.
pub fn lyapunov_derivative_matrix(model: &TsModel, cert: &GlobalCertificate, h: &[f64], d: &[f64]) -> Matrix {
    let (a, b) = model.blend(h);
    let acl = &a + &b * cert.k_blend(h) + &b * cert.l_blend(d);
    let ph = cert.p_blend(h) * acl;
    cert.p_blend(d) + &ph + ph.transpose()
}

fn max_eig(m: &Matrix) -> f64 {
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().max()
}

fn min_eig(m: &Matrix) -> f64 {
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationFailure {
    pub check: String,
    pub h: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertex: Option<usize>,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    /// Simplex points checked (the r unit vectors plus random samples).
    pub points: usize,
    pub vertices: usize,
    /// Worst largest eigenvalue of `M(h, v)`; absent without LMI variables.
    pub worst_m_eigenvalue: Option<f64>,
    /// Worst smallest eigenvalue of `T(h)`.
    pub worst_t_eigenvalue: Option<f64>,
    /// Worst largest eigenvalue of the Lyapunov-derivative matrix.
    pub worst_lyapunov_eigenvalue: f64,
    /// Worst smallest eigenvalue of `P(h)`.
    pub worst_p_eigenvalue: f64,
    /// Largest real part over the spectra of `A_i + B_i K_i`.
    pub frozen_max_real_part: f64,
    pub failures: Vec<VerificationFailure>,
}

const MAX_REPORTED_FAILURES: usize = 20;

/// Uniform samples of the probability simplex, preceded by its vertices.
pub fn simplex_points(r: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = (0..r)
        .map(|i| (0..r).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let e: Vec<f64> = (0..r).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let s: f64 = e.iter().sum();
        pts.push(e.into_iter().map(|v| v / s).collect());
    }
    pts
}

/// Checks the certificate at the simplex vertices and `samples` random
/// simplex points against every polytope vertex: `M(h, v) < 0` and
/// `T(h) > 0` when the LMI variables are present, and always the
/// Lyapunov-derivative form and `P(h) > 0`.
pub fn verify_certificate(
    cert: &GlobalCertificate,
    model: &TsModel,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> VerificationReport {
    let r = model.rules();
    let pts = simplex_points(r, samples, seed);
    let poly = &cert.polytope;
    let per_point = map_indexed(exec, pts.len(), |q| {
        let h = &pts[q];
        let mut fails = Vec::new();
        let mut m_worst = f64::NEG_INFINITY;
        let mut t_worst = f64::INFINITY;
        if let Some(lmi) = &cert.variables {
            t_worst = min_eig(&blend_matrices(&lmi.t, h));
            if !(t_worst > 0.0) {
                fails.push(VerificationFailure {
                    check: "T(h) > 0".into(),
                    h: h.clone(),
                    vertex: None,
                    eigenvalue: t_worst,
                });
            }
            for (l, v) in poly.vertices.iter().enumerate() {
                let e = max_eig(&theorem1_matrix(model, lmi, cert.alpha, h, v));
                m_worst = m_worst.max(e);
                if !(e < 0.0) {
                    fails.push(VerificationFailure {
                        check: "M(h, v) < 0".into(),
                        h: h.clone(),
                        vertex: Some(l + 1),
                        eigenvalue: e,
                    });
                }
            }
        }
        let p_worst = min_eig(&cert.p_blend(h));
        if !(p_worst > 0.0) {
            fails.push(VerificationFailure {
                check: "P(h) > 0".into(),
                h: h.clone(),
                vertex: None,
                eigenvalue: p_worst,
            });
        }
        let mut lyap_worst = f64::NEG_INFINITY;
        for (l, v) in poly.vertices.iter().enumerate() {
            let e = max_eig(&lyapunov_derivative_matrix(model, cert, h, v));
            lyap_worst = lyap_worst.max(e);
            if !(e < 0.0) {
                fails.push(VerificationFailure {
                    check: "P(v) + He(P(h) A_cl(h, v)) < 0".into(),
                    h: h.clone(),
                    vertex: Some(l + 1),
                    eigenvalue: e,
                });
            }
        }
        (m_worst, t_worst, lyap_worst, p_worst, fails)
    });

    let frozen = frozen_max_real_part(model, cert);
    let mut failures = Vec::new();
    let (mut m_w, mut t_w, mut l_w, mut p_w) = (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut failed = false;
    for (m, t, l, p, f) in per_point {
        m_w = m_w.max(m);
        t_w = t_w.min(t);
        l_w = l_w.max(l);
        p_w = p_w.min(p);
        failed |= !f.is_empty();
        failures.extend(f);
    }
    failures.truncate(MAX_REPORTED_FAILURES);
    // With 0 inside the derivative box the frozen closed loops are implied
    // stable; outside that case they are reported but not required.
    let straddles = poly.lower.iter().zip(&poly.upper).all(|(lo, hi)| *lo <= 0.0 && *hi >= 0.0);
    if straddles && !(frozen < 0.0) {
        failed = true;
        if failures.len() < MAX_REPORTED_FAILURES {
            failures.push(VerificationFailure {
                check: "A_i + B_i K_i Hurwitz".into(),
                h: Vec::new(),
                vertex: None,
                eigenvalue: frozen,
            });
        }
    }
    let has_vars = cert.variables.is_some();
    VerificationReport {
        passed: !failed,
        points: pts.len(),
        vertices: poly.len(),
        worst_m_eigenvalue: has_vars.then_some(m_w),
        worst_t_eigenvalue: has_vars.then_some(t_w),
        worst_lyapunov_eigenvalue: l_w,
        worst_p_eigenvalue: p_w,
        frozen_max_real_part: frozen,
        failures,
    }
}

/// Largest real part over the eigenvalues of every `A_i + B_i K_i`.
pub fn frozen_max_real_part(model: &TsModel, cert: &GlobalCertificate) -> f64 {
    (0..model.rules())
        .map(|i| {
            let acl = &model.a[i] + &model.b[i] * &cert.k[i];
            acl.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Result of one synthesis run. `feasible` requires the solver's dense
/// constraint re-verification, a successful gain recovery and a passing
/// certificate verification.
#[derive(Debug, Clone)]
pub struct GlobalOutcome {
    pub feasible: bool,
    pub status: SolveStatus,
    pub certificate: Option<GlobalCertificate>,
    pub diagnostics: SolverDiagnostics,
    pub checks: Vec<ConstraintCheck>,
    pub verification: Option<VerificationReport>,
    pub recovery_error: Option<String>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct GlobalOptions {
    pub solver: SolverSettings,
    pub samples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            samples: 200,
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

/// Builds, solves, recovers and verifies.
pub fn synthesize_global(
    model: &TsModel,
    config: &SynthesisConfig,
    opts: &GlobalOptions,
) -> Result<(GlobalOutcome, Theorem2Problem), SynthError> {
    let start = Instant::now();
    let poly = enumerate_vertices(&config.phi_lower, &config.phi_upper)?;
    let built = build_theorem2(model, config, &poly)?;
    let sol = solve_with(&built.problem, &opts.solver)?;
    let mut outcome = GlobalOutcome {
        feasible: false,
        status: sol.status,
        certificate: None,
        diagnostics: sol.diagnostics.clone(),
        checks: sol.checks.clone(),
        verification: None,
        recovery_error: None,
        elapsed_s: 0.0,
    };
    if sol.status == SolveStatus::Feasible {
        let lmi = built.vars.extract(&sol, model.m);
        match recover_gains(&lmi, config.mode, config.alpha, &poly) {
            Ok(cert) => {
                let report = verify_certificate(&cert, model, opts.samples, opts.seed, opts.exec);
                outcome.feasible = report.passed;
                outcome.verification = Some(report);
                outcome.certificate = Some(cert);
            }
            Err(e) => outcome.recovery_error = Some(e.to_string()),
        }
    }
    outcome.elapsed_s = start.elapsed().as_secs_f64();
    Ok((outcome, built))
}

/// Dense check of `built`'s constraints at a certificate's variables (a
/// missing `U` is read as zero, a single `T` is shared by every rule).
pub fn substitute(built: &Theorem2Problem, lmi: &LmiVariables) -> Vec<ConstraintCheck> {
    let values = built.vars.substitution_values(&built.problem, lmi, &[]);
    built.problem.check(&values)
}

/// Every `alpha` tried with its feasibility flag, and the first feasible outcome.
pub type AlphaSearch = (Vec<(f64, bool)>, Option<GlobalOutcome>);

/// Tries each `alpha` in order and stops at the first feasible one.
pub fn alpha_grid_search(
    model: &TsModel,
    config: &SynthesisConfig,
    alphas: &[f64],
    opts: &GlobalOptions,
) -> Result<AlphaSearch, SynthError> {
    let mut tried = Vec::new();
    for &alpha in alphas {
        let cfg = SynthesisConfig { alpha, ..config.clone() };
        let (outcome, _) = synthesize_global(model, &cfg, opts)?;
        tried.push((alpha, outcome.feasible));
        if outcome.feasible {
            return Ok((tried, Some(outcome)));
        }
    }
    Ok((tried, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn scalar_model(a: [f64; 2], b: [f64; 2]) -> TsModel {
        TsModel::new(vec![scalar(a[0]), scalar(a[1])], vec![scalar(b[0]), scalar(b[1])]).unwrap()
    }

    fn declare(model: &TsModel, mode: Mode) -> (SdpProblem, Theorem2Vars) {
        let mut p = SdpProblem::new(1e-7);
        let v = Theorem2Vars::declare(&mut p, model, mode).unwrap();
        (p, v)
    }

    #[test]
    fn zero_dynamics_vertex_matrix() {
        let model = TsModel::new(vec![scalar(0.0); 2], vec![scalar(0.0); 2]).unwrap();
        let (p, vars) = declare(&model, Mode::Proposed);
        let poly = enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let m = assemble_m(&model, &vars, 0, 0, 0, 1.0, &poly).unwrap();
        let lmi = LmiVariables {
            r: scalar(1.0),
            t: vec![scalar(1.0); 2],
            s: vec![scalar(0.3); 2],
            u: vec![scalar(0.7); 2],
        };
        let vals = vars.substitution_values(&p, &lmi, &[]);
        assert_eq!(m.eval(&vals), Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -2.0]));
    }

    #[test]
    fn hand_expanded_scalar_vertex_matrix() {
        let (a1, b1, s) = (0.7, -1.3, 2.1);
        let model = scalar_model([a1, 5.0], [b1, 9.0]);
        let (p, vars) = declare(&model, Mode::Proposed);
        let poly = enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let l = poly.vertices.iter().position(|v| v == &vec![1.0, -1.0]).unwrap();
        let m = assemble_m(&model, &vars, 0, 0, l, 0.04, &poly).unwrap();
        let lmi = LmiVariables {
            r: scalar(1.0),
            t: vec![scalar(1.0); 2],
            s: vec![scalar(s); 2],
            u: vec![scalar(0.0); 2],
        };
        let got = m.eval(&vars.substitution_values(&p, &lmi, &[]));
        let c = a1 + b1 * s;
        let want = Matrix::from_row_slice(2, 2, &[2.0 * c, 0.04 * c, 0.04 * c, -0.08]);
        assert!((got - want).amax() < 1e-14);
    }

    #[test]
    fn index_errors() {
        let model = scalar_model([1.0, 2.0], [1.0, 1.0]);
        let (_, vars) = declare(&model, Mode::Proposed);
        let poly = enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert!(matches!(assemble_m(&model, &vars, 2, 0, 0, 0.1, &poly), Err(SynthError::Index(_))));
        assert!(matches!(assemble_m(&model, &vars, 0, 0, 5, 0.1, &poly), Err(SynthError::Index(_))));
    }

    #[test]
    fn constraint_count_and_quadratic_sharing() {
        let model = scalar_model([1.0, 2.0], [1.0, 1.0]);
        let poly = enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let cfg = SynthesisConfig::symmetric(0.04, &[1.0, 1.0]);
        let built = build_theorem2(&model, &cfg, &poly).unwrap();
        assert_eq!(built.problem.constraints.len(), 8);
        let cfg = SynthesisConfig {
            mode: Mode::Quadratic,
            ..cfg
        };
        let built = build_theorem2(&model, &cfg, &poly).unwrap();
        assert_eq!(built.vars.t[0], built.vars.t[1]);
        assert!(built.vars.u.is_empty());
    }

    #[test]
    fn scalar_recovery() {
        let poly = enumerate_vertices(&[-1.0], &[1.0]).unwrap();
        let lmi = LmiVariables {
            r: scalar(2.0),
            t: vec![scalar(4.0)],
            s: vec![scalar(2.0)],
            u: vec![scalar(0.0)],
        };
        let c = recover_gains(&lmi, Mode::Proposed, 0.1, &poly).unwrap();
        assert_eq!(c.k[0], scalar(1.0));
        assert_eq!(c.l[0], scalar(0.0));
        assert_eq!(c.p[0], scalar(1.0));
        let bad = LmiVariables {
            r: Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]),
            t: vec![Matrix::identity(2, 2)],
            s: vec![Matrix::zeros(1, 2)],
            u: vec![Matrix::zeros(1, 2)],
        };
        assert!(matches!(recover_gains(&bad, Mode::Proposed, 0.1, &poly), Err(SynthError::SingularR { .. })));
        let skew = LmiVariables {
            r: Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            ..bad
        };
        assert!(matches!(recover_gains(&skew, Mode::Proposed, 0.1, &poly), Err(SynthError::RNotCoercive { .. })));
    }

    #[test]
    fn scalar_plant_is_stabilized() {
        // x' = a x + b u with unstable rules: any certificate needs K < -a/b.
        let model = scalar_model([1.0, 2.0], [1.0, 1.5]);
        let cfg = SynthesisConfig::symmetric(0.1, &[1.0, 1.0]);
        let (out, _) = synthesize_global(&model, &cfg, &GlobalOptions::default()).unwrap();
        assert!(out.feasible, "{:?}", out.diagnostics);
        let cert = out.certificate.unwrap();
        assert!(cert.variables.is_some());
        let report = out.verification.unwrap();
        assert!(report.worst_m_eigenvalue.unwrap() < 0.0);
        assert!(report.frozen_max_real_part < 0.0);
    }
}
