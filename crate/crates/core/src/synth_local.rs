//! Local conditions: the vertex conditions plus sublevel-set containment in
//! the validity box, derivative-bound and well-posedness conditions, and the
//! log-det enlargement of an inner ellipsoid of the estimated domain of
//! attraction.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificate::LocalCertificate;
use crate::dpoly::{enumerate_vertices, DerivativePolytope};
use crate::lmi::{
    solve_with, AffineMatrixExpr, ConstraintCheck, Matrix, Objective, SdpProblem, Sense, SolveStatus,
    SolverDiagnostics, Structure, Var,
};
use crate::model::{GradientSectorData, SynthesisConfig, TsModel};
use crate::synth_global::{
    add_theorem2_constraints, closed_loop_expr, recover_gains, verify_certificate, GlobalOptions, SynthError,
    Theorem2Vars, VerificationReport,
};

/// Parameters of the local conditions, checked for presence and shape.
#[derive(Debug, Clone)]
pub struct LocalParams {
    pub x_bar: Vec<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
}

impl LocalParams {
    pub fn from_config(config: &SynthesisConfig, r: usize, n: usize) -> Result<Self, SynthError> {
        config.validate(r, n)?;
        let x_bar = config.x_bar.clone().ok_or_else(|| SynthError::MissingLocal("x_bar".into()))?;
        let mu = config.mu.clone().ok_or_else(|| SynthError::MissingLocal("mu".into()))?;
        let phi = config
            .symmetric_phi()
            .ok_or_else(|| SynthError::MissingLocal("symmetric derivative bounds (phi_lower = -phi_upper)".into()))?;
        Ok(Self { x_bar, mu, phi })
    }
}

fn unit_row(n: usize, k: usize) -> Matrix {
    let mut e = Matrix::zeros(1, n);
    e[(0, k)] = 1.0;
    e
}

fn row(z: &[f64]) -> Matrix {
    Matrix::from_row_slice(1, z.len(), z)
}

fn scalar(v: f64) -> AffineMatrixExpr {
    AffineMatrixExpr::constant(Matrix::from_element(1, 1, v))
}

/// `[[-T_i, R' e_k], [e_k' R, -x_bar_k^2]]`, rule and state indices from zero.
pub fn assemble_omega1(vars: &Theorem2Vars, i: usize, k: usize, x_bar: &[f64]) -> Result<AffineMatrixExpr, SynthError> {
    let n = vars.r.rows;
    if i >= vars.t.len() || k >= n || x_bar.len() != n {
        return Err(SynthError::Index(format!("omega1 rule {} state {} (n = {n})", i + 1, k + 1)));
    }
    let lower = AffineMatrixExpr::product(&unit_row(n, k), vars.r, &Matrix::identity(n, n));
    Ok(AffineMatrixExpr::sym_blocks(&[
        vec![-AffineMatrixExpr::var(vars.t[i])],
        vec![lower, scalar(-x_bar[k] * x_bar[k])],
    ]))
}

/// `[[-T_i, .], [zeta^v_q (A_i R + B_i S_j + B_i sum_{w != v} d_w U_w), -mu_v^2 phi_v^2]]`
/// at polytope vertex `l`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_q(
    model: &TsModel,
    vars: &Theorem2Vars,
    sectors: &GradientSectorData,
    (i, j, v, q, l): (usize, usize, usize, usize, usize),
    poly: &DerivativePolytope,
    mu: &[f64],
    phi: &[f64],
) -> Result<AffineMatrixExpr, SynthError> {
    let r = model.rules();
    if i >= r || j >= r || v >= r || v >= sectors.zeta.len() || q >= sectors.zeta[v].len() || l >= poly.len() {
        return Err(SynthError::Index(format!(
            "Q indices (i, j, v, q, l) = ({}, {}, {}, {}, {})",
            i + 1,
            j + 1,
            v + 1,
            q + 1,
            l + 1
        )));
    }
    let mut weights = poly.vertices[l].clone();
    weights[v] = 0.0;
    let lower = closed_loop_expr(model, vars, i, j, &weights).lmul(&row(&sectors.zeta[v][q]));
    let bound = mu[v] * mu[v] * phi[v] * phi[v];
    Ok(AffineMatrixExpr::sym_blocks(&[
        vec![-AffineMatrixExpr::var(vars.t[i])],
        vec![lower, scalar(-bound)],
    ]))
}

/// `[[-T_i, .], [zeta^v_q B_i U_v, -(1 - mu_v)^2]]`; the lower block is zero
/// without derivative gains.
pub fn assemble_x(
    model: &TsModel,
    vars: &Theorem2Vars,
    sectors: &GradientSectorData,
    (i, v, q): (usize, usize, usize),
    mu: &[f64],
) -> Result<AffineMatrixExpr, SynthError> {
    let (n, r) = (model.n, model.rules());
    if i >= r || v >= r || v >= sectors.zeta.len() || q >= sectors.zeta[v].len() {
        return Err(SynthError::Index(format!("X indices (i, v, q) = ({}, {}, {})", i + 1, v + 1, q + 1)));
    }
    let lower = match vars.u.get(v) {
        Some(u) => AffineMatrixExpr::product(&(row(&sectors.zeta[v][q]) * &model.b[i]), *u, &Matrix::identity(n, n)),
        None => AffineMatrixExpr::zeros(1, n),
    };
    let slack = (1.0 - mu[v]) * (1.0 - mu[v]);
    Ok(AffineMatrixExpr::sym_blocks(&[
        vec![-AffineMatrixExpr::var(vars.t[i])],
        vec![lower, scalar(-slack)],
    ]))
}

#[derive(Debug, Clone)]
pub struct Theorem3Problem {
    pub problem: SdpProblem,
    pub vars: Theorem2Vars,
    pub h_enl: Var,
    pub polytope: DerivativePolytope,
    pub params: LocalParams,
    pub counts: ConstraintCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintCounts {
    pub vertex: usize,
    pub omega1: usize,
    pub q: usize,
    pub x: usize,
    pub lyap_qf: usize,
}

pub fn build_theorem3(
    model: &TsModel,
    sectors: &GradientSectorData,
    config: &SynthesisConfig,
    poly: &DerivativePolytope,
) -> Result<Theorem3Problem, SynthError> {
    let (n, r) = (model.n, model.rules());
    let params = LocalParams::from_config(config, r, n)?;
    if sectors.zeta.len() != r || sectors.zeta.iter().flatten().any(|z| z.len() != n) {
        return Err(SynthError::Index(format!("gradient sector data must have {r} rules of length-{n} rows")));
    }
    if poly.r() != r {
        return Err(SynthError::Index(format!("polytope has {} rules, model {r}", poly.r())));
    }
    let mut problem = SdpProblem::new(config.epsilon);
    let vars = Theorem2Vars::declare(&mut problem, model, config.mode)?;
    let h_enl = problem.add_var("H_enl", n, n, Structure::Symmetric)?;
    add_theorem2_constraints(&mut problem, model, &vars, config.alpha, poly)?;
    let mut counts = ConstraintCounts {
        vertex: problem.constraints.len(),
        ..Default::default()
    };

    for i in 0..r {
        for k in 0..n {
            problem.add_lmi(
                format!("omega1[{},{}] <= 0", i + 1, k + 1),
                assemble_omega1(&vars, i, k, &params.x_bar)?,
                Sense::Nsd,
                false,
            )?;
            counts.omega1 += 1;
        }
    }
    for l in 0..poly.len() {
        for v in 0..r {
            for q in 0..sectors.zeta[v].len() {
                for i in 0..r {
                    let e = assemble_q(model, &vars, sectors, (i, i, v, q, l), poly, &params.mu, &params.phi)?;
                    problem.add_lmi(format!("Q[{0},{0},{1},{2},{3}] <= 0", i + 1, v + 1, q + 1, l + 1), e, Sense::Nsd, false)?;
                    counts.q += 1;
                    for j in i + 1..r {
                        let e = assemble_q(model, &vars, sectors, (i, j, v, q, l), poly, &params.mu, &params.phi)?
                            + assemble_q(model, &vars, sectors, (j, i, v, q, l), poly, &params.mu, &params.phi)?;
                        problem.add_lmi(
                            format!("Q[{},{},{v},{q},{l}] + Q[{},{},{v},{q},{l}] <= 0", i + 1, j + 1, j + 1, i + 1, v = v + 1, q = q + 1, l = l + 1),
                            e,
                            Sense::Nsd,
                            false,
                        )?;
                        counts.q += 1;
                    }
                }
            }
        }
    }
    for i in 0..r {
        for v in 0..r {
            for q in 0..sectors.zeta[v].len() {
                problem.add_lmi(
                    format!("X[{},{},{}] <= 0", i + 1, v + 1, q + 1),
                    assemble_x(model, &vars, sectors, (i, v, q), &params.mu)?,
                    Sense::Nsd,
                    false,
                )?;
                counts.x += 1;
            }
        }
    }
    let rr = AffineMatrixExpr::var(vars.r);
    for i in 0..r {
        let e = AffineMatrixExpr::var(vars.t[i]) + AffineMatrixExpr::var(h_enl) - rr.clone() - rr.transpose();
        problem.add_lmi(format!("lyapQF[{}] <= 0", i + 1), e, Sense::Nsd, false)?;
        counts.lyap_qf += 1;
    }
    problem.set_objective(Objective::MaximizeLogDet(h_enl));
    Ok(Theorem3Problem {
        problem,
        vars,
        h_enl,
        polytope: poly.clone(),
        params,
        counts,
    })
}

/// Largest `x' P_i x` over the ellipsoid `x' H^-1 x <= 1`, i.e. the largest
/// eigenvalue of `L' P_i L` with `H = L L'`. At most one when the ellipsoid
/// lies inside every 1-sublevel set.
pub fn inner_ellipsoid_ratio(h_enl: &Matrix, p: &[Matrix]) -> Option<f64> {
    let l = h_enl.clone().cholesky()?.l();
    Some(
        p.iter()
            .map(|pi| {
                let m = l.transpose() * pi * &l;
                ((&m + m.transpose()) * 0.5).symmetric_eigenvalues().max()
            })
            .fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Gains, Lyapunov matrices and the enlargement matrix from the variables of
/// a feasible local problem.
pub fn recover_local(
    built: &Theorem3Problem,
    lmi: &crate::certificate::LmiVariables,
    h_enl: Matrix,
    config: &SynthesisConfig,
) -> Result<LocalCertificate, SynthError> {
    let global = recover_gains(lmi, config.mode, config.alpha, &built.polytope)?;
    Ok(LocalCertificate {
        global,
        h_enl: Some(h_enl),
        mu: built.params.mu.clone(),
        x_bar: built.params.x_bar.clone(),
        phi: built.params.phi.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub feasible: bool,
    pub status: SolveStatus,
    pub certificate: Option<LocalCertificate>,
    pub log_det_h: Option<f64>,
    pub inner_ellipsoid_ratio: Option<f64>,
    pub diagnostics: SolverDiagnostics,
    pub checks: Vec<ConstraintCheck>,
    pub verification: Option<VerificationReport>,
    pub recovery_error: Option<String>,
    pub elapsed_s: f64,
}

/// Builds, solves, recovers and verifies the local conditions.
pub fn synthesize_local(
    model: &TsModel,
    sectors: &GradientSectorData,
    config: &SynthesisConfig,
    opts: &GlobalOptions,
) -> Result<(LocalOutcome, Theorem3Problem), SynthError> {
    let start = Instant::now();
    let params = LocalParams::from_config(config, model.rules(), model.n)?;
    let lower: Vec<f64> = params.phi.iter().map(|p| -p).collect();
    let poly = enumerate_vertices(&lower, &params.phi)?;
    let built = build_theorem3(model, sectors, config, &poly)?;
    let sol = solve_with(&built.problem, &opts.solver)?;
    let mut outcome = LocalOutcome {
        feasible: false,
        status: sol.status,
        certificate: None,
        log_det_h: sol.objective_value,
        inner_ellipsoid_ratio: None,
        diagnostics: sol.diagnostics.clone(),
        checks: sol.checks.clone(),
        verification: None,
        recovery_error: None,
        elapsed_s: 0.0,
    };
    if sol.status == SolveStatus::Feasible {
        let lmi = built.vars.extract(&sol, model.m);
        let h = sol.value(built.h_enl).clone();
        match recover_local(&built, &lmi, h, config) {
            Ok(cert) => {
                let report = verify_certificate(&cert.global, model, opts.samples, opts.seed, opts.exec);
                let ratio = cert.h_enl.as_ref().and_then(|h| inner_ellipsoid_ratio(h, &cert.global.p));
                outcome.inner_ellipsoid_ratio = ratio;
                outcome.feasible = report.passed && ratio.is_some_and(|v| v <= 1.0 + 1e-6);
                outcome.verification = Some(report);
                outcome.certificate = Some(cert);
            }
            Err(e) => outcome.recovery_error = Some(e.to_string()),
        }
    }
    outcome.elapsed_s = start.elapsed().as_secs_f64();
    Ok((outcome, built))
}
