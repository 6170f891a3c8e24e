//! Lowering to standard conic form and the solver adapter.
//!
//! The conic program is `min q'x  s.t.  A x + s = b,  s in K` with `K` a
//! product of PSD cones (svec layout) and exponential cones. Any solver
//! accepting that data can sit behind [`solve_with`]; the default backend is
//! Clarabel.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use super::logdet::compile_logdet;
use super::svec::{svec, svec_len};
use super::{ConstraintId, LmiError, Matrix, Objective, SdpProblem, Sense};
use crate::io::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    Inaccurate,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub id: ConstraintId,
    pub name: String,
    pub sense: Sense,
    pub strict: bool,
    pub margin: f64,
    /// Largest eigenvalue for NSD constraints, smallest for PSD.
    pub extreme_eigenvalue: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub backend: String,
    pub solver_status: String,
    pub iterations: u32,
    pub solve_time_s: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub scalar_variables: usize,
    pub conic_rows: usize,
    pub homogeneous: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logdet_path: Option<String>,
    /// Constraints failing the dense re-verification.
    #[serde(default)]
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// One value per declared variable (including auxiliaries added by the
    /// log-det compilation), in declaration order.
    pub values: Vec<Matrix>,
    pub names: Vec<String>,
    pub objective_value: Option<f64>,
    pub diagnostics: SolverDiagnostics,
    pub checks: Vec<ConstraintCheck>,
}

impl SdpSolution {
    pub fn value(&self, v: super::Var) -> &Matrix {
        &self.values[v.id]
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub max_iter: u32,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_gap_abs: 1e-8,
            tol_gap_rel: 1e-8,
            tol_feas: 1e-8,
            verbose: false,
        }
    }
}

pub(crate) struct ConicProgram {
    pub n: usize,
    pub q: Vec<f64>,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub b: Vec<f64>,
    pub cones: Vec<SupportedConeT<f64>>,
    pub blocks: Vec<(String, usize, usize)>,
    pub offsets: Vec<usize>,
}

impl ConicProgram {
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# conic program: min q'x s.t. A x + s = b, s in K");
        let _ = writeln!(out, "# PSD blocks use the svec layout (upper triangle, column-major, sqrt2-scaled)");
        let _ = writeln!(out, "vars {}", self.n);
        let _ = writeln!(out, "rows {}", self.b.len());
        for (name, start, len) in &self.blocks {
            let _ = writeln!(out, "cone {start} {len} {name}");
        }
        for (k, v) in self.q.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "q {k} {}", fmt_f64(*v));
            }
        }
        let mut trip: Vec<(usize, usize, f64)> = self
            .rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((r, c), v)| (*r, *c, *v))
            .collect();
        trip.sort_by_key(|t| (t.0, t.1));
        for (r, c, v) in trip {
            let _ = writeln!(out, "A {r} {c} {}", fmt_f64(v));
        }
        for (k, v) in self.b.iter().enumerate() {
            if *v != 0.0 {
                let _ = writeln!(out, "b {k} {}", fmt_f64(*v));
            }
        }
        out
    }
}

fn scalar_index(p: &SdpProblem, offsets: &[usize], (var, i, j): (super::Var, usize, usize)) -> usize {
    let decl = &p.vars[var.id];
    let pos = decl
        .scalar_positions()
        .iter()
        .position(|&(a, b)| (a, b) == (i, j) || (decl.structure == super::Structure::Symmetric && (a, b) == (j, i)))
        .expect("entry is a free scalar of the variable");
    offsets[var.id] + pos
}

pub(crate) fn lower(p: &SdpProblem) -> Result<ConicProgram, LmiError> {
    let mut offsets = Vec::with_capacity(p.vars.len());
    let mut n = 0;
    for v in &p.vars {
        offsets.push(n);
        n += v.scalar_count();
    }
    let mut prog = ConicProgram {
        n,
        q: vec![0.0; n],
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
        b: Vec::new(),
        cones: Vec::new(),
        blocks: Vec::new(),
        offsets: offsets.clone(),
    };

    for c in &p.constraints {
        let k = c.expr.rows;
        let start = prog.b.len();
        let margin = p.margin(c);
        let sign = match c.sense {
            Sense::Psd => 1.0,
            Sense::Nsd => -1.0,
        };
        // s = sign * (C + sum x G) - margin I
        let shifted = &c.expr.constant * sign - Matrix::identity(k, k) * margin;
        prog.b.extend(svec(&shifted));
        let mut vars_seen: Vec<usize> = c.expr.terms.iter().map(|t| t.var.id).collect();
        vars_seen.sort_unstable();
        vars_seen.dedup();
        for vid in vars_seen {
            let decl = &p.vars[vid];
            for s in 0..decl.scalar_count() {
                let g = c.expr.coefficient(decl, vid, s);
                for (r, v) in svec(&g).into_iter().enumerate() {
                    if v != 0.0 {
                        prog.rows.push(start + r);
                        prog.cols.push(offsets[vid] + s);
                        prog.vals.push(-sign * v);
                    }
                }
            }
        }
        prog.cones.push(SupportedConeT::PSDTriangleConeT(k));
        prog.blocks.push((format!("psd{k} {}", c.name), start, svec_len(k)));
    }

    for ep in &p.log_epigraphs {
        let start = prog.b.len();
        let t = scalar_index(p, &offsets, ep.t);
        let z = scalar_index(p, &offsets, ep.arg);
        // (t, 1, z) in K_exp
        prog.rows.extend([start, start + 2]);
        prog.cols.extend([t, z]);
        prog.vals.extend([-1.0, -1.0]);
        prog.b.extend([0.0, 1.0, 0.0]);
        prog.cones.push(SupportedConeT::ExponentialConeT());
        prog.blocks.push(("exp log-epigraph".to_string(), start, 3));
    }

    match &p.objective {
        Objective::Feasibility => {}
        Objective::Linear(terms) => {
            for (var, w) in terms {
                let decl = &p.vars[var.id];
                for s in 0..decl.scalar_count() {
                    prog.q[offsets[var.id] + s] += decl.basis(s).component_mul(w).sum();
                }
            }
        }
        Objective::MaximizeLogDet(_) => unreachable!("log-det objectives are compiled before lowering"),
    }
    Ok(prog)
}

pub fn solve(problem: &SdpProblem) -> Result<SdpSolution, LmiError> {
    solve_with(problem, &SolverSettings::default())
}

/// Solves `problem`, maps the primal values back to named matrices and
/// re-verifies every constraint with dense eigenvalue computations.
pub fn solve_with(problem: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution, LmiError> {
    let mut work = problem.clone();
    let logdet_target = match work.objective {
        Objective::MaximizeLogDet(h) => {
            compile_logdet(&mut work, h)?;
            Some(h)
        }
        _ => None,
    };
    let prog = lower(&work)?;
    let m = prog.b.len();
    let a = CscMatrix::new_from_triplets(m, prog.n, prog.rows.clone(), prog.cols.clone(), prog.vals.clone());
    let p = CscMatrix::<f64>::zeros((prog.n, prog.n));
    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(settings.verbose)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol_gap_abs)
        .tol_gap_rel(settings.tol_gap_rel)
        .tol_feas(settings.tol_feas)
        .build()
        .map_err(|e| LmiError::Solver(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &prog.q, &a, &prog.b, &prog.cones, clarabel_settings)
        .map_err(|e| LmiError::Solver(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let values: Vec<Matrix> = work
        .vars
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let off = prog.offsets[k];
            v.from_scalars(&sol.x[off..off + v.scalar_count()])
        })
        .collect();
    let checks = work.check(&values);
    let failed: Vec<String> = checks.iter().filter(|c| !c.ok).map(|c| c.name.clone()).collect();

    let status = match sol.status {
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible
        | SolverStatus::AlmostDualInfeasible
        | SolverStatus::Unsolved
        | SolverStatus::CallbackTerminated => SolveStatus::Error,
        _ if failed.is_empty() => SolveStatus::Feasible,
        _ => SolveStatus::Inaccurate,
    };

    let objective_value = match (&problem.objective, logdet_target) {
        (_, Some(h)) => {
            let hv = &values[h.id];
            Some(
                hv.clone()
                    .cholesky()
                    .map_or(f64::NAN, |c| 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()),
            )
        }
        (Objective::Linear(terms), None) => Some(
            terms
                .iter()
                .map(|(v, w)| values[v.id].component_mul(w).sum())
                .sum(),
        ),
        _ => None,
    };

    let diagnostics = SolverDiagnostics {
        backend: "clarabel".into(),
        solver_status: format!("{:?}", sol.status),
        iterations: sol.iterations,
        solve_time_s: sol.solve_time,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        primal_objective: sol.obj_val,
        dual_objective: sol.obj_val_dual,
        scalar_variables: prog.n,
        conic_rows: m,
        homogeneous: work.is_homogeneous(),
        logdet_path: work.logdet_path.clone(),
        failed_checks: if status == SolveStatus::Infeasible { Vec::new() } else { failed },
    };
    Ok(SdpSolution {
        status,
        names: work.vars.iter().map(|v| v.name.clone()).collect(),
        values,
        objective_value,
        diagnostics,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{AffineMatrixExpr, Structure};
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_sandwich_is_feasible() {
        let mut p = SdpProblem::new(1e-7);
        let x = p.add_var("x", 1, 1, Structure::Symmetric).unwrap();
        p.add_lmi("x>=1", AffineMatrixExpr::var(x) - AffineMatrixExpr::constant(scalar(1.0)), Sense::Psd, false)
            .unwrap();
        p.add_lmi("x<=2", AffineMatrixExpr::var(x) - AffineMatrixExpr::constant(scalar(2.0)), Sense::Nsd, false)
            .unwrap();
        let s = solve(&p).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        let v = s.value(x)[(0, 0)];
        assert!((1.0 - 1e-6..=2.0 + 1e-6).contains(&v), "{v}");
    }

    #[test]
    fn contradictory_pair_is_infeasible() {
        let mut p = SdpProblem::new(1e-7);
        let x = p.add_var("x", 1, 1, Structure::Symmetric).unwrap();
        p.add_lmi("x>=1", AffineMatrixExpr::var(x) - AffineMatrixExpr::constant(scalar(1.0)), Sense::Psd, false)
            .unwrap();
        p.add_lmi("x<=0", AffineMatrixExpr::var(x), Sense::Nsd, false).unwrap();
        assert_eq!(solve(&p).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn logdet_under_diagonal_cap() {
        let mut p = SdpProblem::new(1e-7);
        let h = p.add_var("H", 2, 2, Structure::Symmetric).unwrap();
        let cap = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0]));
        p.add_lmi("H<=cap", AffineMatrixExpr::var(h) - AffineMatrixExpr::constant(cap.clone()), Sense::Nsd, false)
            .unwrap();
        p.set_objective(Objective::MaximizeLogDet(h));
        let s = solve(&p).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        assert!((s.value(h) - cap).amax() < 1e-6);
        assert!((s.objective_value.unwrap() - 6f64.ln()).abs() < 1e-6);
        assert_eq!(s.diagnostics.logdet_path.as_deref(), Some(super::super::logdet::LOGDET_PATH));
    }

    #[test]
    fn logdet_scalar_and_identity_sandwich() {
        let mut p = SdpProblem::new(1e-7);
        let h = p.add_var("H", 1, 1, Structure::Symmetric).unwrap();
        p.add_lmi("H<=5", AffineMatrixExpr::var(h) - AffineMatrixExpr::constant(scalar(5.0)), Sense::Nsd, false)
            .unwrap();
        p.set_objective(Objective::MaximizeLogDet(h));
        let s = solve(&p).unwrap();
        assert!((s.value(h)[(0, 0)] - 5.0).abs() < 1e-6);

        let mut p = SdpProblem::new(1e-7);
        let h = p.add_var("H", 2, 2, Structure::Symmetric).unwrap();
        let eye = Matrix::identity(2, 2);
        p.add_lmi("H>=I", AffineMatrixExpr::var(h) - AffineMatrixExpr::constant(eye.clone()), Sense::Psd, false)
            .unwrap();
        p.add_lmi("H<=I", AffineMatrixExpr::var(h) - AffineMatrixExpr::constant(eye), Sense::Nsd, false)
            .unwrap();
        p.set_objective(Objective::MaximizeLogDet(h));
        let s = solve(&p).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        assert!(s.objective_value.unwrap().abs() < 1e-6);
    }

    #[test]
    fn logdet_under_coupled_cap() {
        // det is monotone under the PSD order, so the cap itself is optimal.
        let mut p = SdpProblem::new(1e-7);
        let h = p.add_var("H", 2, 2, Structure::Symmetric).unwrap();
        let cap = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        p.add_lmi("H<=cap", AffineMatrixExpr::var(h) - AffineMatrixExpr::constant(cap.clone()), Sense::Nsd, false)
            .unwrap();
        p.set_objective(Objective::MaximizeLogDet(h));
        let s = solve(&p).unwrap();
        assert!((s.value(h) - &cap).amax() < 1e-5);
        assert!((s.value(h).determinant() - 3.0).abs() < 1e-5);
    }

    #[test]
    fn linear_objective_and_off_diagonal_coupling() {
        // max x s.t. [[1, x], [x, 1]] >= 0 -> x = 1
        let mut p = SdpProblem::new(1e-7);
        let x = p.add_var("x", 1, 1, Structure::Full).unwrap();
        let e = AffineMatrixExpr::sym_blocks(&[
            vec![AffineMatrixExpr::constant(scalar(1.0))],
            vec![AffineMatrixExpr::var(x), AffineMatrixExpr::constant(scalar(1.0))],
        ]);
        p.add_lmi("corr", e, Sense::Psd, false).unwrap();
        p.set_objective(Objective::Linear(vec![(x, scalar(-1.0))]));
        let s = solve(&p).unwrap();
        assert!((s.value(x)[(0, 0)] - 1.0).abs() < 1e-6);
        assert!((s.objective_value.unwrap() + 1.0).abs() < 1e-6);
    }

    #[test]
    fn dump_lists_cones_and_triplets() {
        let mut p = SdpProblem::new(1e-7);
        let x = p.add_var("x", 1, 1, Structure::Symmetric).unwrap();
        p.add_lmi("x<=2", AffineMatrixExpr::var(x) - AffineMatrixExpr::constant(scalar(2.0)), Sense::Nsd, false)
            .unwrap();
        let d = p.dump_conic().unwrap();
        assert!(d.contains("vars 1"));
        assert!(d.contains("cone 0 1 psd1 x<=2"));
        assert!(d.contains("A 0 0 1.0000000000000000e0"));
        assert!(d.contains("b 0 2.0000000000000000e0"));
    }
}
