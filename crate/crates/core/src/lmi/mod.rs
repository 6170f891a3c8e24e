//! A small modeling layer for linear matrix inequalities over matrix
//! decision variables, lowered to a standard-form conic program.
//!
//! Expressions are kept as sums of `L * X * R` (or `L * X^T * R`) terms plus
//! a constant, which makes block assembly and congruences cheap to write and
//! the lowering a direct per-scalar evaluation.

mod expr;
mod logdet;
mod solve;
pub mod svec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{AffineMatrixExpr, Term};
pub use logdet::{compile_logdet, LogDetRealization};
pub use solve::{
    solve, solve_with, ConstraintCheck, SdpSolution, SolveStatus, SolverDiagnostics, SolverSettings,
};

pub type Matrix = DMatrix<f64>;

/// Largest eigenvalue tolerated for a non-strict NSD constraint (and the
/// mirror bound for PSD) in the dense re-verification.
pub const VERIFY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmiError {
    #[error("dimension mismatch in constraint `{name}`: {detail}")]
    Dimension { name: String, detail: String },
    #[error("constraint `{name}` is not symmetric (asymmetry {asym:.3e})")]
    NotSymmetric { name: String, asym: f64 },
    #[error("variable `{0}` is already declared")]
    DuplicateName(String),
    #[error("unknown variable id {0}")]
    UnknownVar(usize),
    #[error("symmetric variable `{0}` must be square")]
    NonSquareSymmetric(String),
    #[error("log-det objective needs a symmetric square variable, `{0}` is not")]
    UnsupportedCone(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Full,
    Symmetric,
    /// Entries above the diagonal are fixed at zero.
    LowerTriangular,
}

/// Handle to a declared matrix variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    pub id: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: Structure,
}

impl MatrixVar {
    /// Number of free scalars.
    pub fn scalar_count(&self) -> usize {
        match self.structure {
            Structure::Full => self.rows * self.cols,
            Structure::Symmetric | Structure::LowerTriangular => self.rows * (self.rows + 1) / 2,
        }
    }

    /// Matrix positions `(i, j)` of each free scalar. Symmetric variables
    /// list the upper triangle; the mirrored entry shares the scalar.
    pub fn scalar_positions(&self) -> Vec<(usize, usize)> {
        match self.structure {
            Structure::Full => (0..self.cols)
                .flat_map(|j| (0..self.rows).map(move |i| (i, j)))
                .collect(),
            Structure::Symmetric => (0..self.rows)
                .flat_map(|j| (0..=j).map(move |i| (i, j)))
                .collect(),
            Structure::LowerTriangular => (0..self.rows)
                .flat_map(|j| (j..self.rows).map(move |i| (i, j)))
                .collect(),
        }
    }

    /// Matrix obtained by setting scalar `k` to one and the rest to zero.
    pub fn basis(&self, k: usize) -> Matrix {
        let (i, j) = self.scalar_positions()[k];
        let mut m = Matrix::zeros(self.rows, self.cols);
        m[(i, j)] = 1.0;
        if self.structure == Structure::Symmetric {
            m[(j, i)] = 1.0;
        }
        m
    }

    pub fn from_scalars(&self, xs: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for ((i, j), v) in self.scalar_positions().into_iter().zip(xs) {
            m[(i, j)] = *v;
            if self.structure == Structure::Symmetric {
                m[(j, i)] = *v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// expression is positive semidefinite
    Psd,
    /// expression is negative semidefinite
    Nsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub name: String,
    pub expr: AffineMatrixExpr,
    pub sense: Sense,
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub enum Objective {
    Feasibility,
    /// Minimize `sum_k <W_k, X_k>`.
    Linear(Vec<(Var, Matrix)>),
    /// Maximize `log det X`.
    MaximizeLogDet(Var),
}

/// `t <= log(arg)` for scalar entries of two variables, realized as an
/// exponential cone.
#[derive(Debug, Clone, Copy)]
pub struct LogEpigraph {
    pub t: (Var, usize, usize),
    pub arg: (Var, usize, usize),
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub vars: Vec<MatrixVar>,
    pub constraints: Vec<LmiConstraint>,
    pub objective: Objective,
    /// Strictness margin base.
    pub epsilon: f64,
    pub(crate) log_epigraphs: Vec<LogEpigraph>,
    pub(crate) logdet_path: Option<String>,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new(1e-7)
    }
}

impl SdpProblem {
    pub fn new(epsilon: f64) -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: Objective::Feasibility,
            epsilon,
            log_epigraphs: Vec::new(),
            logdet_path: None,
        }
    }

    pub fn add_var(&mut self, name: &str, rows: usize, cols: usize, structure: Structure) -> Result<Var, LmiError> {
        if self.vars.iter().any(|v| v.name == name) {
            return Err(LmiError::DuplicateName(name.to_string()));
        }
        if structure != Structure::Full && rows != cols {
            return Err(LmiError::NonSquareSymmetric(name.to_string()));
        }
        let id = self.vars.len();
        self.vars.push(MatrixVar {
            name: name.to_string(),
            rows,
            cols,
            structure,
        });
        Ok(Var { id, rows, cols })
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.vars.iter().position(|v| v.name == name).map(|id| Var {
            id,
            rows: self.vars[id].rows,
            cols: self.vars[id].cols,
        })
    }

    /// Registers `expr (sense) 0`. Strict constraints are tightened by the
    /// margin returned by [`SdpProblem::margin`] when lowered.
    pub fn add_lmi(
        &mut self,
        name: impl Into<String>,
        expr: AffineMatrixExpr,
        sense: Sense,
        strict: bool,
    ) -> Result<ConstraintId, LmiError> {
        let name = name.into();
        expr.check_dims(&self.vars).map_err(|detail| LmiError::Dimension {
            name: name.clone(),
            detail,
        })?;
        if expr.rows != expr.cols {
            return Err(LmiError::Dimension {
                name,
                detail: format!("constraint must be square, got {}x{}", expr.rows, expr.cols),
            });
        }
        let asym = expr.asymmetry(&self.vars);
        if asym > 1e-9 * (1.0 + expr.constant.norm()) {
            return Err(LmiError::NotSymmetric { name, asym });
        }
        self.constraints.push(LmiConstraint {
            name,
            expr,
            sense,
            strict,
        });
        Ok(ConstraintId(self.constraints.len() - 1))
    }

    pub fn set_objective(&mut self, objective: Objective) {
        self.objective = objective;
    }

    pub fn scalar_count(&self) -> usize {
        self.vars.iter().map(MatrixVar::scalar_count).sum()
    }

    /// True when no constraint has a constant term, so the feasible set is a
    /// cone and strictness margins are scale-free.
    pub fn is_homogeneous(&self) -> bool {
        self.constraints.iter().all(|c| c.expr.constant.iter().all(|v| *v == 0.0))
    }

    /// Margin applied to a strict constraint: `epsilon * max(1, |C|_F)`, or
    /// one for homogeneous problems (any positive margin is equivalent there
    /// up to scaling of the solution).
    pub fn margin(&self, c: &LmiConstraint) -> f64 {
        if !c.strict {
            0.0
        } else if self.is_homogeneous() && self.log_epigraphs.is_empty() {
            1.0
        } else {
            self.epsilon * c.expr.constant.norm().max(1.0)
        }
    }

    /// Dense value of every constraint expression at `values`.
    pub fn evaluate(&self, values: &[Matrix]) -> Vec<Matrix> {
        self.constraints.iter().map(|c| c.expr.eval(values)).collect()
    }

    /// Dense check of every constraint at `values`, independent of any
    /// solver output.
    pub fn check(&self, values: &[Matrix]) -> Vec<ConstraintCheck> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let m = c.expr.eval(values);
                let sym = (&m + m.transpose()) * 0.5;
                let eig = sym.symmetric_eigenvalues();
                let margin = self.margin(c);
                let (extreme, ok) = match c.sense {
                    Sense::Nsd => {
                        let e = eig.max();
                        let bound = if c.strict { -margin / 2.0 } else { VERIFY_TOL };
                        (e, e <= bound)
                    }
                    Sense::Psd => {
                        let e = eig.min();
                        let bound = if c.strict { margin / 2.0 } else { -VERIFY_TOL };
                        (e, e >= bound)
                    }
                };
                ConstraintCheck {
                    id: ConstraintId(k),
                    name: c.name.clone(),
                    sense: c.sense,
                    strict: c.strict,
                    margin,
                    extreme_eigenvalue: extreme,
                    ok,
                }
            })
            .collect()
    }

    /// Plain-text dump of the lowered conic program (sparse triplets).
    pub fn dump_conic(&self) -> Result<String, LmiError> {
        solve::lower(self).map(|c| c.dump())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn strict_scalar_constraint_gets_margin() {
        let mut p = SdpProblem::new(1e-7);
        let t = p.add_var("t", 1, 1, Structure::Symmetric).unwrap();
        p.add_lmi("t>0", AffineMatrixExpr::var(t), Sense::Psd, true).unwrap();
        p.add_lmi("t<=1", AffineMatrixExpr::var(t) - AffineMatrixExpr::constant(scalar(1.0)), Sense::Nsd, false)
            .unwrap();
        assert!(!p.is_homogeneous());
        assert_eq!(p.margin(&p.constraints[0]), 1e-7);
        let dump = p.dump_conic().unwrap();
        // the strict PSD row is t - 1e-7 >= 0
        let b0: f64 = dump
            .lines()
            .find_map(|l| l.strip_prefix("b 0 "))
            .expect("row 0 has a constant")
            .parse()
            .unwrap();
        assert_eq!(b0, -1e-7, "{dump}");
    }

    #[test]
    fn constant_nsd_constraint_is_trivially_satisfied() {
        let mut p = SdpProblem::new(1e-7);
        let c = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -2.0]);
        p.add_lmi("const", AffineMatrixExpr::constant(c), Sense::Nsd, false).unwrap();
        assert!(p.check(&[]).iter().all(|c| c.ok));
    }

    #[test]
    fn mismatched_term_is_rejected() {
        let mut p = SdpProblem::new(1e-7);
        let x = p.add_var("X", 3, 3, Structure::Symmetric).unwrap();
        let mut e = AffineMatrixExpr::zeros(2, 2);
        e.terms.push(Term {
            left: Matrix::identity(3, 3),
            var: x,
            right: Matrix::identity(3, 3),
            transpose: false,
        });
        assert!(matches!(p.add_lmi("bad", e, Sense::Nsd, false), Err(LmiError::Dimension { .. })));
    }

    #[test]
    fn asymmetric_constraint_is_rejected() {
        let mut p = SdpProblem::new(1e-7);
        let x = p.add_var("X", 2, 2, Structure::Full).unwrap();
        assert!(matches!(
            p.add_lmi("asym", AffineMatrixExpr::var(x), Sense::Nsd, false),
            Err(LmiError::NotSymmetric { .. })
        ));
        // the symmetrized part is fine
        p.add_lmi("sym", AffineMatrixExpr::var(x).he(), Sense::Nsd, false).unwrap();
    }

    #[test]
    fn duplicate_names_and_bad_structure() {
        let mut p = SdpProblem::new(1e-7);
        p.add_var("X", 2, 2, Structure::Full).unwrap();
        assert_eq!(p.add_var("X", 1, 1, Structure::Full), Err(LmiError::DuplicateName("X".into())));
        assert!(matches!(p.add_var("Y", 2, 3, Structure::Symmetric), Err(LmiError::NonSquareSymmetric(_))));
    }

    #[test]
    fn variable_parametrizations() {
        let sym = MatrixVar {
            name: "S".into(),
            rows: 3,
            cols: 3,
            structure: Structure::Symmetric,
        };
        assert_eq!(sym.scalar_count(), 6);
        let m = sym.from_scalars(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m, m.transpose());
        assert_eq!(m[(0, 1)], 2.0);
        let low = MatrixVar {
            name: "Z".into(),
            rows: 2,
            cols: 2,
            structure: Structure::LowerTriangular,
        };
        let z = low.from_scalars(&[1.0, 2.0, 3.0]);
        assert_eq!(z, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 3.0]));
        let full = MatrixVar {
            name: "F".into(),
            rows: 1,
            cols: 2,
            structure: Structure::Full,
        };
        assert_eq!(full.basis(1), Matrix::from_row_slice(1, 2, &[0.0, 1.0]));
    }
}
