use super::{AffineMatrixExpr, LmiError, LogEpigraph, Matrix, Objective, SdpProblem, Sense, Structure, Var};

/// How a log-det objective was realized.
#[derive(Debug, Clone)]
pub struct LogDetRealization {
    pub target: Var,
    /// Lower-triangular factor bounding the determinant.
    pub factor: Var,
    /// Epigraph variables `t_i <= log Z_ii`.
    pub logs: Var,
    pub path: String,
}

pub const LOGDET_PATH: &str = "triangular factor [[H, Z], [Z^T, diag(Z)]] >= 0 with exponential-cone log epigraphs";

/// Replaces `maximize log det H` by `maximize sum_i t_i` subject to
/// `[[H, Z], [Z^T, diag(Z)]] >= 0`, `Z` lower triangular and
/// `t_i <= log Z_ii`. At the optimum `sum_i t_i = log det H`, and the
/// realized objective is monotone in `det H`.
pub fn compile_logdet(problem: &mut SdpProblem, target: Var) -> Result<LogDetRealization, LmiError> {
    let decl = problem
        .vars
        .get(target.id)
        .ok_or(LmiError::UnknownVar(target.id))?
        .clone();
    if decl.structure != Structure::Symmetric {
        return Err(LmiError::UnsupportedCone(decl.name));
    }
    let k = decl.rows;
    let factor = problem.add_var(&format!("__logdet_factor_{}", decl.name), k, k, Structure::LowerTriangular)?;
    let logs = problem.add_var(&format!("__logdet_log_{}", decl.name), k, 1, Structure::Full)?;

    let mut diag = AffineMatrixExpr::zeros(k, k);
    for i in 0..k {
        let mut sel = Matrix::zeros(k, k);
        sel[(i, i)] = 1.0;
        diag += AffineMatrixExpr::product(&sel, factor, &sel);
    }
    let block = AffineMatrixExpr::sym_blocks(&[
        vec![AffineMatrixExpr::var(target)],
        vec![AffineMatrixExpr::var(factor).transpose(), diag],
    ]);
    problem.add_lmi(format!("logdet factor bound on {}", decl.name), block, Sense::Psd, false)?;
    for i in 0..k {
        problem.log_epigraphs.push(LogEpigraph {
            t: (logs, i, 0),
            arg: (factor, i, i),
        });
    }
    problem.objective = Objective::Linear(vec![(logs, Matrix::from_element(k, 1, -1.0))]);
    problem.logdet_path = Some(LOGDET_PATH.to_string());
    Ok(LogDetRealization {
        target,
        factor,
        logs,
        path: LOGDET_PATH.to_string(),
    })
}
