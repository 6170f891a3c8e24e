use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use super::{Matrix, MatrixVar, Structure, Var};

/// `left * X * right`, or `left * X^T * right` when `transpose` is set.
#[derive(Debug, Clone)]
pub struct Term {
    pub left: Matrix,
    pub var: Var,
    pub right: Matrix,
    pub transpose: bool,
}

impl Term {
    fn inner_dims(&self) -> (usize, usize) {
        if self.transpose {
            (self.var.cols, self.var.rows)
        } else {
            (self.var.rows, self.var.cols)
        }
    }
}

/// A matrix that depends affinely on the decision variables.
#[derive(Debug, Clone)]
pub struct AffineMatrixExpr {
    pub rows: usize,
    pub cols: usize,
    pub constant: Matrix,
    pub terms: Vec<Term>,
}

impl AffineMatrixExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            constant: Matrix::zeros(rows, cols),
            terms: Vec::new(),
        }
    }

    pub fn constant(c: Matrix) -> Self {
        Self {
            rows: c.nrows(),
            cols: c.ncols(),
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(v: Var) -> Self {
        Self {
            rows: v.rows,
            cols: v.cols,
            constant: Matrix::zeros(v.rows, v.cols),
            terms: vec![Term {
                left: Matrix::identity(v.rows, v.rows),
                var: v,
                right: Matrix::identity(v.cols, v.cols),
                transpose: false,
            }],
        }
    }

    /// `left * X * right`.
    pub fn product(left: &Matrix, v: Var, right: &Matrix) -> Self {
        Self {
            rows: left.nrows(),
            cols: right.ncols(),
            constant: Matrix::zeros(left.nrows(), right.ncols()),
            terms: vec![Term {
                left: left.clone(),
                var: v,
                right: right.clone(),
                transpose: false,
            }],
        }
    }

    /// `m * self`.
    pub fn lmul(&self, m: &Matrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: self.cols,
            constant: m * &self.constant,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    left: m * &t.left,
                    ..t.clone()
                })
                .collect(),
        }
    }

    /// `self * m`.
    pub fn rmul(&self, m: &Matrix) -> Self {
        Self {
            rows: self.rows,
            cols: m.ncols(),
            constant: &self.constant * m,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    right: &t.right * m,
                    ..t.clone()
                })
                .collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    left: t.right.transpose(),
                    var: t.var,
                    right: t.left.transpose(),
                    transpose: !t.transpose,
                })
                .collect(),
        }
    }

    /// `self + self^T`.
    pub fn he(&self) -> Self {
        self.clone() + self.transpose()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant * s,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    left: &t.left * s,
                    ..t.clone()
                })
                .collect(),
        }
    }

    /// Places `self` at offset `(r0, c0)` inside a `rows x cols` zero matrix.
    pub fn embed(&self, rows: usize, cols: usize, r0: usize, c0: usize) -> Self {
        let mut sel_l = Matrix::zeros(rows, self.rows);
        for i in 0..self.rows {
            sel_l[(r0 + i, i)] = 1.0;
        }
        let mut sel_r = Matrix::zeros(self.cols, cols);
        for j in 0..self.cols {
            sel_r[(j, c0 + j)] = 1.0;
        }
        self.lmul(&sel_l).rmul(&sel_r)
    }

    /// Symmetric block matrix from its lower triangle: `lower[i][j]` for
    /// `j <= i`; diagonal blocks must be symmetric, upper blocks are the
    /// transposes of the lower ones.
    pub fn sym_blocks(lower: &[Vec<AffineMatrixExpr>]) -> Self {
        let sizes: Vec<usize> = lower.iter().map(|row| row[row.len() - 1].rows).collect();
        let total: usize = sizes.iter().sum();
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let mut out = Self::zeros(total, total);
        for (i, row) in lower.iter().enumerate() {
            for (j, blk) in row.iter().enumerate() {
                assert_eq!(blk.rows, sizes[i], "block ({i},{j}) has the wrong row count");
                assert_eq!(blk.cols, sizes[j], "block ({i},{j}) has the wrong column count");
                out += blk.embed(total, total, offsets[i], offsets[j]);
                if i != j {
                    out += blk.transpose().embed(total, total, offsets[j], offsets[i]);
                }
            }
        }
        out
    }

    pub fn eval(&self, values: &[Matrix]) -> Matrix {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let x = &values[t.var.id];
            if t.transpose {
                out += &t.left * x.transpose() * &t.right;
            } else {
                out += &t.left * x * &t.right;
            }
        }
        out
    }

    pub(crate) fn check_dims(&self, vars: &[MatrixVar]) -> Result<(), String> {
        if self.constant.shape() != (self.rows, self.cols) {
            return Err(format!(
                "constant is {}x{}, expression is {}x{}",
                self.constant.nrows(),
                self.constant.ncols(),
                self.rows,
                self.cols
            ));
        }
        for t in &self.terms {
            let decl = vars.get(t.var.id).ok_or_else(|| format!("unknown variable id {}", t.var.id))?;
            if (decl.rows, decl.cols) != (t.var.rows, t.var.cols) {
                return Err(format!("stale handle for variable `{}`", decl.name));
            }
            let (ir, ic) = t.inner_dims();
            if t.left.nrows() != self.rows || t.right.ncols() != self.cols || t.left.ncols() != ir || t.right.nrows() != ic {
                return Err(format!(
                    "term on `{}` is {}x{} * {}x{} * {}x{}, expression is {}x{}",
                    decl.name,
                    t.left.nrows(),
                    t.left.ncols(),
                    ir,
                    ic,
                    t.right.nrows(),
                    t.right.ncols(),
                    self.rows,
                    self.cols
                ));
            }
        }
        Ok(())
    }

    /// Coefficient matrix of scalar `k` of variable `var`.
    pub(crate) fn coefficient(&self, var: &MatrixVar, var_id: usize, k: usize) -> Matrix {
        let (i, j) = var.scalar_positions()[k];
        let mut out = Matrix::zeros(self.rows, self.cols);
        for t in self.terms.iter().filter(|t| t.var.id == var_id) {
            // basis E_ij (plus E_ji for symmetric variables); transposition swaps the pair
            let (a, b) = if t.transpose { (j, i) } else { (i, j) };
            out += t.left.column(a) * t.right.row(b);
            if var.structure == Structure::Symmetric && i != j {
                out += t.left.column(b) * t.right.row(a);
            }
        }
        out
    }

    pub(crate) fn asymmetry(&self, vars: &[MatrixVar]) -> f64 {
        let mut worst = (&self.constant - self.constant.transpose()).amax();
        let mut seen = Vec::new();
        for t in &self.terms {
            if seen.contains(&t.var.id) {
                continue;
            }
            seen.push(t.var.id);
            let decl = &vars[t.var.id];
            for k in 0..decl.scalar_count() {
                let g = self.coefficient(decl, t.var.id, k);
                worst = worst.max((&g - g.transpose()).amax());
            }
        }
        worst
    }
}

impl AddAssign for AffineMatrixExpr {
    fn add_assign(&mut self, rhs: Self) {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "adding expressions of different shapes"
        );
        self.constant += rhs.constant;
        self.terms.extend(rhs.terms);
    }
}

impl Add for AffineMatrixExpr {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl Neg for AffineMatrixExpr {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Sub for AffineMatrixExpr {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul<f64> for AffineMatrixExpr {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}
