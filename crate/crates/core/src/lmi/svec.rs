//! Symmetric-matrix vectorization: upper triangle, column-major, with the
//! off-diagonal entries scaled by sqrt(2) so that `<A, B> = svec(A) . svec(B)`.

use std::f64::consts::SQRT_2;

use super::Matrix;

pub fn svec_len(k: usize) -> usize {
    k * (k + 1) / 2
}

pub fn svec(m: &Matrix) -> Vec<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(svec_len(k));
    for j in 0..k {
        for i in 0..=j {
            if i == j {
                out.push(m[(i, j)]);
            } else {
                out.push(SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    out
}

pub fn smat(v: &[f64], k: usize) -> Matrix {
    assert_eq!(v.len(), svec_len(k), "svec length does not match dimension {k}");
    let mut m = Matrix::zeros(k, k);
    let mut idx = 0;
    for j in 0..k {
        for i in 0..=j {
            if i == j {
                m[(i, j)] = v[idx];
            } else {
                m[(i, j)] = v[idx] / SQRT_2;
                m[(j, i)] = v[idx] / SQRT_2;
            }
            idx += 1;
        }
    }
    m
}
