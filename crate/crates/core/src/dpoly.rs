//! Vertices of the set of admissible membership derivatives: the box of
//! per-rule bounds intersected with the zero-sum hyperplane.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolytopeError {
    #[error("the derivative polytope needs at least one rule")]
    Empty,
    #[error("bound vectors have lengths {0} and {1}")]
    Length(usize, usize),
    #[error("lower bound {lower} exceeds upper bound {upper} for rule {rule}")]
    Inverted { rule: usize, lower: f64, upper: f64 },
    #[error("the zero-sum hyperplane misses the bound box (sum of lower bounds {sum_lower}, sum of upper bounds {sum_upper})")]
    NoIntersection { sum_lower: f64, sum_upper: f64 },
}

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativePolytope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub vertices: Vec<Vec<f64>>,
}

impl DerivativePolytope {
    pub fn r(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Vertex matrix with one vertex per column.
    pub fn vertex_matrix(&self) -> DMatrix<f64> {
        let r = self.r();
        DMatrix::from_fn(r, self.vertices.len(), |k, l| self.vertices[l][k])
    }

    pub fn contains(&self, d: &[f64]) -> bool {
        d.len() == self.r()
            && d.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            && d.iter().sum::<f64>().abs() <= SUM_TOL
    }

    /// H matrix as CSV text, one vertex per column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 0..self.r() {
            let row: Vec<String> = self.vertices.iter().map(|v| crate::io::fmt_f64(v[k])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Enumerates the vertices: every coordinate `j` is solved from the zero-sum
/// constraint for each assignment of the remaining coordinates to their
/// bounds, and kept when it falls inside its own bounds.
pub fn enumerate_vertices(lower: &[f64], upper: &[f64]) -> Result<DerivativePolytope, PolytopeError> {
    let r = lower.len();
    if r == 0 {
        return Err(PolytopeError::Empty);
    }
    if upper.len() != r {
        return Err(PolytopeError::Length(r, upper.len()));
    }
    for k in 0..r {
        if lower[k] > upper[k] {
            return Err(PolytopeError::Inverted {
                rule: k + 1,
                lower: lower[k],
                upper: upper[k],
            });
        }
    }
    let sum_lower: f64 = lower.iter().sum();
    let sum_upper: f64 = upper.iter().sum();
    if sum_lower > 0.0 || sum_upper < 0.0 {
        return Err(PolytopeError::NoIntersection { sum_lower, sum_upper });
    }
    if r >= 7 {
        log::warn!(
            "exact derivative polytope for {r} rules: up to {} candidate vertices, \
             LMI count grows accordingly",
            r * (1usize << (r - 1))
        );
    }

    let scale = lower.iter().chain(upper).fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for j in 0..r {
        let others: Vec<usize> = (0..r).filter(|&k| k != j).collect();
        for mask in 0u64..(1u64 << others.len()) {
            let mut v = vec![0.0; r];
            let mut fixed = 0.0;
            for (bit, &k) in others.iter().enumerate() {
                v[k] = if mask >> bit & 1 == 1 { upper[k] } else { lower[k] };
                fixed += v[k];
            }
            v[j] = -fixed;
            if v[j] < lower[j] || v[j] > upper[j] {
                continue;
            }
            if !is_extreme(&v, lower, upper, tol) {
                continue;
            }
            let dup = vertices
                .iter()
                .any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() <= tol));
            if !dup {
                vertices.push(v);
            }
        }
    }
    Ok(DerivativePolytope {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        vertices,
    })
}

/// A point of the polytope is a vertex iff its active bound normals together
/// with the all-ones normal span the whole space.
fn is_extreme(v: &[f64], lower: &[f64], upper: &[f64], tol: f64) -> bool {
    let r = v.len();
    let active: Vec<usize> = (0..r)
        .filter(|&k| (v[k] - lower[k]).abs() <= tol || (v[k] - upper[k]).abs() <= tol)
        .collect();
    let mut rows = DMatrix::<f64>::zeros(active.len() + 1, r);
    for (i, &k) in active.iter().enumerate() {
        rows[(i, k)] = 1.0;
    }
    rows.row_mut(active.len()).fill(1.0);
    rows.rank(1e-9) == r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn as_set(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn two_rules_unit_bounds() {
        let p = enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p.vertices, vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn three_rules_unit_bounds() {
        let p = enumerate_vertices(&[-1.0; 3], &[1.0; 3]).unwrap();
        let expected = vec![
            vec![1.0, -1.0, 0.0],
            vec![-1.0, 1.0, 0.0],
            vec![1.0, 0.0, -1.0],
            vec![-1.0, 0.0, 1.0],
            vec![0.0, 1.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ];
        assert_eq!(as_set(p.vertices), as_set(expected));
    }

    #[test]
    fn single_rule_is_pinned_to_zero() {
        let p = enumerate_vertices(&[-1.0], &[1.0]).unwrap();
        assert_eq!(p.vertices, vec![vec![0.0]]);
    }

    #[test]
    fn error_paths() {
        assert_eq!(enumerate_vertices(&[], &[]), Err(PolytopeError::Empty));
        assert!(matches!(
            enumerate_vertices(&[0.5, 0.5], &[1.0, 1.0]),
            Err(PolytopeError::NoIntersection { .. })
        ));
        assert!(matches!(
            enumerate_vertices(&[1.0, -1.0], &[0.0, 1.0]),
            Err(PolytopeError::Inverted { rule: 1, .. })
        ));
        assert!(matches!(enumerate_vertices(&[-1.0], &[1.0, 1.0]), Err(PolytopeError::Length(1, 2))));
    }

    #[test]
    fn contains_examples() {
        let p = enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert!(p.contains(&[0.3, -0.3]));
        assert!(!p.contains(&[1.1, -1.1]));
        assert!(!p.contains(&[0.5, -0.4]));
        assert!(!p.contains(&[0.5]));
    }

    #[test]
    fn zero_sum_holds_in_construction_order() {
        let lower = [-0.3, -1.7, -0.9, -2.1];
        let upper = [0.7, 1.1, 0.4, 0.2];
        let p = enumerate_vertices(&lower, &upper).unwrap();
        for v in &p.vertices {
            assert!(v.iter().sum::<f64>().abs() <= 1e-15);
        }
    }

    #[test]
    fn hyperplane_through_box_corner() {
        // sum of lower bounds is exactly zero: the lower corner is the only point
        let p = enumerate_vertices(&[-1.0, 1.0], &[2.0, 3.0]).unwrap();
        assert_eq!(p.vertices, vec![vec![-1.0, 1.0]]);
    }

    #[test]
    fn csv_lists_vertices_by_column() {
        let p = enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("1.0000000000000000e0,-1.0000000000000000e0"));
        assert_eq!(p.vertex_matrix().shape(), (2, 2));
    }
}
