//! Marching squares: level curves of a function sampled on a rectilinear grid.

use std::collections::BTreeMap;

/// Grid-edge identifier: horizontal edges join `(i, j)`-`(i+1, j)`, vertical
/// ones `(i, j)`-`(i, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Polylines of `{value = level}` for `values` sampled at the nodes
/// `(xs[i], ys[j])`, stored with `i` fastest. Closed curves repeat their first
/// point at the end. Saddle cells are resolved with the cell-center average.
pub fn marching_squares(xs: &[f64], ys: &[f64], values: &[f64], level: f64) -> Vec<Vec<[f64; 2]>> {
    let (nx, ny) = (xs.len(), ys.len());
    assert_eq!(values.len(), nx * ny, "grid values do not match the axes");
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let val = |i: usize, j: usize| values[j * nx + i];
    let above = |i: usize, j: usize| val(i, j) > level;
    let point = |e: Edge| -> [f64; 2] {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (v0, v1) = (val(i0, j0), val(i1, j1));
        let t = if v1 != v0 { ((level - v0) / (v1 - v0)).clamp(0.0, 1.0) } else { 0.5 };
        [xs[i0] + t * (xs[i1] - xs[i0]), ys[j0] + t * (ys[j1] - ys[j0])]
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let case = above(i, j) as u8
                | (above(i + 1, j) as u8) << 1
                | (above(i + 1, j + 1) as u8) << 2
                | (above(i, j + 1) as u8) << 3;
            let e0 = Edge::H(i, j);
            let e1 = Edge::V(i + 1, j);
            let e2 = Edge::H(i, j + 1);
            let e3 = Edge::V(i, j);
            let center_above = || (val(i, j) + val(i + 1, j) + val(i + 1, j + 1) + val(i, j + 1)) / 4.0 > level;
            match case {
                0 | 15 => {}
                1 | 14 => segments.push((e3, e0)),
                2 | 13 => segments.push((e0, e1)),
                3 | 12 => segments.push((e3, e1)),
                4 | 11 => segments.push((e1, e2)),
                6 | 9 => segments.push((e0, e2)),
                7 | 8 => segments.push((e3, e2)),
                5 => {
                    if center_above() {
                        segments.extend([(e0, e1), (e2, e3)]);
                    } else {
                        segments.extend([(e3, e0), (e1, e2)]);
                    }
                }
                10 => {
                    if center_above() {
                        segments.extend([(e3, e0), (e1, e2)]);
                    } else {
                        segments.extend([(e0, e1), (e2, e3)]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut by_edge: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(k);
        by_edge.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let next = |edge: Edge, used: &[bool]| by_edge[&edge].iter().copied().find(|&k| !used[k]);

    let mut lines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = vec![a, b];
        // forward
        while let Some(k) = next(*chain.last().unwrap(), &used) {
            used[k] = true;
            let (p, q) = segments[k];
            chain.push(if p == *chain.last().unwrap() { q } else { p });
        }
        // backward
        let mut head = Vec::new();
        let mut cur = a;
        while let Some(k) = next(cur, &used) {
            used[k] = true;
            let (p, q) = segments[k];
            cur = if p == cur { q } else { p };
            head.push(cur);
        }
        head.reverse();
        head.extend(chain);
        lines.push(head.into_iter().map(point).collect());
    }
    lines
}
