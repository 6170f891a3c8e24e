//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::DVector;
use tspdc::certificate::{load_published, LocalCertificate};
use tspdc::model::{parse_model, ModelSpec, TsModel};

/// Example model files; resolved from the workspace so that the core and
/// acceptance crates share them.
pub fn model_path(name: &str) -> String {
    format!("{}/../core/models/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn read_model_text(name: &str) -> String {
    std::fs::read_to_string(model_path(name)).expect("model file")
}

pub fn load_model(name: &str) -> ModelSpec {
    parse_model(&read_model_text(name)).expect("valid model")
}

pub fn published() -> (ModelSpec, LocalCertificate) {
    let spec = load_model("ex2_local.json");
    let (cert, _) = load_published(&read_model_text("ex2_published.json")).expect("published certificate");
    (spec, cert)
}

/// Vertices of `{d : lower <= d <= upper, sum d = 0}` found by intersecting
/// every edge of the box (pairs of box corners differing in one coordinate)
/// with the hyperplane; duplicates within `tol` are merged.
pub fn edge_intersection_vertices(lower: &[f64], upper: &[f64], tol: f64) -> Vec<Vec<f64>> {
    let r = lower.len();
    let corner = |bits: usize| -> Vec<f64> {
        (0..r).map(|k| if bits >> k & 1 == 1 { upper[k] } else { lower[k] }).collect()
    };
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut push = |p: Vec<f64>| {
        if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol)) {
            out.push(p);
        }
    };
    for bits in 0..1usize << r {
        for k in 0..r {
            if bits >> k & 1 == 1 {
                continue;
            }
            let (c0, c1) = (corner(bits), corner(bits | 1 << k));
            let (s0, s1): (f64, f64) = (c0.iter().sum(), c1.iter().sum());
            if s0 == 0.0 && s1 == 0.0 {
                push(c0);
                push(c1);
            } else if s0 * s1 <= 0.0 {
                let t = s0 / (s0 - s1);
                push(c0.iter().zip(&c1).map(|(a, b)| a + t * (b - a)).collect());
            }
        }
    }
    out
}

/// Same set up to `tol`, in any order.
pub fn same_point_set(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    let within = |p: &Vec<f64>, set: &[Vec<f64>]| set.iter().any(|q| q.iter().zip(p).all(|(x, y)| (x - y).abs() <= tol));
    a.len() == b.len() && a.iter().all(|p| within(p, b)) && b.iter().all(|p| within(p, a))
}

/// Membership derivatives by damped fixed-point iteration
/// `d <- (1 - beta) d + beta grad h (A(h) + B(h)(K(h) + L(d))) x`.
pub fn fixed_point_hdot(model: &TsModel, cert: &tspdc::certificate::GlobalCertificate, x: &[f64]) -> Option<DVector<f64>> {
    let ev = model.eval_membership(x).ok()?;
    let h: Vec<f64> = ev.h.iter().copied().collect();
    let (a, b) = model.blend(&h);
    let xv = DVector::from_column_slice(x);
    let r = model.rules();
    let mut d = DVector::zeros(r);
    let beta = 0.5;
    for _ in 0..100_000 {
        let dv: Vec<f64> = d.iter().copied().collect();
        let xdot = (&a + &b * (cert.k_blend(&h) + cert.l_blend(&dv))) * &xv;
        let next = &d * (1.0 - beta) + (&ev.grad * xdot) * beta;
        let change = (&next - &d).amax();
        d = next;
        if change <= 1e-15 * (1.0 + d.amax()) {
            return Some(d);
        }
    }
    None
}

pub fn max_sym_eig(m: &nalgebra::DMatrix<f64>) -> f64 {
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().max()
}
