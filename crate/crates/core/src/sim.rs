//! Closed-loop simulation of `x' = [A(h) + B(h) K(h) + B(h) L(h')] x` with the
//! membership derivatives resolved implicitly, Lyapunov evaluation, bound
//! monitoring and domain-of-attraction gridding.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::GlobalCertificate;
use crate::lmi::Matrix;
use crate::model::{ModelError, Region, TsModel};
use crate::par::{map_indexed, Execution};

/// Largest admissible condition number of `I - W`.
pub const MAX_COUPLING_CONDITION: f64 = 1e10;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("membership-derivative coupling is ill-posed{}: cond(I - W) = {cond:.3e}", .t.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    IllPosed { t: Option<f64>, cond: f64 },
    #[error("resolved derivative fails the consistency check h' = grad h x' (residual {residual:.3e})")]
    Inconsistent { residual: f64 },
    #[error("{0}")]
    Dimension(String),
}

/// Everything resolved at one state.
#[derive(Debug, Clone)]
pub struct ResolvedState {
    pub h: DVector<f64>,
    pub grad: Matrix,
    pub hdot: DVector<f64>,
    pub xdot: DVector<f64>,
    pub u: DVector<f64>,
    /// `1 - grad h_v B(h) L_v x`, the diagonal of `I - W`.
    pub factors: Vec<f64>,
}

/// Solves `(I - W) h' = g` with `W_vw = grad h_v B(h) L_w x` and
/// `g_v = grad h_v [A(h) + B(h) K(h)] x`, then forms `x'` and `u`.
pub fn resolve_hdot(model: &TsModel, cert: &GlobalCertificate, x: &[f64]) -> Result<ResolvedState, SimError> {
    let (n, r) = (model.n, model.rules());
    if x.len() != n || cert.rules() != r {
        return Err(SimError::Dimension(format!(
            "state of length {} for n = {n}; certificate with {} rules for {r}",
            x.len(),
            cert.rules()
        )));
    }
    let ev = model.eval_membership(x)?;
    let h: Vec<f64> = ev.h.iter().copied().collect();
    let xv = DVector::from_column_slice(x);
    let (a, b) = model.blend(&h);
    let k = cert.k_blend(&h);
    let f0 = (&a + &b * &k) * &xv;
    let g = &ev.grad * &f0;
    // columns c_w = B(h) L_w x
    let mut c = Matrix::zeros(n, r);
    for w in 0..r {
        c.set_column(w, &(&b * &cert.l[w] * &xv));
    }
    let w = &ev.grad * &c;
    let iw = Matrix::identity(r, r) - &w;
    let sv = iw.singular_values();
    let cond = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    if !(cond <= MAX_COUPLING_CONDITION) {
        return Err(SimError::IllPosed { t: None, cond });
    }
    let hdot = iw.clone().lu().solve(&g).ok_or(SimError::IllPosed { t: None, cond })?;
    let xdot = &f0 + &c * &hdot;
    let residual = (&hdot - &ev.grad * &xdot).amax();
    if residual > 1e-9 * (1.0 + hdot.amax()) {
        return Err(SimError::Inconsistent { residual });
    }
    let mut u = &k * &xv;
    for wi in 0..r {
        u += &cert.l[wi] * &xv * hdot[wi];
    }
    let factors = (0..r).map(|v| iw[(v, v)]).collect();
    Ok(ResolvedState {
        h: ev.h,
        grad: ev.grad,
        hdot,
        xdot,
        u,
        factors,
    })
}

/// `V(x) = x' P(h(x)) x`.
pub fn lyapunov_value(cert: &GlobalCertificate, model: &TsModel, x: &[f64]) -> Result<f64, SimError> {
    let ev = model.eval_membership(x)?;
    let h: Vec<f64> = ev.h.iter().copied().collect();
    let xv = DVector::from_column_slice(x);
    Ok(xv.dot(&(cert.p_blend(&h) * &xv)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    LeftRegion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub hdot: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    /// `1 - grad h_v B(h) L_v x` per rule.
    pub factors: Vec<Vec<f64>>,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn left_region(&self) -> bool {
        self.stop == StopReason::LeftRegion
    }

    pub fn final_state(&self) -> &[f64] {
        self.x.last().map_or(&[], Vec::as_slice)
    }

    pub fn csv_header(&self) -> Vec<String> {
        let n = self.x.first().map_or(0, Vec::len);
        let r = self.h.first().map_or(0, Vec::len);
        let m = self.u.first().map_or(0, Vec::len);
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|k| format!("x{k}")));
        cols.extend((1..=r).map(|k| format!("h{k}")));
        cols.extend((1..=r).map(|k| format!("hdot{k}")));
        cols.extend((1..=m).map(|k| format!("u{k}")));
        cols.push("V".into());
        cols
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|s| {
                let mut row = vec![self.t[s]];
                row.extend(&self.x[s]);
                row.extend(&self.h[s]);
                row.extend(&self.hdot[s]);
                row.extend(&self.u[s]);
                row.push(self.v[s]);
                row
            })
            .collect()
    }
}

/// Fixed-step classical fourth-order integration. Stops early (flagged) when
/// the state leaves `region`.
pub fn integrate(
    model: &TsModel,
    cert: &GlobalCertificate,
    region: &Region,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, SimError> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(SimError::Dimension(format!("need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}")));
    }
    let steps = (t_end / dt).round() as usize;
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        h: Vec::with_capacity(steps + 1),
        hdot: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        factors: Vec::with_capacity(steps + 1),
        stop: StopReason::Horizon,
    };
    let at = |t: f64, e: SimError| match e {
        SimError::IllPosed { cond, .. } => SimError::IllPosed { t: Some(t), cond },
        other => other,
    };
    let record = |traj: &mut Trajectory, t: f64, x: &DVector<f64>| -> Result<(), SimError> {
        let xs: Vec<f64> = x.iter().copied().collect();
        let st = resolve_hdot(model, cert, &xs).map_err(|e| at(t, e))?;
        let h: Vec<f64> = st.h.iter().copied().collect();
        traj.v.push(x.dot(&(cert.p_blend(&h) * x)));
        traj.t.push(t);
        traj.x.push(xs);
        traj.h.push(h);
        traj.hdot.push(st.hdot.iter().copied().collect());
        traj.u.push(st.u.iter().copied().collect());
        traj.factors.push(st.factors);
        Ok(())
    };
    let f = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>, SimError> {
        let xs: Vec<f64> = x.iter().copied().collect();
        resolve_hdot(model, cert, &xs).map(|s| s.xdot).map_err(|e| at(t, e))
    };

    let mut x = DVector::from_column_slice(x0);
    record(&mut traj, 0.0, &x)?;
    for s in 0..steps {
        let t = s as f64 * dt;
        let k1 = f(t, &x)?;
        let k2 = f(t + dt / 2.0, &(&x + &k1 * (dt / 2.0)))?;
        let k3 = f(t + dt / 2.0, &(&x + &k2 * (dt / 2.0)))?;
        let k4 = f(t + dt, &(&x + &k3 * dt))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t_next = (s + 1) as f64 * dt;
        record(&mut traj, t_next, &x)?;
        if !region.contains(x.as_slice()) {
            traj.stop = StopReason::LeftRegion;
            break;
        }
    }
    Ok(traj)
}

/// Integrates every initial state, in parallel when `exec` allows.
pub fn integrate_batch(
    model: &TsModel,
    cert: &GlobalCertificate,
    region: &Region,
    x0s: &[Vec<f64>],
    t_end: f64,
    dt: f64,
    exec: Execution,
) -> Vec<Result<Trajectory, SimError>> {
    map_indexed(exec, x0s.len(), |k| integrate(model, cert, region, &x0s[k], t_end, dt))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoaEstimate {
    pub resolution: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row-major over the grid, first coordinate fastest.
    pub mask: Vec<bool>,
    /// `V` at the cell centers (same layout as `mask`).
    pub values: Vec<f64>,
    pub cell_volume: f64,
    pub area: f64,
}

impl DoaEstimate {
    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| {
                let h = (self.upper[k] - self.lower[k]) / self.resolution[k] as f64;
                self.lower[k] + (i as f64 + 0.5) * h
            })
            .collect()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

fn unravel(mut flat: usize, res: &[usize]) -> Vec<usize> {
    res.iter()
        .map(|&n| {
            let i = flat % n;
            flat /= n;
            i
        })
        .collect()
}

/// Marks every grid cell of `region` whose center satisfies `V <= 1`.
pub fn estimate_doa(
    cert: &GlobalCertificate,
    model: &TsModel,
    region: &Region,
    resolution: &[usize],
    exec: Execution,
) -> Result<DoaEstimate, SimError> {
    let n = model.n;
    if resolution.len() != n || region.dim() != n || resolution.contains(&0) {
        return Err(SimError::Dimension(format!("need {n} positive grid counts over an {n}-dimensional region")));
    }
    let mut est = DoaEstimate {
        resolution: resolution.to_vec(),
        lower: region.lower.clone(),
        upper: region.upper.clone(),
        mask: Vec::new(),
        values: Vec::new(),
        cell_volume: (0..n)
            .map(|k| (region.upper[k] - region.lower[k]) / resolution[k] as f64)
            .product(),
        area: 0.0,
    };
    // one work item per grid row along the first coordinate
    let row_len = resolution[0];
    let rows = resolution.iter().skip(1).product::<usize>();
    let chunks = map_indexed(exec, rows, |rw| {
        (0..row_len)
            .map(|i| {
                let idx = unravel(rw * row_len + i, resolution);
                lyapunov_value(cert, model, &est.cell_center(&idx))
            })
            .collect::<Result<Vec<f64>, SimError>>()
    });
    for ch in chunks {
        est.values.extend(ch?);
    }
    est.mask = est.values.iter().map(|v| *v <= 1.0).collect();
    est.area = est.count() as f64 * est.cell_volume;
    Ok(est)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundsReport {
    /// Samples with `V <= 1` (inside the estimated domain).
    pub samples_checked: usize,
    pub max_abs_hdot: Vec<f64>,
    pub min_abs_factor: Vec<f64>,
    pub hdot_violations: usize,
    pub factor_violations: usize,
    pub max_v: f64,
}

impl BoundsReport {
    pub fn ok(&self) -> bool {
        self.hdot_violations == 0 && self.factor_violations == 0
    }
}

/// Checks `|h'_v| <= phi_v` and `|1 - grad h_v B(h) L_v x| >= mu_v` (both with
/// 1e-6 slack) at every sample with `V <= 1`.
pub fn monitor_bounds(traj: &Trajectory, phi: &[f64], mu: &[f64]) -> BoundsReport {
    let r = phi.len();
    let mut rep = BoundsReport {
        max_abs_hdot: vec![0.0; r],
        min_abs_factor: vec![f64::INFINITY; r],
        max_v: traj.v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ..Default::default()
    };
    for s in 0..traj.len() {
        if traj.v[s] > 1.0 {
            continue;
        }
        rep.samples_checked += 1;
        for v in 0..r {
            let hd = traj.hdot[s][v].abs();
            let fa = traj.factors[s][v].abs();
            rep.max_abs_hdot[v] = rep.max_abs_hdot[v].max(hd);
            rep.min_abs_factor[v] = rep.min_abs_factor[v].min(fa);
            if hd > phi[v] + 1e-6 {
                rep.hdot_violations += 1;
            }
            if fa < mu[v] - 1e-6 {
                rep.factor_violations += 1;
            }
        }
    }
    rep
}

/// Points on the level set `V = 1` of a planar certificate, one per ray at
/// evenly spaced angles: the first crossing along each ray (coarse scan,
/// then bisection to 1e-13 relative). Rays that stay below the level up to
/// the region boundary return their boundary point.
pub fn trace_level_set(
    cert: &GlobalCertificate,
    model: &TsModel,
    region: &Region,
    count: usize,
) -> Result<Vec<Vec<f64>>, SimError> {
    if model.n != 2 {
        return Err(SimError::Dimension("level-set tracing needs n = 2".into()));
    }
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let th = 2.0 * PI * k as f64 / count as f64;
        let d = [th.cos(), th.sin()];
        // distance to the box boundary along d
        let s_max = (0..2)
            .map(|c| {
                if d[c] > 1e-15 {
                    region.upper[c] / d[c]
                } else if d[c] < -1e-15 {
                    region.lower[c] / d[c]
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min);
        let val = |s: f64| lyapunov_value(cert, model, &[s * d[0], s * d[1]]);
        let scan = 2000;
        let mut lo = 0.0;
        let mut hi = None;
        for q in 1..=scan {
            let s = s_max * q as f64 / scan as f64;
            if val(s)? > 1.0 {
                hi = Some(s);
                break;
            }
            lo = s;
        }
        let s = match hi {
            None => s_max,
            Some(mut hi) => {
                while hi - lo > 1e-13 * hi {
                    let mid = 0.5 * (lo + hi);
                    if val(mid)? > 1.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                lo
            }
        };
        out.push(vec![s * d[0], s * d[1]]);
    }
    Ok(out)
}

/// Closed-loop `x'` sampled on a `nx x ny` grid of a planar region, for
/// phase-portrait arrows. States where the coupling is ill-posed are skipped.
pub fn vector_field(
    model: &TsModel,
    cert: &GlobalCertificate,
    region: &Region,
    nx: usize,
    ny: usize,
) -> Vec<([f64; 2], [f64; 2])> {
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let x = [
                region.lower[0] + (i as f64 + 0.5) * (region.upper[0] - region.lower[0]) / nx as f64,
                region.lower[1] + (j as f64 + 0.5) * (region.upper[1] - region.lower[1]) / ny as f64,
            ];
            if let Ok(st) = resolve_hdot(model, cert, &x) {
                out.push((x, [st.xdot[0], st.xdot[1]]));
            }
        }
    }
    out
}
