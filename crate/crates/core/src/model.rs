//! Takagi-Sugeno fuzzy models, membership functions and synthesis
//! parameters, plus the JSON model-file loader.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ParseError};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

const SUM_TOL: f64 = 1e-9;
const NONNEG_TOL: f64 = 1e-12;
const HULL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("syntax error in {context}: {source}")]
    Syntax {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("evaluating {context} for rule {rule}: {source}")]
    Eval {
        rule: usize,
        context: String,
        #[source]
        source: EvalError,
    },
    #[error("membership validation failed ({check}) at x = {point:?}: {detail}")]
    Validation {
        check: &'static str,
        point: Vec<f64>,
        detail: String,
    },
    #[error("model has no membership functions (matrices-only model)")]
    NoMemberships,
}

/// Which controller/Lyapunov structure a synthesis problem uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `u = K(h)x + L(hdot)x` with a fuzzy Lyapunov function.
    #[default]
    Proposed,
    /// All derivative gains forced to zero.
    #[serde(alias = "traditional-pdc")]
    TraditionalPdc,
    /// Derivative gains zero and a single common Lyapunov matrix.
    Quadratic,
}

impl Mode {
    pub fn has_derivative_gains(self) -> bool {
        self == Mode::Proposed
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::TraditionalPdc => "traditional_pdc",
            Mode::Quadratic => "quadratic",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Mode::Proposed),
            "traditional_pdc" | "traditional-pdc" => Ok(Mode::TraditionalPdc),
            "quadratic" => Ok(Mode::Quadratic),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

/// A membership grade `h(x)` with its user-supplied gradient.
#[derive(Debug, Clone)]
pub struct MembershipFn {
    pub value_src: String,
    pub gradient_src: Vec<String>,
    value: Expr,
    gradient: Vec<Expr>,
}

impl MembershipFn {
    pub fn compile(value_src: &str, gradient_src: &[String], n: usize) -> Result<Self, ModelError> {
        let names = expr::state_symbols(n);
        let syms: Vec<&str> = names.iter().map(String::as_str).collect();
        let value = expr::parse(value_src, &syms).map_err(|source| ModelError::Syntax {
            context: format!("membership `{value_src}`"),
            source,
        })?;
        if gradient_src.len() != n {
            return Err(ModelError::Dimension(format!(
                "gradient of `{value_src}` has {} entries, expected {n}",
                gradient_src.len()
            )));
        }
        let gradient = gradient_src
            .iter()
            .map(|g| {
                expr::parse(g, &syms).map_err(|source| ModelError::Syntax {
                    context: format!("gradient `{g}`"),
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            value_src: value_src.to_string(),
            gradient_src: gradient_src.to_vec(),
            value,
            gradient,
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.value.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.gradient.iter().map(|g| g.eval(x)).collect()
    }
}

/// Axis-aligned box of states used for validation sampling and gridding.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn symmetric(bounds: &[f64]) -> Self {
        Self {
            lower: bounds.iter().map(|b| -b).collect(),
            upper: bounds.to_vec(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Local linear models blended by normalized memberships.
#[derive(Debug, Clone)]
pub struct TsModel {
    pub n: usize,
    pub m: usize,
    pub a: Vec<Matrix>,
    pub b: Vec<Matrix>,
    pub memberships: Option<Vec<MembershipFn>>,
    pub region: Region,
}

/// Memberships and gradients at one state.
#[derive(Debug, Clone)]
pub struct MembershipEval {
    pub h: Vector,
    /// Row `i` is the gradient of `h_i`.
    pub grad: Matrix,
}

impl TsModel {
    pub fn new(a: Vec<Matrix>, b: Vec<Matrix>) -> Result<Self, ModelError> {
        if a.is_empty() {
            return Err(ModelError::Dimension("a model needs at least one rule".into()));
        }
        if a.len() != b.len() {
            return Err(ModelError::Dimension(format!(
                "{} state matrices but {} input matrices",
                a.len(),
                b.len()
            )));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        if n == 0 || m == 0 {
            return Err(ModelError::Dimension("n and m must be at least 1".into()));
        }
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.shape() != (n, n) {
                return Err(ModelError::Dimension(format!(
                    "A_{} is {}x{}, expected {n}x{n}",
                    i + 1,
                    ai.nrows(),
                    ai.ncols()
                )));
            }
            if bi.shape() != (n, m) {
                return Err(ModelError::Dimension(format!(
                    "B_{} is {}x{}, expected {n}x{m}",
                    i + 1,
                    bi.nrows(),
                    bi.ncols()
                )));
            }
        }
        Ok(Self {
            n,
            m,
            a,
            b,
            memberships: None,
            region: Region::symmetric(&vec![1.0; n]),
        })
    }

    pub fn with_memberships(mut self, memberships: Vec<MembershipFn>) -> Result<Self, ModelError> {
        if memberships.len() != self.rules() {
            return Err(ModelError::Dimension(format!(
                "{} memberships for {} rules",
                memberships.len(),
                self.rules()
            )));
        }
        self.memberships = Some(memberships);
        Ok(self)
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = region;
        self
    }

    pub fn rules(&self) -> usize {
        self.a.len()
    }

    pub fn has_memberships(&self) -> bool {
        self.memberships.is_some()
    }

    pub fn eval_membership(&self, x: &[f64]) -> Result<MembershipEval, ModelError> {
        let mfs = self.memberships.as_ref().ok_or(ModelError::NoMemberships)?;
        let r = mfs.len();
        let mut h = Vector::zeros(r);
        let mut grad = Matrix::zeros(r, self.n);
        for (i, mf) in mfs.iter().enumerate() {
            h[i] = mf.value(x).map_err(|source| ModelError::Eval {
                rule: i + 1,
                context: format!("h(x) = {}", mf.value_src),
                source,
            })?;
            let g = mf.gradient(x).map_err(|source| ModelError::Eval {
                rule: i + 1,
                context: "gradient".into(),
                source,
            })?;
            for (k, gk) in g.into_iter().enumerate() {
                grad[(i, k)] = gk;
            }
        }
        Ok(MembershipEval { h, grad })
    }

    /// `(A(h), B(h))` for a point `h` of the simplex.
    pub fn blend(&self, h: &[f64]) -> (Matrix, Matrix) {
        (blend_matrices(&self.a, h), blend_matrices(&self.b, h))
    }
}

/// `sum_i w_i M_i`.
pub fn blend_matrices(mats: &[Matrix], w: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(mats[0].nrows(), mats[0].ncols());
    for (mi, wi) in mats.iter().zip(w) {
        out += mi * *wi;
    }
    out
}

/// Extreme rows `zeta^v_q` bounding each membership gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSectorData {
    /// `zeta[v][q]` is a row vector of length n.
    pub zeta: Vec<Vec<Vec<f64>>>,
}

impl GradientSectorData {
    pub fn sectors(&self, rule: usize) -> &[Vec<f64>] {
        &self.zeta[rule]
    }
}

/// Scalar synthesis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub alpha: f64,
    pub phi_lower: Vec<f64>,
    pub phi_upper: Vec<f64>,
    pub mu: Option<Vec<f64>>,
    pub x_bar: Option<Vec<f64>>,
    pub mode: Mode,
    pub epsilon: f64,
    pub validation_samples: usize,
}

impl SynthesisConfig {
    pub fn new(alpha: f64, phi_lower: Vec<f64>, phi_upper: Vec<f64>) -> Self {
        Self {
            alpha,
            phi_lower,
            phi_upper,
            mu: None,
            x_bar: None,
            mode: Mode::Proposed,
            epsilon: DEFAULT_EPSILON,
            validation_samples: DEFAULT_SAMPLES,
        }
    }

    pub fn symmetric(alpha: f64, phi: &[f64]) -> Self {
        Self::new(alpha, phi.iter().map(|p| -p).collect(), phi.to_vec())
    }

    pub fn validate(&self, r: usize, n: usize) -> Result<(), ModelError> {
        if !(self.alpha > 0.0) {
            return Err(ModelError::Invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.phi_lower.len() != r || self.phi_upper.len() != r {
            return Err(ModelError::Dimension(format!(
                "derivative bounds need {r} entries"
            )));
        }
        for (k, (lo, hi)) in self.phi_lower.iter().zip(&self.phi_upper).enumerate() {
            if lo > hi {
                return Err(ModelError::Invalid(format!(
                    "phi_lower[{k}] = {lo} exceeds phi_upper[{k}] = {hi}"
                )));
            }
        }
        if let Some(mu) = &self.mu {
            if mu.len() != r {
                return Err(ModelError::Dimension(format!("mu needs {r} entries")));
            }
            // With L = 0 the well-posedness factor is exactly 1, so mu = 1 is
            // admissible for the derivative-free modes.
            let cap_ok = |v: f64| match self.mode {
                Mode::Proposed => v < 1.0,
                _ => v <= 1.0,
            };
            if let Some(bad) = mu.iter().find(|&&v| !(v > 0.0 && cap_ok(v))) {
                return Err(ModelError::Invalid(format!("mu entry {bad} out of range (0,1)")));
            }
        }
        if let Some(xb) = &self.x_bar {
            if xb.len() != n {
                return Err(ModelError::Dimension(format!("x_bar needs {n} entries")));
            }
            if let Some(bad) = xb.iter().find(|&&v| !(v > 0.0)) {
                return Err(ModelError::Invalid(format!("x_bar entry {bad} must be positive")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(ModelError::Invalid("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Symmetric magnitudes `phi_v`, when the bounds are of that form.
    pub fn symmetric_phi(&self) -> Option<Vec<f64>> {
        self.phi_lower
            .iter()
            .zip(&self.phi_upper)
            .map(|(lo, hi)| ((lo + hi).abs() <= 1e-12 * hi.abs().max(1.0) && *hi > 0.0).then_some(*hi))
            .collect()
    }
}

pub const DEFAULT_EPSILON: f64 = 1e-7;
pub const DEFAULT_SAMPLES: usize = 1000;

/// Everything a model file describes.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: Option<String>,
    pub model: TsModel,
    pub sectors: Option<GradientSectorData>,
    pub config: SynthesisConfig,
    pub params: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

// ---- on-disk schema ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Num(f64),
    Expr(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    #[serde(rename = "A")]
    pub a: Vec<Vec<Entry>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Entry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_h: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiDoc {
    Symmetric(Vec<f64>),
    Bounds { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDoc {
    pub alpha: f64,
    pub phi: PhiDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_bar: Option<Vec<Entry>>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    pub rules: Vec<RuleDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<Vec<Vec<f64>>>>,
    pub config: ConfigDoc,
}

pub(crate) fn eval_entry(e: &Entry, params: &BTreeMap<String, f64>, ctx: &str) -> Result<f64, ModelError> {
    match e {
        Entry::Num(v) => Ok(*v),
        Entry::Expr(src) => {
            let names: Vec<&str> = params.keys().map(String::as_str).collect();
            let vals: Vec<f64> = params.values().copied().collect();
            let ex = expr::parse(src, &names).map_err(|source| ModelError::Syntax {
                context: ctx.to_string(),
                source,
            })?;
            ex.eval(&vals).map_err(|source| ModelError::Eval {
                rule: 0,
                context: ctx.to_string(),
                source,
            })
        }
    }
}

fn matrix_from_doc(
    rows: &[Vec<Entry>],
    shape: (usize, usize),
    params: &BTreeMap<String, f64>,
    ctx: &str,
) -> Result<Matrix, ModelError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(ModelError::Dimension(format!(
            "{ctx} must be {}x{}",
            shape.0, shape.1
        )));
    }
    let mut m = Matrix::zeros(shape.0, shape.1);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            m[(i, j)] = eval_entry(e, params, ctx)?;
        }
    }
    Ok(m)
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<ModelSpec, ModelError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    model_from_doc(&doc)
}

/// Parses a model file after applying dotted-key overrides (see
/// [`apply_override`]).
pub fn parse_model_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<ModelSpec, ModelError> {
    let mut value: Value = serde_json::from_str(text)?;
    for (k, v) in overrides {
        apply_override(&mut value, k, v)?;
    }
    let doc: ModelDoc = serde_json::from_value(value)?;
    model_from_doc(&doc)
}

/// Sets `key` (a dotted path such as `config.alpha`, or a bare parameter
/// name such as `a`) to `raw`, parsed as JSON when possible.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<(), ModelError> {
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let path: Vec<&str> = if !key.contains('.')
        && doc.get("params").and_then(|p| p.get(key)).is_some()
    {
        vec!["params", key]
    } else {
        key.split('.').collect()
    };
    let missing = || ModelError::Invalid(format!("override key `{key}` does not exist in the model file"));
    let (last, parents) = path.split_last().ok_or_else(missing)?;
    let mut cur = doc;
    for seg in parents {
        cur = match cur {
            Value::Object(map) => map.get_mut(*seg),
            Value::Array(arr) => seg.parse::<usize>().ok().and_then(move |i| arr.get_mut(i)),
            _ => None,
        }
        .ok_or_else(missing)?;
    }
    // Optional fields may be absent from the file; unknown names are still
    // rejected when the document is deserialized.
    match cur {
        Value::Object(map) => {
            map.insert((*last).to_string(), new);
        }
        Value::Array(arr) => {
            *last.parse::<usize>().ok().and_then(|i| arr.get_mut(i)).ok_or_else(missing)? = new;
        }
        _ => return Err(missing()),
    }
    Ok(())
}

pub fn model_from_doc(doc: &ModelDoc) -> Result<ModelSpec, ModelError> {
    let (n, m) = (doc.n, doc.m);
    if n == 0 || m == 0 || doc.rules.is_empty() {
        return Err(ModelError::Dimension("n, m and the rule count must be at least 1".into()));
    }
    let r = doc.rules.len();
    let mut warnings = Vec::new();
    let mut a = Vec::with_capacity(r);
    let mut b = Vec::with_capacity(r);
    for (i, rule) in doc.rules.iter().enumerate() {
        a.push(matrix_from_doc(&rule.a, (n, n), &doc.params, &format!("A_{}", i + 1))?);
        b.push(matrix_from_doc(&rule.b, (n, m), &doc.params, &format!("B_{}", i + 1))?);
    }
    let mut model = TsModel::new(a, b)?;

    let with_h = doc.rules.iter().filter(|r| r.h.is_some()).count();
    if with_h != 0 && with_h != r {
        return Err(ModelError::Invalid("either every rule or no rule declares `h`".into()));
    }
    if with_h == r {
        let mfs = doc
            .rules
            .iter()
            .map(|rule| {
                let grad = rule.grad_h.as_ref().ok_or_else(|| {
                    ModelError::Invalid(format!("rule with h = `{}` lacks grad_h", rule.h.as_deref().unwrap_or("")))
                })?;
                MembershipFn::compile(rule.h.as_deref().unwrap_or_default(), grad, n)
            })
            .collect::<Result<Vec<_>, _>>()?;
        model = model.with_memberships(mfs)?;
    }

    let cfg = &doc.config;
    let (phi_lower, phi_upper) = match &cfg.phi {
        PhiDoc::Symmetric(p) => (p.iter().map(|v| -v).collect(), p.clone()),
        PhiDoc::Bounds { lower, upper } => {
            if lower.iter().any(|v| *v > 0.0) {
                let msg = "phi lower bounds are positive; a zero-sum derivative cannot satisfy them \
                           (symmetric magnitudes are probably intended)"
                    .to_string();
                log::warn!("{msg}");
                warnings.push(msg);
            }
            (lower.clone(), upper.clone())
        }
    };
    let x_bar = cfg
        .x_bar
        .as_ref()
        .map(|xb| {
            xb.iter()
                .map(|e| eval_entry(e, &doc.params, "x_bar"))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let config = SynthesisConfig {
        alpha: cfg.alpha,
        phi_lower,
        phi_upper,
        mu: cfg.mu.clone(),
        x_bar,
        mode: cfg.mode,
        epsilon: cfg.epsilon.unwrap_or(DEFAULT_EPSILON),
        validation_samples: cfg.validation_samples.unwrap_or(DEFAULT_SAMPLES),
    };
    config.validate(r, n)?;
    if let Some(xb) = &config.x_bar {
        model = model.with_region(Region::symmetric(xb));
    }

    let sectors = match &doc.zeta {
        None => None,
        Some(z) => {
            if z.len() != r {
                return Err(ModelError::Dimension(format!("zeta needs one list per rule ({r})")));
            }
            for (v, rows) in z.iter().enumerate() {
                if rows.is_empty() || rows.iter().any(|row| row.len() != n) {
                    return Err(ModelError::Dimension(format!(
                        "zeta for rule {} must be a non-empty list of length-{n} rows",
                        v + 1
                    )));
                }
            }
            Some(GradientSectorData { zeta: z.clone() })
        }
    };

    if model.has_memberships() {
        validate_memberships(&model, sectors.as_ref(), config.validation_samples)?;
    }

    Ok(ModelSpec {
        name: doc.name.clone(),
        model,
        sectors,
        config,
        params: doc.params.clone(),
        warnings,
    })
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    out
}

/// Deterministic Halton points filling `region`.
pub fn halton_samples(region: &Region, count: usize) -> Vec<Vec<f64>> {
    let d = region.dim();
    (1..=count as u64)
        .map(|i| {
            (0..d)
                .map(|k| {
                    let u = radical_inverse(i, PRIMES[k % PRIMES.len()]);
                    region.lower[k] + u * (region.upper[k] - region.lower[k])
                })
                .collect()
        })
        .collect()
}

/// Checks the partition of unity, zero-sum gradients, finite-difference
/// consistency of the gradients and (when sectors are given) the gradient
/// hull property over a Halton sample of the operating region.
pub fn validate_memberships(
    model: &TsModel,
    sectors: Option<&GradientSectorData>,
    samples: usize,
) -> Result<(), ModelError> {
    let mfs = model.memberships.as_ref().ok_or(ModelError::NoMemberships)?;
    // the origin is always included
    let mut points = vec![vec![0.0; model.n]];
    points.extend(halton_samples(&model.region, samples));
    for x in &points {
        let ev = model.eval_membership(x)?;
        let sum: f64 = ev.h.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(ModelError::Validation {
                check: "partition of unity",
                point: x.clone(),
                detail: format!("sum of memberships is {sum}"),
            });
        }
        if let Some((i, v)) = ev.h.iter().enumerate().find(|(_, v)| **v < -NONNEG_TOL || **v > 1.0 + NONNEG_TOL) {
            return Err(ModelError::Validation {
                check: "membership range",
                point: x.clone(),
                detail: format!("h_{} = {v}", i + 1),
            });
        }
        for k in 0..model.n {
            let s: f64 = ev.grad.column(k).iter().sum();
            if s.abs() > SUM_TOL {
                return Err(ModelError::Validation {
                    check: "zero-sum gradients",
                    point: x.clone(),
                    detail: format!("component {} of the gradient sum is {s}", k + 1),
                });
            }
        }
        for (i, mf) in mfs.iter().enumerate() {
            for k in 0..model.n {
                let step = 1e-6 * x[k].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += step;
                xm[k] -= step;
                let eval = |p: &[f64]| {
                    mf.value(p).map_err(|source| ModelError::Eval {
                        rule: i + 1,
                        context: "finite-difference probe".into(),
                        source,
                    })
                };
                let fd = (eval(&xp)? - eval(&xm)?) / (2.0 * step);
                let g = ev.grad[(i, k)];
                let norm = ev.grad.row(i).norm();
                if (fd - g).abs() > (1e-4 * norm).max(1e-6) {
                    return Err(ModelError::Validation {
                        check: "gradient consistency",
                        point: x.clone(),
                        detail: format!(
                            "d h_{}/d x{} is {g} but finite differences give {fd}",
                            i + 1,
                            k + 1
                        ),
                    });
                }
            }
        }
        if let Some(sec) = sectors {
            for v in 0..model.rules() {
                let g: Vec<f64> = ev.grad.row(v).iter().copied().collect();
                let resid = hull_residual(sec.sectors(v), &g);
                if resid > HULL_TOL * (1.0 + g.iter().map(|c| c.abs()).fold(0.0, f64::max)) {
                    return Err(ModelError::Validation {
                        check: "gradient hull",
                        point: x.clone(),
                        detail: format!(
                            "gradient of h_{} = {g:?} lies outside the convex hull of its zeta rows (residual {resid:.3e})",
                            v + 1
                        ),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Distance-like residual of `g` from `co{points}`: zero iff `g` is a convex
/// combination. Solved as non-negative least squares on the system
/// `[Z^T; w 1^T] tau = [g; w]`.
pub fn hull_residual(points: &[Vec<f64>], g: &[f64]) -> f64 {
    let n = g.len();
    let s = points.len();
    let w = 1.0 + points.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let mut e = Matrix::zeros(n + 1, s);
    let mut f = Vector::zeros(n + 1);
    for (q, p) in points.iter().enumerate() {
        for k in 0..n {
            e[(k, q)] = p[k];
        }
        e[(n, q)] = w;
    }
    for k in 0..n {
        f[k] = g[k];
    }
    f[n] = w;
    let tau = nnls(&e, &f);
    (&e * &tau - &f).norm()
}

/// Lawson-Hanson active-set non-negative least squares.
fn nnls(e: &Matrix, f: &Vector) -> Vector {
    let s = e.ncols();
    let mut x = Vector::zeros(s);
    let mut passive = vec![false; s];
    let tol = 1e-12 * e.norm().max(1.0) * f.norm().max(1.0);
    for _ in 0..(3 * s + 10) {
        let w = e.transpose() * (f - e * &x);
        let cand = (0..s)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..s).filter(|&k| passive[k]).collect();
            let sub = e.select_columns(&idx);
            let z_sub = match sub.clone().svd(true, true).solve(f, 1e-14) {
                Ok(z) => z,
                Err(_) => return x,
            };
            let mut z = Vector::zeros(s);
            for (p, &k) in idx.iter().enumerate() {
                z[k] = z_sub[p];
            }
            if idx.iter().all(|&k| z[k] > 0.0) {
                x = z;
                break;
            }
            let mut step = f64::INFINITY;
            for &k in &idx {
                if z[k] <= 0.0 {
                    let t = x[k] / (x[k] - z[k]);
                    step = step.min(t);
                }
            }
            x += (z - &x) * step;
            for &k in &idx {
                if x[k] <= 1e-15 {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
        }
    }
    x
}
