//! Weighted, unpenalized logistic regression over group-expanded features.
//!
//! The model has a shared intercept and one 3-coefficient block per group:
//! `logit p = b0 + 1{A} b_A·x + 1{B} b_B·x`. Fitting is Newton–Raphson with
//! step halving on the weight-normalized negative log-likelihood.

use nalgebra::{SMatrix, SVector};

use crate::error::{Result, SandboxError};
use crate::synthgen::Group;

pub const N_PARAMS: usize = 7;

type Mat7 = SMatrix<f64, N_PARAMS, N_PARAMS>;
type Vec7 = SVector<f64, N_PARAMS>;

/// Largest `f64` strictly below one half.
const BELOW_HALF: f64 = 0.5 - f64::EPSILON / 4.0;
/// Largest `f64` strictly below one.
const MAX_SCORE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelCoeffs {
    pub intercept: f64,
    pub coeffs_a: [f64; 3],
    pub coeffs_b: [f64; 3],
}

impl ModelCoeffs {
    pub fn from_array(p: [f64; N_PARAMS]) -> Self {
        ModelCoeffs {
            intercept: p[0],
            coeffs_a: [p[1], p[2], p[3]],
            coeffs_b: [p[4], p[5], p[6]],
        }
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        let (a, b) = (self.coeffs_a, self.coeffs_b);
        [self.intercept, a[0], a[1], a[2], b[0], b[1], b[2]]
    }

    pub fn linear_score(&self, x: &[f64; 3], group: Group) -> f64 {
        let b = match group {
            Group::A => &self.coeffs_a,
            Group::B => &self.coeffs_b,
        };
        self.intercept + b[0] * x[0] + b[1] * x[1] + b[2] * x[2]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Places `x` in the 3-block belonging to `group`; the other block is zero.
pub fn expand_features(x: &[f64; 3], group: Group) -> [f64; 6] {
    match group {
        Group::A => [x[0], x[1], x[2], 0.0, 0.0, 0.0],
        Group::B => [0.0, 0.0, 0.0, x[0], x[1], x[2]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedSample {
    pub expanded_features: [f64; 6],
    pub target: bool,
    pub weight: f64,
}

impl WeightedSample {
    pub fn new(x: &[f64; 3], group: Group, target: bool, weight: f64) -> Self {
        WeightedSample {
            expanded_features: expand_features(x, group),
            target,
            weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the normalized gradient.
    pub grad_tol: f64,
    /// Coefficient vectors are rescaled so their max-norm never exceeds this.
    pub max_coef: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            max_iter: 100,
            grad_tol: 1e-8,
            max_coef: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub coeffs: ModelCoeffs,
    /// False when the iteration cap was hit or the line search stalled,
    /// typically on separable data.
    pub converged: bool,
    pub iterations: usize,
    pub used_gradient_fallback: bool,
    /// Objective value after each accepted iterate, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

/// Compact row: the nonzero feature block plus normalized weight.
#[derive(Debug, Clone, Copy)]
struct Row {
    x: [f64; 3],
    offset: usize,
    y: f64,
    w: f64,
}

/// Weight-normalized negative log-likelihood of the 7-parameter model.
#[derive(Debug, Clone)]
pub struct LogLoss {
    rows: Vec<Row>,
}

struct Eval {
    value: f64,
    grad: Vec7,
    hess: Mat7,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogLoss {
    pub fn new(samples: &[WeightedSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(SandboxError::DegenerateData("no samples".into()));
        }
        let mut w_pos = 0.0;
        let mut w_neg = 0.0;
        for s in samples {
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(SandboxError::invalid(
                    "weight",
                    format!("weights must be finite and nonnegative, got {}", s.weight),
                ));
            }
            if s.expanded_features.iter().any(|v| !v.is_finite()) {
                return Err(SandboxError::invalid("expanded_features", "must be finite"));
            }
            let f = &s.expanded_features;
            if f[..3].iter().any(|&v| v != 0.0) && f[3..].iter().any(|&v| v != 0.0) {
                return Err(SandboxError::invalid(
                    "expanded_features",
                    "one of the two group blocks must be all zero",
                ));
            }
            if s.target {
                w_pos += s.weight;
            } else {
                w_neg += s.weight;
            }
        }
        if w_pos == 0.0 || w_neg == 0.0 {
            return Err(SandboxError::DegenerateData(format!(
                "one class has zero total weight (positive {w_pos}, negative {w_neg})"
            )));
        }
        let total = w_pos + w_neg;
        let rows = samples
            .iter()
            .filter(|s| s.weight > 0.0)
            .map(|s| {
                let f = &s.expanded_features;
                let in_b = f[..3].iter().all(|&v| v == 0.0) && f[3..].iter().any(|&v| v != 0.0);
                let (x, offset) = if in_b {
                    ([f[3], f[4], f[5]], 4)
                } else {
                    ([f[0], f[1], f[2]], 1)
                };
                Row {
                    x,
                    offset,
                    y: if s.target { 1.0 } else { 0.0 },
                    w: s.weight / total,
                }
            })
            .collect();
        Ok(LogLoss { rows })
    }

    fn z(row: &Row, theta: &[f64; N_PARAMS]) -> f64 {
        let o = row.offset;
        theta[0] + theta[o] * row.x[0] + theta[o + 1] * row.x[1] + theta[o + 2] * row.x[2]
    }

    pub fn value(&self, theta: &[f64; N_PARAMS]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let z = Self::z(r, theta);
                r.w * (softplus(z) - r.y * z)
            })
            .sum()
    }

    pub fn gradient(&self, theta: &[f64; N_PARAMS]) -> [f64; N_PARAMS] {
        let mut g = [0.0; N_PARAMS];
        for r in &self.rows {
            let resid = r.w * (sigmoid(Self::z(r, theta)) - r.y);
            g[0] += resid;
            for k in 0..3 {
                g[r.offset + k] += resid * r.x[k];
            }
        }
        g
    }

    fn evaluate(&self, theta: &[f64; N_PARAMS]) -> Eval {
        let mut value = 0.0;
        let mut grad = Vec7::zeros();
        let mut hess = Mat7::zeros();
        for r in &self.rows {
            let z = Self::z(r, theta);
            let p = sigmoid(z);
            value += r.w * (softplus(z) - r.y * z);
            let resid = r.w * (p - r.y);
            let curv = r.w * p * (1.0 - p);
            let u = [1.0, r.x[0], r.x[1], r.x[2]];
            let idx = [0, r.offset, r.offset + 1, r.offset + 2];
            for a in 0..4 {
                grad[idx[a]] += resid * u[a];
                let cu = curv * u[a];
                for b in a..4 {
                    hess[(idx[a], idx[b])] += cu * u[b];
                }
            }
        }
        for i in 0..N_PARAMS {
            for j in 0..i {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        Eval { value, grad, hess }
    }

    /// Trace of the weighted second-moment matrix, an upper bound on four
    /// times the largest Hessian eigenvalue.
    fn moment_trace(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.w * (1.0 + r.x[0] * r.x[0] + r.x[1] * r.x[1] + r.x[2] * r.x[2]))
            .sum()
    }

    /// Parameters whose feature column is identically zero over the data.
    fn inactive(&self) -> [bool; N_PARAMS] {
        let mut seen = [false; N_PARAMS];
        seen[0] = true;
        for r in &self.rows {
            for k in 0..3 {
                if r.x[k] != 0.0 {
                    seen[r.offset + k] = true;
                }
            }
        }
        seen.map(|s| !s)
    }
}

fn clamp_norm(theta: &mut [f64; N_PARAMS], max_coef: f64) {
    let m = theta.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m > max_coef {
        let s = max_coef / m;
        theta.iter_mut().for_each(|v| *v *= s);
    }
}

/// Newton direction solving `H d = -g`, with identically-zero columns pinned.
fn newton_direction(eval: &Eval, inactive: &[bool; N_PARAMS]) -> Option<Vec7> {
    let mut h = eval.hess;
    let mut g = eval.grad;
    for i in 0..N_PARAMS {
        if inactive[i] {
            for j in 0..N_PARAMS {
                h[(i, j)] = 0.0;
                h[(j, i)] = 0.0;
            }
            h[(i, i)] = 1.0;
            g[i] = 0.0;
        }
    }
    let chol = h.cholesky()?;
    let d = chol.solve(&(-g));
    d.iter().all(|v| v.is_finite()).then_some(d)
}

pub fn fit_weighted_logreg(samples: &[WeightedSample], settings: &FitSettings) -> Result<FitReport> {
    fit_from(samples, settings, ModelCoeffs::default())
}

/// Same as [`fit_weighted_logreg`] but starting the iteration at `init`.
pub fn fit_from(
    samples: &[WeightedSample],
    settings: &FitSettings,
    init: ModelCoeffs,
) -> Result<FitReport> {
    let loss = LogLoss::new(samples)?;
    let inactive = loss.inactive();
    let lipschitz = 0.25 * loss.moment_trace();

    let mut theta = init.to_array();
    for (t, &off) in theta.iter_mut().zip(&inactive) {
        if off {
            *t = 0.0;
        }
    }
    clamp_norm(&mut theta, settings.max_coef);
    let mut cur = loss.evaluate(&theta);
    let mut trace = vec![cur.value];
    let mut converged = false;
    let mut used_fallback = false;
    let mut iterations = 0;

    while iterations < settings.max_iter {
        if cur.grad.amax() < settings.grad_tol {
            converged = true;
            // One more full Newton step: near the optimum it is nearly exact,
            // which matters when the curvature is small.
            if let Some(dir) = newton_direction(&cur, &inactive) {
                let mut cand = theta;
                for i in 0..N_PARAMS {
                    cand[i] += dir[i];
                }
                clamp_norm(&mut cand, settings.max_coef);
                let e = loss.evaluate(&cand);
                if cand != theta && e.value <= cur.value {
                    theta = cand;
                    cur = e;
                    trace.push(cur.value);
                }
            }
            break;
        }
        let dir = match newton_direction(&cur, &inactive) {
            Some(d) => d,
            None => {
                used_fallback = true;
                -cur.grad / lipschitz
            }
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = theta;
            for i in 0..N_PARAMS {
                cand[i] += step * dir[i];
            }
            clamp_norm(&mut cand, settings.max_coef);
            if cand == theta {
                break;
            }
            let e = loss.evaluate(&cand);
            if e.value <= cur.value {
                accepted = Some((cand, e));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, e)) = accepted else {
            break;
        };
        theta = cand;
        cur = e;
        trace.push(cur.value);
        iterations += 1;
    }
    if !converged && cur.grad.amax() < settings.grad_tol {
        converged = true;
    }

    Ok(FitReport {
        coeffs: ModelCoeffs::from_array(theta),
        converged,
        iterations,
        used_gradient_fallback: used_fallback,
        objective_trace: trace,
    })
}

/// Hard prediction: 1 iff the linear score is nonnegative.
pub fn predict_binary(model: &ModelCoeffs, x: &[f64; 3], group: Group) -> bool {
    model.linear_score(x, group) >= 0.0
}

/// Logistic score, kept strictly inside (0, 1) and on the same side of one
/// half as [`predict_binary`].
pub fn predict_score(model: &ModelCoeffs, x: &[f64; 3], group: Group) -> f64 {
    let z = model.linear_score(x, group);
    let s = sigmoid(z);
    if z >= 0.0 {
        s.clamp(0.5, MAX_SCORE)
    } else {
        s.clamp(f64::MIN_POSITIVE, BELOW_HALF)
    }
}
