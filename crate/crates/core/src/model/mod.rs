//! The convex local model built at an iterate `x_k`.
//!
//! The model linearizes the smooth maps only:
//!
//! ```text
//! F(x; x_k) = g(x) + h(C(x_k) + J_C(x_k)(x - x_k)) + s(R(x_k))
//!             + sum_i  w_i * Phi_i(x; x_k),          w_i = grad s(R(x_k))_i
//! Phi_i(x; x_k) = r_i(x) - r_i(x_k)          if w_i >= 0   (channel kept exact)
//!               = grad r_i(x_k)^T (x - x_k)  if w_i <  0   (channel linearized)
//! ```
//!
//! Nonnegative-weight channels stay exact (nonnegative scalar times convex is
//! convex); negative-weight channels are concave contributions and are
//! replaced by their affine expansion, a global convex majorant. The model is
//! therefore convex in `x`.

mod curvature;

pub use curvature::{
    assemble_curvature, make_metric, make_metric_with_bounds, psd_project, spectral_norm,
    CurvatureBlocks, ProximalMetric, PsdProjection,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_slice, ExecMode};
use crate::problem::{CompositeProblem, ConstantRegistry};

/// Strict sign rule: a channel is linearized only when its outer partial is
/// strictly below `-sign_tolerance`. Zero partials keep the channel exact
/// (the exact-channel term then vanishes identically).
pub const DEFAULT_SIGN_TOLERANCE: f64 = 0.0;

/// Frozen linearization data at `x_k`.
#[derive(Debug, Clone)]
pub struct ModelState {
    problem: Arc<CompositeProblem>,
    pub x_k: DVector<f64>,
    /// `F(x_k)`.
    pub f_k: f64,
    pub c_k: DVector<f64>,
    pub j_c: DMatrix<f64>,
    pub r_k: DVector<f64>,
    /// `s(R(x_k))`.
    pub s_k: f64,
    pub grad_s: DVector<f64>,
    /// Indices of linearized channels, ascending.
    pub i_minus: Vec<usize>,
    linearized: Vec<bool>,
    /// Channel gradients for linearized channels (`None` elsewhere).
    pub lin_gradients: Vec<Option<DVector<f64>>>,
    /// One deterministic subgradient per channel (gradient when smooth).
    pub channel_subgradients: Vec<DVector<f64>>,
}

impl ModelState {
    pub fn problem(&self) -> &Arc<CompositeProblem> {
        &self.problem
    }

    pub fn dim(&self) -> usize {
        self.x_k.len()
    }

    pub fn is_linearized(&self, channel: usize) -> bool {
        self.linearized[channel]
    }

    /// Model value `F(x; x_k)`; equals `F(x_k)` exactly at `x = x_k`.
    pub fn eval_model(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "eval_model",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let gv = self.problem.g.value(x)?;
        if gv == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let d = x - &self.x_k;
        let hv = self.problem.h.finite_value(&(&self.c_k + &self.j_c * &d))?;
        let mut acc = self.s_k;
        for i in 0..self.r_k.len() {
            let w = self.grad_s[i];
            if self.linearized[i] {
                acc += w * self.lin_gradients[i].as_ref().unwrap().dot(&d);
            } else if w != 0.0 {
                acc += w * (self.problem.channels[i].finite_value(x)? - self.r_k[i]);
            }
        }
        Ok(gv + hv + acc)
    }

    /// Proximal model value `F(x; x_k) + 1/2 ||x - x_k||_Q^2`.
    pub fn eval_prox_model(&self, x: &DVector<f64>, metric: &ProximalMetric) -> Result<f64> {
        let base = self.eval_model(x)?;
        if base == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let d = x - &self.x_k;
        Ok(base + 0.5 * metric.quadratic_form(&d))
    }

    /// Design-error term `sum_i w_i (r_i(x) - r_i(x_k) - Phi_i(x; x_k))`,
    /// which is nonpositive for every `x` by convexity of the channels.
    pub fn model_design_error(&self, x: &DVector<f64>) -> Result<f64> {
        let d = x - &self.x_k;
        let mut acc = 0.0;
        for (i, &lin) in self.linearized.iter().enumerate() {
            if lin {
                let w = self.grad_s[i];
                let excess = self.problem.channels[i].finite_value(x)?
                    - self.r_k[i]
                    - self.lin_gradients[i].as_ref().unwrap().dot(&d);
                acc += w * excess;
            }
        }
        Ok(acc)
    }
}

/// Freezes the linearization data of `problem` at `x_k`.
///
/// Fails when `g(x_k)` is not finite, or when the sign rule selects a channel
/// for linearization that has no gradient oracle.
pub fn build_model(
    problem: &Arc<CompositeProblem>,
    x_k: &DVector<f64>,
    sign_tolerance: f64,
) -> Result<ModelState> {
    let f_k = problem.objective(x_k)?;
    if !f_k.is_finite() {
        return Err(Error::config(format!(
            "model must be built at a point with finite objective, got F = {f_k}"
        )));
    }
    let c_k = problem.c.value(x_k)?;
    let j_c = problem.c.jacobian(x_k)?;
    let r_k = problem.channel_values(x_k)?;
    let s_k = problem.s.value(&r_k)?[0];
    let grad_s = problem.s.scalar_gradient(&r_k)?;

    let n = problem.n_channels();
    let mut i_minus = Vec::new();
    let mut linearized = vec![false; n];
    let mut lin_gradients: Vec<Option<DVector<f64>>> = vec![None; n];
    let mut channel_subgradients = Vec::with_capacity(n);
    for i in 0..n {
        let piece = &problem.channels[i];
        channel_subgradients.push(piece.gradient_or_subgradient(x_k)?);
        if grad_s[i] < -sign_tolerance {
            let grad = piece.gradient(x_k).ok_or_else(|| {
                Error::config(format!(
                    "channel {i} (`{}`) must be linearized at this iterate but has no \
                     gradient oracle",
                    piece.label()
                ))
            })??;
            i_minus.push(i);
            linearized[i] = true;
            lin_gradients[i] = Some(grad);
        }
    }

    Ok(ModelState {
        problem: Arc::clone(problem),
        x_k: x_k.clone(),
        f_k,
        c_k,
        j_c,
        r_k,
        s_k,
        grad_s,
        i_minus,
        linearized,
        lin_gradients,
        channel_subgradients,
    })
}

/// Per-sample outcome of the two-sided model error check.
#[derive(Debug, Clone, Serialize)]
pub struct ModelErrorSample {
    pub step_norm: f64,
    pub error: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    /// Positive when a bound is violated beyond slack.
    pub violation: f64,
    /// `error / upper_bound` when the upper bound is positive.
    pub tightness_upper: Option<f64>,
    /// `-error / |lower_bound|` when the lower bound is negative.
    pub tightness_lower: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelErrorReport {
    pub samples: usize,
    pub violations: usize,
    pub max_normalized_violation: f64,
    pub max_tightness_upper: f64,
    pub max_tightness_lower: f64,
}

/// Checks the two-sided quadratic model error bound
/// `-(L_L/2)||d||^2 <= F(x) - F(x; x_k) <= (L_U/2)||d||^2`
/// on the given sample points, with additive slack `1e-8 * (1 + |F(x)|)`.
pub fn model_error_bounds_check(
    state: &ModelState,
    registry: &ConstantRegistry,
    samples: &[DVector<f64>],
    mode: ExecMode,
) -> Result<ModelErrorReport> {
    let outcomes: Vec<Result<ModelErrorSample>> = map_slice(mode, samples, |x| {
        let f = state.problem.objective(x)?;
        let model = state.eval_model(x)?;
        if !f.is_finite() || !model.is_finite() {
            // indicator pieces cancel between F and the model; a sample where
            // both are infinite carries no information
            return Ok(ModelErrorSample {
                step_norm: (x - &state.x_k).norm(),
                error: 0.0,
                upper_bound: 0.0,
                lower_bound: 0.0,
                violation: 0.0,
                tightness_upper: None,
                tightness_lower: None,
            });
        }
        let d2 = (x - &state.x_k).norm_squared();
        let error = f - model;
        let upper = 0.5 * registry.l_upper * d2;
        let lower = -0.5 * registry.l_lower * d2;
        let slack = 1e-8 * (1.0 + f.abs());
        let violation = (error - upper - slack).max(lower - slack - error).max(0.0);
        Ok(ModelErrorSample {
            step_norm: d2.sqrt(),
            error,
            upper_bound: upper,
            lower_bound: lower,
            violation: violation / (1.0 + f.abs()),
            tightness_upper: (upper > 0.0).then(|| error / upper),
            tightness_lower: (lower < 0.0)
                .then(|| -error / -lower)
                .map(|_| error / lower),
        })
    });

    let mut violations = 0;
    let mut max_violation = 0.0_f64;
    let mut max_tu = f64::NEG_INFINITY;
    let mut max_tl = f64::NEG_INFINITY;
    let mut count = 0;
    for outcome in outcomes {
        let o = outcome?;
        count += 1;
        if o.violation > 0.0 {
            violations += 1;
        }
        max_violation = max_violation.max(o.violation);
        if let Some(t) = o.tightness_upper {
            max_tu = max_tu.max(t);
        }
        if let Some(t) = o.tightness_lower {
            max_tl = max_tl.max(t);
        }
    }
    Ok(ModelErrorReport {
        samples: count,
        violations,
        max_normalized_violation: max_violation,
        max_tightness_upper: max_tu,
        max_tightness_lower: max_tl,
    })
}
