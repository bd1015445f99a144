//! Error envelope of the Hessian-augmented model over shrinking step scales.
//!
//! The joint second-order model keeps `h` at the inner linearization, keeps
//! `R` exact inside the first-order `s` term, and adds `1/2 d^T H^+ d` with
//! `H^+` the PSD projection of the assembled curvature:
//!
//! ```text
//! F_{H+}(x) = g(x) + h(C_k + J_C d) + s(R_k) + grad s(R_k)^T (R(x) - R_k)
//!             + 1/2 d^T H^+ d
//! ```
//!
//! The residual `F(x) - F_{H+}(x)` is bounded above by `M3 ||d||^3 + M4
//! ||d||^4` and below by the same envelope minus the projection-gap term
//! `1/2 d^T H^- d`, with
//!
//! ```text
//! M3 = L_h gamma_C / 6 + beta_h L_C beta_C / 2
//!      + beta_s L_R beta_R / 2 + gamma_s L_R^3 / 6
//! M4 = beta_h beta_C^2 / 8 + beta_h L_C gamma_C / 6 + beta_s beta_R^2 / 8
//! ```
//!
//! On instances with `H^- = 0` the residual must decay at cubic order; the
//! report carries the fitted log-log slope over the two smallest scales.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{assemble_curvature, build_model, DEFAULT_SIGN_TOLERANCE};
use crate::problem::CompositeProblem;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize)]
pub struct HessianBoundsReport {
    pub m3: f64,
    pub m4: f64,
    pub gap_norm: f64,
    pub samples: usize,
    pub violations: usize,
    pub max_violation: f64,
    /// Log-log slope of |residual| vs scale over the two smallest scales,
    /// `None` when the residual sits at the rounding floor.
    pub tail_slope: Option<f64>,
    /// Slope over the full scale range.
    pub full_slope: Option<f64>,
    /// Per (direction, scale) residuals, row-major by direction.
    pub residuals: Vec<Vec<f64>>,
}

struct EnvelopeConstants {
    m3: f64,
    m4: f64,
}

fn envelope_constants(problem: &CompositeProblem) -> Result<EnvelopeConstants> {
    let missing = |what: &str| Error::config(format!("Hessian envelope needs {what}"));
    let l_h = problem.h.lipschitz().ok_or_else(|| missing("L_h"))?;
    let beta_h = problem
        .h
        .gradient_lipschitz()
        .ok_or_else(|| missing("a smooth h with beta_h"))?;
    let l_c = problem.c.value_lipschitz().ok_or_else(|| missing("L_C"))?;
    let beta_c = problem.c.jacobian_lipschitz();
    let gamma_c = problem
        .c
        .hessian_lipschitz()
        .ok_or_else(|| missing("gamma_C"))?;
    let beta_s = problem.s.jacobian_lipschitz();
    let gamma_s = problem
        .s
        .hessian_lipschitz()
        .ok_or_else(|| missing("gamma_s"))?;
    let mut l_r_sq = 0.0;
    let mut beta_r_sq = 0.0;
    for (i, piece) in problem.channels.iter().enumerate() {
        let l = piece
            .lipschitz()
            .ok_or_else(|| missing(&format!("L for channel {i}")))?;
        let beta = piece
            .gradient_lipschitz()
            .ok_or_else(|| missing(&format!("beta for channel {i}")))?;
        l_r_sq += l * l;
        beta_r_sq += beta * beta;
    }
    let l_r = l_r_sq.sqrt();
    let beta_r = beta_r_sq.sqrt();

    let m3 = l_h * gamma_c / 6.0
        + beta_h * l_c * beta_c / 2.0
        + beta_s * l_r * beta_r / 2.0
        + gamma_s * l_r.powi(3) / 6.0;
    let m4 = beta_h * beta_c * beta_c / 8.0
        + beta_h * l_c * gamma_c / 6.0
        + beta_s * beta_r * beta_r / 8.0;
    Ok(EnvelopeConstants { m3, m4 })
}

/// Checks the Hessian-augmented model error envelope at `x_k` along the given
/// unit `directions`, at each of the (descending) `scales`.
pub fn check_hessian_model_bounds(
    problem: &Arc<CompositeProblem>,
    x_k: &DVector<f64>,
    directions: &[DVector<f64>],
    scales: &[f64],
    curvature_scale_floor: f64,
) -> Result<HessianBoundsReport> {
    let consts = envelope_constants(problem)?;
    let state = build_model(problem, x_k, DEFAULT_SIGN_TOLERANCE)?;
    let blocks = assemble_curvature(&state)?;
    let gap_norm = blocks.gap.norm();

    let model_at = |x: &DVector<f64>| -> Result<f64> {
        let d = x - x_k;
        let gv = problem.g.value(x)?;
        if gv == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let hv = problem.h.finite_value(&(&state.c_k + &state.j_c * &d))?;
        let r_x = problem.channel_values(x)?;
        let s_lin = state.s_k + state.grad_s.dot(&(&r_x - &state.r_k));
        let quad = 0.5 * (&blocks.h_plus * &d).dot(&d);
        Ok(gv + hv + s_lin + quad)
    };

    let mut residuals: Vec<Vec<f64>> = Vec::with_capacity(directions.len());
    let mut violations = 0;
    let mut max_violation = 0.0_f64;
    let mut samples = 0;
    for u in directions {
        let unit = u / u.norm();
        let gap_term = 0.5 * (&blocks.gap * &unit).dot(&unit);
        let mut row = Vec::with_capacity(scales.len());
        for &delta in scales {
            let x = x_k + &unit * delta;
            let f = problem.objective(&x)?;
            let model = model_at(&x)?;
            let residual = f - model;
            row.push(residual);
            samples += 1;
            let envelope = consts.m3 * delta.powi(3) + consts.m4 * delta.powi(4);
            let slack = 1e-8 * (1.0 + f.abs()) + 1e-14;
            let upper_violation = residual - envelope - slack;
            let lower_violation = (-gap_term * delta * delta - envelope - slack) - residual;
            for v in [upper_violation, lower_violation] {
                if v > 0.0 {
                    violations += 1;
                    max_violation = max_violation.max(v);
                }
            }
        }
        residuals.push(row);
    }

    // log-log slope of max |residual| across directions, per scale
    let floor = curvature_scale_floor;
    let level: Vec<f64> = (0..scales.len())
        .map(|j| {
            residuals
                .iter()
                .map(|row| row[j].abs())
                .fold(0.0_f64, f64::max)
        })
        .collect();
    let slope_over = |idx: &[usize]| -> Option<f64> {
        if idx.iter().any(|&j| level[j] <= floor) {
            return None;
        }
        let pts: Vec<(f64, f64)> = idx
            .iter()
            .map(|&j| (scales[j].ln(), level[j].ln()))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        (denom.abs() > 1e-300).then(|| (n * sxy - sx * sy) / denom)
    };
    let k = scales.len();
    let tail_slope = (k >= 2).then(|| slope_over(&[k - 2, k - 1])).flatten();
    let full_slope = (k >= 2)
        .then(|| slope_over(&(0..k).collect::<Vec<_>>()))
        .flatten();

    Ok(HessianBoundsReport {
        m3: consts.m3,
        m4: consts.m4,
        gap_norm,
        samples,
        violations,
        max_violation,
        tail_slope,
        full_slope,
        residuals,
    })
}

/// Default shrinking scales `1e-1 ... 1e-4`.
pub fn default_scales() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
