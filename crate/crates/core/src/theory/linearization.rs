//! Comparison of the three linearization levels of `s(R(x))` on
//! smooth-channel problems, against their quadratic error bounds.
//!
//! With `J` the channel Jacobian at `x_k` and `Delta = R(x) - R(x_k)`:
//!
//! * full:       `s(R_k) + grad s(R_k)^T (J d)`, error bound
//!   `(beta_s L_R^2 / 2 + L_s beta_R / 2) ||d||^2`
//! * inner-only: `s(R_k + J d)`, error bound `(L_s beta_R / 2) ||d||^2`
//! * outer-only: `s(R_k) + grad s(R_k)^T Delta`, error bound
//!   `(beta_s L_R^2 / 2) ||d||^2`
//!
//! Here `beta_R` stacks the gradient-Lipschitz constants of all channels
//! (every channel must be C^1 with a declared constant).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_slice, ExecMode};
use crate::problem::CompositeProblem;

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationSample {
    pub step_norm: f64,
    pub e_all: f64,
    pub e_in: f64,
    pub e_out: f64,
    pub bound_all: f64,
    pub bound_in: f64,
    pub bound_out: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationComparison {
    pub samples: Vec<LinearizationSample>,
    pub coeff_all: f64,
    pub coeff_in: f64,
    pub coeff_out: f64,
    pub violations: usize,
    pub max_violation: f64,
    pub max_abs_e_in: f64,
    pub max_abs_e_out: f64,
}

/// Evaluates the three linearizations of `s(R(x))` at `x_k` on the given
/// sample points. Every channel must carry a gradient oracle and a declared
/// gradient-Lipschitz constant.
pub fn compare_linearizations(
    problem: &CompositeProblem,
    x_k: &DVector<f64>,
    samples: &[DVector<f64>],
    mode: ExecMode,
) -> Result<LinearizationComparison> {
    let n = problem.n_channels();
    let m = problem.dim();
    let mut beta_r_sq = 0.0;
    let mut jac = DMatrix::zeros(n, m);
    for (i, piece) in problem.channels.iter().enumerate() {
        if !piece.is_smooth() {
            return Err(Error::config(format!(
                "channel {i} (`{}`) has no gradient oracle; the comparison needs C^1 channels",
                piece.label()
            )));
        }
        let beta = piece.gradient_lipschitz().ok_or_else(|| {
            Error::config(format!(
                "channel {i} (`{}`) has no gradient-Lipschitz constant",
                piece.label()
            ))
        })?;
        beta_r_sq += beta * beta;
        let grad = piece.gradient(x_k).unwrap()?;
        jac.row_mut(i).copy_from(&grad.transpose());
    }
    let beta_r = beta_r_sq.sqrt();
    let l_r = problem
        .channels
        .iter()
        .enumerate()
        .map(|(i, piece)| {
            piece
                .lipschitz()
                .ok_or_else(|| Error::config(format!("channel {i} has no Lipschitz constant")))
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .map(|l| l * l)
        .sum::<f64>()
        .sqrt();
    let beta_s = problem.s.jacobian_lipschitz();
    let l_s = problem
        .s
        .value_lipschitz()
        .ok_or_else(|| Error::config("s needs a declared value-Lipschitz constant".to_string()))?;

    let coeff_out = 0.5 * beta_s * l_r * l_r;
    let coeff_in = 0.5 * l_s * beta_r;
    let coeff_all = coeff_out + coeff_in;

    let r_k = problem.channel_values(x_k)?;
    let s_k = problem.s.value(&r_k)?[0];
    let grad_s = problem.s.scalar_gradient(&r_k)?;

    let rows: Vec<Result<LinearizationSample>> = map_slice(mode, samples, |x| {
        let d = x - x_k;
        let d2 = d.norm_squared();
        let r_x = problem.channel_values(x)?;
        let s_true = problem.s.value(&r_x)?[0];
        let jd = &jac * &d;
        let f_all = s_k + grad_s.dot(&jd);
        let f_in = problem.s.value(&(&r_k + &jd))?[0];
        let f_out = s_k + grad_s.dot(&(&r_x - &r_k));
        Ok(LinearizationSample {
            step_norm: d2.sqrt(),
            e_all: s_true - f_all,
            e_in: s_true - f_in,
            e_out: s_true - f_out,
            bound_all: coeff_all * d2,
            bound_in: coeff_in * d2,
            bound_out: coeff_out * d2,
        })
    });

    let mut out = Vec::with_capacity(samples.len());
    let mut violations = 0;
    let mut max_violation = 0.0_f64;
    let mut max_abs_e_in = 0.0_f64;
    let mut max_abs_e_out = 0.0_f64;
    for row in rows {
        let r = row?;
        for (e, bound) in [
            (r.e_all, r.bound_all),
            (r.e_in, r.bound_in),
            (r.e_out, r.bound_out),
        ] {
            let slack = 1e-8 * (1.0 + bound);
            let v = e.abs() - bound - slack;
            if v > 0.0 {
                violations += 1;
                max_violation = max_violation.max(v);
            }
        }
        max_abs_e_in = max_abs_e_in.max(r.e_in.abs());
        max_abs_e_out = max_abs_e_out.max(r.e_out.abs());
        out.push(r);
    }

    Ok(LinearizationComparison {
        samples: out,
        coeff_all,
        coeff_in,
        coeff_out,
        violations,
        max_violation,
        max_abs_e_in,
        max_abs_e_out,
    })
}
