//! Q-linear rate fitting over trace tails.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CheckMode, CheckReport, Verdict};
use crate::driver::Trace;
use nalgebra::DVector;

/// Where the reference optimal value comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FStar {
    Analytic(f64),
    /// `min F observed - 10 * eps_term`; resulting checks are indicative.
    BestObserved,
}

pub(crate) fn resolve_f_star(trace: &Trace, f_star: FStar) -> (f64, CheckMode) {
    match f_star {
        FStar::Analytic(v) => (v, CheckMode::Analytic),
        FStar::BestObserved => {
            let best = trace
                .steps
                .iter()
                .map(|s| s.f_after)
                .fold(trace.final_objective, f64::min);
            (best - 10.0 * trace.config.eps_term, CheckMode::Indicative)
        }
    }
}

/// Fitted tail contraction data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    /// First accepted-step index of the fitted tail.
    pub tail_start: usize,
    /// Per-step gap ratios `(F_{k+1} - F*) / (F_k - F*)` over the tail.
    pub ratios: Vec<f64>,
    /// Geometric mean of the tail ratios.
    pub q_hat: f64,
    pub max_ratio: f64,
    /// Theoretical contraction factor from the observed spectral range.
    pub q_star: f64,
    pub kappa: f64,
    pub kappa_bar: f64,
    pub conclusive: bool,
    pub mode: CheckMode,
}

/// Ratio of the largest to smallest tail `kappa` beyond which the step-size
/// error bound is considered unverified (flat-valley guard).
const KAPPA_SPREAD_LIMIT: f64 = 25.0;
/// Absolute cap on the tail `kappa`; beyond it the error bound is treated as
/// numerically unverified (flat valleys drive `kappa` to infinity).
const KAPPA_CAP: f64 = 1e3;
/// Acceptance slack on `q_hat <= q_star`.
const RATE_SLACK: f64 = 0.05;

/// Fits the tail contraction factor of a trace and compares it against the
/// theoretical factor
/// `q* = 1 - min(1, (2 - L_U/q_lo) / (q_hi (2 + L_L) kappa_bar^2))`,
/// where `q_lo`/`q_hi` are the observed spectral extremes over the tail and
/// `kappa` is estimated from `||x_k - x*|| / ||G_k||` with `x*` the final
/// iterate. Fitting needs at least 10 tail steps (the last 25% of accepted
/// steps, or 10, whichever is larger); otherwise the fit is inconclusive.
pub fn fit_qlinear_rate(trace: &Trace, f_star: FStar) -> (RateFit, CheckReport) {
    let (fstar, mode) = resolve_f_star(trace, f_star);
    let n = trace.steps.len();
    let tail_len = (n / 4).max(10);
    let inconclusive = |reason: &str| {
        let fit = RateFit {
            tail_start: n.saturating_sub(tail_len),
            ratios: vec![],
            q_hat: f64::NAN,
            max_ratio: f64::NAN,
            q_star: f64::NAN,
            kappa: f64::NAN,
            kappa_bar: f64::NAN,
            conclusive: false,
            mode,
        };
        let report = CheckReport {
            check: "qlinear-rate".into(),
            instance: trace.meta.problem.clone(),
            samples: 0,
            max_violation: 0.0,
            verdict: Verdict::Inconclusive,
            mode,
            details: json!({ "reason": reason }),
        };
        (fit, report)
    };

    if n < tail_len || tail_len < 10 {
        return inconclusive("tail too short");
    }
    let tail_start = n - tail_len;
    let x_star = DVector::from_vec(trace.final_point.clone());

    let mut ratios = Vec::with_capacity(tail_len);
    let mut kappas = Vec::with_capacity(tail_len);
    let mut x_k = DVector::from_vec(if tail_start == 0 {
        trace.x0.clone()
    } else {
        trace.steps[tail_start - 1].x_after.clone()
    });
    for step in &trace.steps[tail_start..] {
        let gap_before = step.f_before - fstar;
        let gap_after = step.f_after - fstar;
        if gap_before <= 0.0 || gap_after < 0.0 {
            return inconclusive("nonpositive gap in tail");
        }
        ratios.push(gap_after / gap_before);
        if step.prox_grad_norm > 0.0 {
            kappas.push((&x_k - &x_star).norm() / step.prox_grad_norm);
        }
        x_k = DVector::from_vec(step.x_after.clone());
    }
    if ratios.iter().any(|&r| r <= 0.0) {
        return inconclusive("vanishing gap in tail");
    }
    if kappas.is_empty() {
        return inconclusive("no usable prox-gradient norms in tail");
    }
    let kappa_min = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa = kappas.iter().cloned().fold(0.0_f64, f64::max);
    if (kappa_min > 0.0 && kappa / kappa_min > KAPPA_SPREAD_LIMIT) || kappa > KAPPA_CAP {
        return inconclusive("step-size error bound not verified over the tail");
    }
    let kappa_bar = kappa.max(1.0);

    let q_lo = trace.steps[tail_start..]
        .iter()
        .map(|s| s.sigma_min)
        .fold(f64::INFINITY, f64::min);
    let q_hi = trace.steps[tail_start..]
        .iter()
        .map(|s| s.sigma_max)
        .fold(0.0_f64, f64::max);
    let reg = &trace.constants;
    // contraction is only certifiable when the spectral floor dominates the
    // acceptance threshold, otherwise the contraction factor is vacuous
    if q_lo <= reg.l_upper / (2.0 - trace.config.alpha1) {
        return inconclusive("observed spectral floor does not dominate L_U / (2 - alpha1)");
    }
    let numerator = 2.0 - reg.l_upper / q_lo;
    let q_star = 1.0 - (numerator / (q_hi * (2.0 + reg.l_lower) * kappa_bar * kappa_bar)).min(1.0);

    let q_hat = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    let max_ratio = ratios.iter().cloned().fold(0.0_f64, f64::max);

    let violation = q_hat - q_star;
    let verdict = if violation <= 0.0 {
        Verdict::Pass
    } else if violation <= RATE_SLACK {
        Verdict::Tight
    } else {
        Verdict::Failed
    };

    let fit = RateFit {
        tail_start,
        ratios: ratios.clone(),
        q_hat,
        max_ratio,
        q_star,
        kappa,
        kappa_bar,
        conclusive: true,
        mode,
    };
    let report = CheckReport {
        check: "qlinear-rate".into(),
        instance: trace.meta.problem.clone(),
        samples: ratios.len(),
        max_violation: violation.max(0.0),
        verdict,
        mode,
        details: json!({
            "q_hat": q_hat,
            "q_star": q_star,
            "kappa_bar": kappa_bar,
            "tail_start": tail_start,
        }),
    };
    (fit, report)
}
