//! Post-hoc verification of the inequalities, bounds, and rates a run is
//! expected to satisfy. Checkers are read-only over traces and problem
//! oracles, deterministic given the trace and seed, and embarrassingly
//! parallel across samples.
//!
//! Every inequality check carries additive slack `1e-8 * (1 + |rhs|)`; a
//! check that fails only within slack is reported `tight`, not `failed`.

mod gradient_ineq;
mod hessian;
mod linearization;
mod rate;

pub use gradient_ineq::check_gradient_inequality;
pub use hessian::{check_hessian_model_bounds, default_scales, HessianBoundsReport};
pub use linearization::{compare_linearizations, LinearizationComparison};
pub use rate::{fit_qlinear_rate, FStar, RateFit};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::driver::{StepReport, Trace};
use crate::error::{Error, Result};
use crate::model::{
    assemble_curvature, build_model, make_metric_with_bounds, CurvatureBlocks, ModelState,
    ProximalMetric, DEFAULT_SIGN_TOLERANCE,
};
use crate::problem::CompositeProblem;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Violated only within the rounding slack.
    Tight,
    Failed,
    /// Preconditions not met (short tail, no error bound, nothing to check).
    Inconclusive,
}

/// How reference values (like `F*`) were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    Analytic,
    Indicative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub instance: String,
    pub samples: usize,
    pub max_violation: f64,
    pub verdict: Verdict,
    pub mode: CheckMode,
    pub details: Value,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        !matches!(self.verdict, Verdict::Failed)
    }
}

/// Tracks the worst observed violation against per-sample slack.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ViolationTracker {
    pub max_raw: f64,
    pub beyond_slack: bool,
    pub within_slack: bool,
    pub samples: usize,
}

impl ViolationTracker {
    pub fn new() -> Self {
        ViolationTracker {
            max_raw: 0.0,
            beyond_slack: false,
            within_slack: false,
            samples: 0,
        }
    }

    pub fn observe(&mut self, raw_violation: f64, slack: f64) {
        self.samples += 1;
        if raw_violation > 0.0 {
            self.max_raw = self.max_raw.max(raw_violation);
            if raw_violation > slack {
                self.beyond_slack = true;
            } else {
                self.within_slack = true;
            }
        }
    }

    pub fn verdict(&self) -> Verdict {
        if self.beyond_slack {
            Verdict::Failed
        } else if self.within_slack {
            Verdict::Tight
        } else {
            Verdict::Pass
        }
    }
}

/// Rebuilt per-step context: the iterate chain, the frozen model, and the
/// metric the step actually used (from the recorded `mu` and the
/// deterministic curvature rebuild).
pub struct StepContext {
    pub index: usize,
    pub x_k: DVector<f64>,
    pub x_plus: DVector<f64>,
    pub state: ModelState,
    pub metric: ProximalMetric,
    pub report: StepReport,
}

/// Rebuilds the model and metric at every accepted step of a trace.
pub fn step_contexts(problem: &Arc<CompositeProblem>, trace: &Trace) -> Result<Vec<StepContext>> {
    let mut contexts = Vec::with_capacity(trace.steps.len());
    let mut x_k = DVector::from_vec(trace.x0.clone());
    for (index, report) in trace.steps.iter().enumerate() {
        let state = build_model(problem, &x_k, DEFAULT_SIGN_TOLERANCE)?;
        let blocks = if trace.config.curvature {
            assemble_curvature(&state)?
        } else {
            CurvatureBlocks::zeros(state.dim())
        };
        let metric = make_metric_with_bounds(
            report.mu,
            blocks.h_plus.clone(),
            blocks.lambda_min,
            blocks.lambda_max,
        )?;
        if (metric.sigma_min - report.sigma_min).abs() > 1e-7 * (1.0 + report.sigma_min) {
            return Err(Error::numerical(format!(
                "metric rebuild mismatch at step {index}: sigma_min {} vs recorded {}",
                metric.sigma_min, report.sigma_min
            )));
        }
        let x_plus = DVector::from_vec(report.x_after.clone());
        contexts.push(StepContext {
            index,
            x_k: x_k.clone(),
            x_plus: x_plus.clone(),
            state,
            metric,
            report: report.clone(),
        });
        x_k = x_plus;
    }
    Ok(contexts)
}

/// Sufficient decrease on accepted steps:
/// `F(x_k) - F(x_{k+1}) >= alpha1 * (1/2 ||d||_Q^2 - 2 eps_k)`,
/// asserted from the trace within 1e-9 slack. With exact subsolves the
/// `eps_k` term is negligible and this is the plain decrease inequality.
pub fn check_sufficient_decrease(trace: &Trace) -> CheckReport {
    let alpha1 = trace.config.alpha1;
    let mut tracker = ViolationTracker::new();
    for step in &trace.steps {
        let eps = step.subproblem.suboptimality;
        let rhs = alpha1 * (0.5 * step.metric_step_norm.powi(2) - 2.0 * eps);
        let lhs = step.f_before - step.f_after;
        let slack = 1e-9 * (1.0 + step.f_before.abs());
        tracker.observe(rhs - lhs, slack);
    }
    CheckReport {
        check: "sufficient-decrease".into(),
        instance: trace.meta.problem.clone(),
        samples: tracker.samples,
        max_violation: tracker.max_raw,
        verdict: tracker.verdict(),
        mode: CheckMode::Analytic,
        details: json!({ "alpha1": alpha1 }),
    }
}

/// Uniform spectral bounds: every recorded metric satisfies
/// `min(mu0, mu_min) <= sigma_min` and
/// `sigma_max <= max(mu0, nu_inc * L_U / (2 - alpha1)) + curvature_cap`,
/// and the curvature block itself stays under the cap
/// (`sigma_max - mu = lambda_max(H^+) <= curvature_cap`).
pub fn check_spectral_bounds(trace: &Trace) -> CheckReport {
    let cfg = &trace.config;
    let reg = &trace.constants;
    let q_lo = cfg.mu0.min(cfg.mu_min);
    let q_hi = cfg.mu0.max(cfg.nu_inc * reg.l_upper / (2.0 - cfg.alpha1)) + reg.curvature_cap;
    let mut tracker = ViolationTracker::new();
    for step in &trace.steps {
        let slack_lo = 1e-8 * (1.0 + q_lo.abs());
        let slack_hi = 1e-8 * (1.0 + q_hi.abs());
        tracker.observe(q_lo - step.sigma_min, slack_lo);
        tracker.observe(step.sigma_max - q_hi, slack_hi);
        // mu itself never drops below the floor
        tracker.observe(q_lo - step.mu, slack_lo);
        // curvature block under its cap
        let slack_cap = 1e-8 * (1.0 + reg.curvature_cap);
        tracker.observe(step.sigma_max - step.mu - reg.curvature_cap, slack_cap);
    }
    CheckReport {
        check: "spectral".into(),
        instance: trace.meta.problem.clone(),
        samples: tracker.samples,
        max_violation: tracker.max_raw,
        verdict: tracker.verdict(),
        mode: CheckMode::Analytic,
        details: json!({ "q_lo": q_lo, "q_hi": q_hi }),
    }
}

fn ceil_plus(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        x.ceil() as usize
    }
}

/// Finite rejections: per outer iteration, the observed rejection count is at
/// most `ceil(log(psi / mu_start) / log(nu_inc))_+` with
/// `psi = L_U / (2 - alpha1)`.
pub fn check_finite_rejections(trace: &Trace) -> CheckReport {
    let cfg = &trace.config;
    let psi = trace.constants.l_upper / (2.0 - cfg.alpha1);
    let mut tracker = ViolationTracker::new();
    let mut worst_bound = 0usize;
    for step in &trace.steps {
        let mu_start = step.rejected_mus.first().copied().unwrap_or(step.mu);
        let bound = if psi <= 0.0 || mu_start >= psi {
            0
        } else {
            ceil_plus((psi / mu_start).ln() / cfg.nu_inc.ln())
        };
        worst_bound = worst_bound.max(bound);
        tracker.observe(step.rejections as f64 - bound as f64, 0.0);
    }
    CheckReport {
        check: "finite-rejections".into(),
        instance: trace.meta.problem.clone(),
        samples: tracker.samples,
        max_violation: tracker.max_raw,
        verdict: tracker.verdict(),
        mode: CheckMode::Analytic,
        details: json!({ "psi": psi, "worst_bound": worst_bound }),
    }
}

/// Descent complexity over accepted prefixes:
/// `(1/N) sum ||G_k||^2 <= 2 q_hi Delta_F / (alpha1 N)` and the min-form
/// bound, for every prefix `N` of accepted steps.
pub fn check_complexity(trace: &Trace, f_star: FStar) -> CheckReport {
    let cfg = &trace.config;
    let reg = &trace.constants;
    let (fstar, mode) = rate::resolve_f_star(trace, f_star);
    let q_hi = cfg.mu0.max(cfg.nu_inc * reg.l_upper / (2.0 - cfg.alpha1)) + reg.curvature_cap;
    let delta_f = trace
        .steps
        .first()
        .map(|s| s.f_before - fstar)
        .unwrap_or(0.0);

    let mut tracker = ViolationTracker::new();
    let mut sum_sq = 0.0;
    let mut min_g = f64::INFINITY;
    for (idx, step) in trace.steps.iter().enumerate() {
        let n = (idx + 1) as f64;
        sum_sq += step.prox_grad_norm.powi(2);
        min_g = min_g.min(step.prox_grad_norm);
        let bound = 2.0 * q_hi * delta_f / (cfg.alpha1 * n);
        let slack = 1e-8 * (1.0 + bound.abs());
        tracker.observe(sum_sq / n - bound, slack);
        tracker.observe(min_g * min_g - bound, slack);
    }
    let verdict = if trace.steps.is_empty() {
        Verdict::Pass // vacuous: nothing accepted, nothing bounded
    } else {
        tracker.verdict()
    };
    CheckReport {
        check: "complexity".into(),
        instance: trace.meta.problem.clone(),
        samples: tracker.samples,
        max_violation: tracker.max_raw,
        verdict,
        mode,
        details: json!({ "q_hi": q_hi, "delta_f": delta_f }),
    }
}

/// Two-sided model error sampled along the trajectory: rebuilds the model at
/// (up to) `max_states` accepted iterates and checks the bound on
/// `samples_per_state` points from `region` around each.
pub fn check_model_error(
    problem: &Arc<CompositeProblem>,
    trace: &Trace,
    region: &crate::sampling::ProbeRegion,
    max_states: usize,
    samples_per_state: usize,
    seed: u64,
    mode: crate::exec::ExecMode,
) -> Result<CheckReport> {
    let mut points: Vec<DVector<f64>> = vec![DVector::from_vec(trace.x0.clone())];
    points.extend(
        trace
            .steps
            .iter()
            .map(|s| DVector::from_vec(s.x_after.clone())),
    );
    let stride = (points.len() / max_states.max(1)).max(1);
    let mut tracker = ViolationTracker::new();
    for (which, x_k) in points.iter().step_by(stride).enumerate() {
        let state = build_model(problem, x_k, DEFAULT_SIGN_TOLERANCE)?;
        let samples: Vec<DVector<f64>> = (0..samples_per_state)
            .map(|i| {
                let mut rng = crate::sampling::rng_for(seed ^ (which as u64) << 32, i as u64);
                region.sample(&mut rng)
            })
            .collect();
        let report =
            crate::model::model_error_bounds_check(&state, &trace.constants, &samples, mode)?;
        // the bounds check already folds in its slack; re-track its verdict
        tracker.samples += report.samples;
        if report.violations > 0 {
            tracker.beyond_slack = true;
            tracker.max_raw = tracker.max_raw.max(report.max_normalized_violation);
        }
    }
    Ok(CheckReport {
        check: "model-error".into(),
        instance: trace.meta.problem.clone(),
        samples: tracker.samples,
        max_violation: tracker.max_raw,
        verdict: tracker.verdict(),
        mode: CheckMode::Analytic,
        details: json!({
            "l_upper": trace.constants.l_upper,
            "l_lower": trace.constants.l_lower,
        }),
    })
}
