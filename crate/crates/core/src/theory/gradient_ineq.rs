//! Gradient inequalities for the metric prox-gradient, checked on sampled
//! points along a trace.
//!
//! With `G = Q(x_k - x_plus)` and `Q^{-1} G = x_k - x_plus`, two inequalities
//! must hold for every `y`:
//!
//! * model level (by convexity and subproblem optimality):
//!   `F(y; x_k) >= F_Q(x_plus; x_k) + <G, y - x_k> + 1/2 <Q^{-1} G, G>`
//! * function level (adds the two-sided model error constants):
//!   `F(y) >= F(x_plus) + <G, y - x_k> + (1 - L_U/(2 sigma)) <Q^{-1} G, G>
//!           - (L_L / 2) ||y - x_k||^2`
//!
//! Inexact subsolves perturb both sides; the slack folds in the certified
//! suboptimality `eps` as `eps + sqrt(2 eps sigma_max) * reach`.

use serde_json::json;

use super::{step_contexts, CheckMode, CheckReport, ViolationTracker};
use crate::driver::Trace;
use crate::error::Result;
use crate::exec::{map_indexed, ExecMode};
use crate::problem::CompositeProblem;
use crate::sampling::{rng_for, ProbeRegion};
use std::sync::Arc;

pub fn check_gradient_inequality(
    problem: &Arc<CompositeProblem>,
    trace: &Trace,
    region: &ProbeRegion,
    samples_per_step: usize,
    max_steps: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<CheckReport> {
    let contexts = step_contexts(problem, trace)?;
    let stride = (contexts.len() / max_steps.max(1)).max(1);
    let mut tracker = ViolationTracker::new();

    for ctx in contexts.iter().step_by(stride) {
        let d = &ctx.x_plus - &ctx.x_k;
        let g_vec = ctx.metric.apply(&-&d);
        let quad = ctx.metric.quadratic_form(&d); // <Q^{-1} G, G> = ||d||_Q^2
        let fq_plus = ctx.state.eval_prox_model(&ctx.x_plus, &ctx.metric)?;
        let f_plus = ctx.report.f_after;
        let eps = ctx.report.subproblem.suboptimality;
        let sigma = ctx.metric.sigma_min;
        let reg = &trace.constants;

        let outcomes = map_indexed(mode, samples_per_step, |i| -> Result<[(f64, f64); 2]> {
            let mut rng = rng_for(seed ^ ((ctx.index as u64) << 24), i as u64);
            let y = region.sample(&mut rng);
            let dy = &y - &ctx.x_k;
            let inexact = eps + (2.0 * eps * ctx.metric.sigma_max).sqrt() * (dy.norm() + d.norm());

            // model-level inequality
            let lhs_m = ctx.state.eval_model(&y)?;
            let rhs_m = fq_plus + g_vec.dot(&dy) + 0.5 * quad;
            let model_pair = if lhs_m.is_finite() {
                let slack = 1e-8 * (1.0 + rhs_m.abs()) + inexact;
                (rhs_m - lhs_m, slack)
            } else {
                (f64::NEG_INFINITY, 0.0)
            };

            // function-level inequality
            let lhs_f = problem.objective(&y)?;
            let rhs_f = f_plus + g_vec.dot(&dy) + (1.0 - reg.l_upper / (2.0 * sigma)) * quad
                - 0.5 * reg.l_lower * dy.norm_squared();
            let fn_pair = if lhs_f.is_finite() {
                let slack = 1e-8 * (1.0 + rhs_f.abs()) + inexact;
                (rhs_f - lhs_f, slack)
            } else {
                (f64::NEG_INFINITY, 0.0)
            };
            Ok([model_pair, fn_pair])
        });
        for outcome in outcomes {
            for (violation, slack) in outcome? {
                if violation.is_finite() {
                    tracker.observe(violation, slack);
                }
            }
        }
    }

    Ok(CheckReport {
        check: "gradient-inequality".into(),
        instance: trace.meta.problem.clone(),
        samples: tracker.samples,
        max_violation: tracker.max_raw,
        verdict: tracker.verdict(),
        mode: CheckMode::Analytic,
        details: json!({
            "steps_checked": contexts.len().div_ceil(stride),
            "samples_per_step": samples_per_step,
        }),
    })
}
