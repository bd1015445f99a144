//! The outer loop: build the model, freeze the curvature block, solve the
//! regularized subproblem, run the predicted/actual ratio test with inner
//! rejection retries, update the scalar weight, and record everything.
//!
//! Per outer iteration the update rules are:
//! reject (`rho < alpha1`): `mu <- nu_inc * mu`, curvature block unchanged;
//! accept with `rho > alpha2`: `mu <- max(mu_min, nu_dec * mu)`;
//! accept with `alpha1 <= rho <= alpha2`: `mu` unchanged.
//!
//! With inexact subproblem solves, the certified suboptimality is subtracted
//! from the predicted decrease before the ratio test, so acceptance is never
//! granted on solver noise.

pub mod trace;

pub use trace::{
    read_trace, read_trace_prefix, write_trace, StepReport, SubproblemSummary, TerminationReason,
    Trace, TraceMeta,
};

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    assemble_curvature, build_model, make_metric_with_bounds, CurvatureBlocks, ModelState,
    ProximalMetric, DEFAULT_SIGN_TOLERANCE,
};
use crate::problem::{CompositeProblem, ConstantRegistry};
use crate::subsolver::{solve_subproblem, DualState, SubproblemCertificate, SubproblemOptions};

/// Schedule for the per-iteration subproblem accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsSchedule {
    /// Solve to the fixed residual tolerance only.
    Exact,
    /// Target suboptimality `coeff / (k+1)^2` at outer iteration `k`.
    InverseSquare { coeff: f64 },
}

impl EpsSchedule {
    pub fn target(&self, outer: usize) -> Option<f64> {
        match self {
            EpsSchedule::Exact => None,
            EpsSchedule::InverseSquare { coeff } => Some(coeff / ((outer + 1) as f64).powi(2)),
        }
    }
}

/// Scalar-weight update policy. `Fixed` keeps `mu` constant across accepted
/// steps (rejections still increase it), which realizes a constant metric
/// `Q = mu I` for rate experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuUpdate {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub version: u32,
    pub mu0: f64,
    pub mu_min: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub nu_inc: f64,
    pub nu_dec: f64,
    pub eps_term: f64,
    /// Scaled by `1 + |F(x_k)|` when testing for a vanishing prediction.
    pub pred_zero_tol: f64,
    pub max_outer: usize,
    pub max_rejections_per_outer: usize,
    pub subproblem_tol: f64,
    pub subproblem_max_iter: usize,
    pub eps_schedule: EpsSchedule,
    pub curvature: bool,
    pub model_decrease_threshold: Option<f64>,
    pub mu_update: MuUpdate,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            version: 1,
            mu0: 1.0,
            mu_min: 1e-6,
            alpha1: 0.1,
            alpha2: 0.75,
            nu_inc: 2.0,
            nu_dec: 0.5,
            eps_term: 1e-8,
            pred_zero_tol: 1e-14,
            max_outer: 500,
            max_rejections_per_outer: 60,
            subproblem_tol: 1e-8,
            subproblem_max_iter: 50_000,
            eps_schedule: EpsSchedule::Exact,
            curvature: true,
            model_decrease_threshold: None,
            mu_update: MuUpdate::Adaptive,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu0 <= 0.0 || self.mu_min <= 0.0 {
            return Err(Error::config("mu0 and mu_min must be positive"));
        }
        if !(0.0 < self.alpha1 && self.alpha1 < self.alpha2 && self.alpha2 < 1.0) {
            return Err(Error::config(format!(
                "need 0 < alpha1 < alpha2 < 1, got alpha1 = {}, alpha2 = {}",
                self.alpha1, self.alpha2
            )));
        }
        if self.nu_inc <= 1.0 || !(0.0 < self.nu_dec && self.nu_dec < 1.0) {
            return Err(Error::config(format!(
                "need nu_inc > 1 > nu_dec > 0, got nu_inc = {}, nu_dec = {}",
                self.nu_inc, self.nu_dec
            )));
        }
        if self.eps_term < 0.0 || self.pred_zero_tol < 0.0 {
            return Err(Error::config("tolerances must be nonnegative"));
        }
        Ok(())
    }
}

/// Metric prox-gradient `Q (x_k - x_plus)`.
pub fn prox_gradient(
    metric: &ProximalMetric,
    x_k: &DVector<f64>,
    x_plus: &DVector<f64>,
) -> DVector<f64> {
    metric.apply(&(x_k - x_plus))
}

/// Model decrease `Delta_k = F(x_k) - inf F_Q(.; x_k)`, over-estimated from a
/// certificate as `pred + suboptimality`.
pub fn model_decrease(pred: f64, suboptimality: f64) -> f64 {
    pred + suboptimality
}

/// Slope bound `sqrt(12 * eta * delta)` with `eta = L_L + sigma_max`,
/// recorded when the model-decrease stopping rule fires.
pub fn slope_bound(delta: f64, l_lower: f64, sigma_max: f64) -> f64 {
    (12.0 * (l_lower + sigma_max) * delta.max(0.0)).sqrt()
}

/// One trial at a fixed metric: subproblem solve plus the ratio-test
/// ingredients. Exposed for tests that need the raw trial quantities.
#[derive(Debug, Clone)]
pub struct Trial {
    pub certificate: SubproblemCertificate,
    pub pred: f64,
    pub pred_adjusted: f64,
    pub act: Option<f64>,
    pub rho: Option<f64>,
    pub prox_grad_norm: f64,
    pub step_norm: f64,
    pub metric_step_norm: f64,
    pub f_plus: Option<f64>,
}

pub fn trial_step(
    state: &ModelState,
    metric: &ProximalMetric,
    opts: &SubproblemOptions,
    warm: Option<&DualState>,
) -> Result<(Trial, DualState)> {
    let (certificate, dual) = solve_subproblem(state, metric, opts, warm)?;
    let x_plus = &certificate.solution;
    let fq = state.eval_prox_model(x_plus, metric)?;
    let pred = state.f_k - fq;
    let pred_adjusted = pred - certificate.suboptimality;
    let d = x_plus - &state.x_k;
    let prox_grad_norm = metric.apply(&-&d).norm();
    let step_norm = d.norm();
    let metric_step_norm = metric.metric_norm(&d);
    let f_plus = state.problem().objective(x_plus)?;
    let (act, rho, f_plus) = if f_plus.is_finite() {
        let act = state.f_k - f_plus;
        let rho = if pred_adjusted != 0.0 {
            Some(act / pred_adjusted)
        } else {
            None
        };
        (Some(act), rho, Some(f_plus))
    } else {
        (None, None, None)
    };
    Ok((
        Trial {
            certificate,
            pred,
            pred_adjusted,
            act,
            rho,
            prox_grad_norm,
            step_norm,
            metric_step_norm,
            f_plus,
        },
        dual,
    ))
}

/// Outcome of one outer iteration.
#[derive(Debug)]
pub enum LoopEvent {
    Accepted(StepReport),
    Terminated(TerminationReason),
}

/// Driver state across outer iterations; [`run`] is the convenience wrapper.
pub struct SolverLoop {
    problem: Arc<CompositeProblem>,
    registry: ConstantRegistry,
    config: SolverConfig,
    x: DVector<f64>,
    f_x: f64,
    mu: f64,
    outer: usize,
    dual: Option<DualState>,
    slope_bound: Option<f64>,
}

impl SolverLoop {
    pub fn new(
        problem: Arc<CompositeProblem>,
        registry: ConstantRegistry,
        x0: DVector<f64>,
        config: SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        let f_x = problem.objective(&x0)?;
        if !f_x.is_finite() {
            return Err(Error::config(format!(
                "starting point must have finite objective, got {f_x}"
            )));
        }
        let mu = config.mu0;
        Ok(SolverLoop {
            problem,
            registry,
            config,
            x: x0,
            f_x,
            mu,
            outer: 0,
            dual: None,
            slope_bound: None,
        })
    }

    pub fn iterate(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn objective_value(&self) -> f64 {
        self.f_x
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn slope_bound_at_stop(&self) -> Option<f64> {
        self.slope_bound
    }

    /// Runs one outer iteration: fresh model and curvature block, then inner
    /// retries until acceptance or a termination rule fires.
    pub fn step(&mut self) -> Result<LoopEvent> {
        let state = build_model(&self.problem, &self.x, DEFAULT_SIGN_TOLERANCE)?;
        let blocks = if self.config.curvature {
            assemble_curvature(&state)?
        } else {
            CurvatureBlocks::zeros(state.dim())
        };
        let eps_target = self.config.eps_schedule.target(self.outer);
        let sub_opts = SubproblemOptions {
            tol: self.config.subproblem_tol,
            target_suboptimality: eps_target,
            max_iter: self.config.subproblem_max_iter,
        };

        let mut rejected_mus: Vec<f64> = Vec::new();
        loop {
            // curvature block is frozen across the retries of this iteration
            let metric = make_metric_with_bounds(
                self.mu,
                blocks.h_plus.clone(),
                blocks.lambda_min,
                blocks.lambda_max,
            )?;
            let (trial, dual) = trial_step(&state, &metric, &sub_opts, self.dual.as_ref())?;

            if !trial.certificate.converged {
                // unreliable trial: retry with a heavier metric
                if rejected_mus.len() >= self.config.max_rejections_per_outer {
                    return Ok(LoopEvent::Terminated(TerminationReason::MaxRejections));
                }
                rejected_mus.push(self.mu);
                self.mu *= self.config.nu_inc;
                continue;
            }

            let pred_floor = self.config.pred_zero_tol * (1.0 + self.f_x.abs());
            if trial.pred_adjusted <= pred_floor {
                return Ok(LoopEvent::Terminated(TerminationReason::PredZero));
            }
            if trial.prox_grad_norm <= self.config.eps_term {
                return Ok(LoopEvent::Terminated(TerminationReason::ProxGradSmall));
            }
            if let Some(threshold) = self.config.model_decrease_threshold {
                let delta = model_decrease(trial.pred, trial.certificate.suboptimality);
                if delta <= threshold {
                    self.slope_bound =
                        Some(slope_bound(delta, self.registry.l_lower, metric.sigma_max));
                    return Ok(LoopEvent::Terminated(TerminationReason::ModelDecreaseSmall));
                }
            }
            let (Some(act), Some(rho), Some(f_plus)) = (trial.act, trial.rho, trial.f_plus) else {
                return Ok(LoopEvent::Terminated(TerminationReason::Diverged));
            };

            if rho < self.config.alpha1 {
                if rejected_mus.len() >= self.config.max_rejections_per_outer {
                    return Ok(LoopEvent::Terminated(TerminationReason::MaxRejections));
                }
                rejected_mus.push(self.mu);
                self.mu *= self.config.nu_inc;
                continue;
            }

            // accepted
            let report = StepReport {
                outer: self.outer,
                mu: self.mu,
                rejections: rejected_mus.len(),
                rejected_mus: rejected_mus.clone(),
                pred: trial.pred,
                pred_adjusted: trial.pred_adjusted,
                act,
                rho,
                accepted: true,
                step_norm: trial.step_norm,
                metric_step_norm: trial.metric_step_norm,
                prox_grad_norm: trial.prox_grad_norm,
                sigma_min: metric.sigma_min,
                sigma_max: metric.sigma_max,
                f_before: self.f_x,
                f_after: f_plus,
                subproblem: SubproblemSummary {
                    kkt_residual: trial.certificate.kkt_residual,
                    suboptimality: trial.certificate.suboptimality,
                    iterations: trial.certificate.iterations,
                    converged: trial.certificate.converged,
                    slow_path: trial.certificate.slow_path,
                },
                x_after: trial.certificate.solution.iter().copied().collect(),
            };
            self.x = trial.certificate.solution.clone();
            self.f_x = f_plus;
            self.dual = Some(dual);
            if self.config.mu_update == MuUpdate::Adaptive && rho > self.config.alpha2 {
                self.mu = self.config.mu_min.max(self.config.nu_dec * self.mu);
            }
            self.outer += 1;
            return Ok(LoopEvent::Accepted(report));
        }
    }
}

/// Run metadata carried into the trace header.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub problem: String,
    pub seed: u64,
    pub f_star: Option<f64>,
}

/// Runs the full loop and collects the trace.
pub fn run(
    problem: &Arc<CompositeProblem>,
    registry: &ConstantRegistry,
    x0: &DVector<f64>,
    config: &SolverConfig,
    meta: RunMeta,
) -> Result<Trace> {
    run_impl(
        problem,
        registry,
        x0,
        config,
        meta,
        None::<&mut std::io::Sink>,
    )
}

/// Like [`run`], but additionally streams the trace to `writer` as it is
/// produced: the header up front, each accepted step flushed when it
/// happens, and the end line on termination. Interrupted runs leave a
/// parseable prefix behind.
pub fn run_streamed<W: std::io::Write>(
    problem: &Arc<CompositeProblem>,
    registry: &ConstantRegistry,
    x0: &DVector<f64>,
    config: &SolverConfig,
    meta: RunMeta,
    writer: &mut W,
) -> Result<Trace> {
    run_impl(problem, registry, x0, config, meta, Some(writer))
}

fn run_impl<W: std::io::Write>(
    problem: &Arc<CompositeProblem>,
    registry: &ConstantRegistry,
    x0: &DVector<f64>,
    config: &SolverConfig,
    meta: RunMeta,
    writer: Option<&mut W>,
) -> Result<Trace> {
    let start = Instant::now();
    let trace_meta = TraceMeta {
        problem: meta.problem,
        seed: meta.seed,
        f_star: meta.f_star,
    };
    let x0_vec: Vec<f64> = x0.iter().copied().collect();
    let mut stream = match writer {
        Some(w) => Some(trace::TraceWriter::new(
            w,
            &trace_meta,
            config,
            registry,
            &x0_vec,
        )?),
        None => None,
    };
    let mut solver = SolverLoop::new(
        Arc::clone(problem),
        registry.clone(),
        x0.clone(),
        config.clone(),
    )?;
    let mut steps: Vec<StepReport> = Vec::new();
    let mut termination = TerminationReason::MaxOuter;
    while solver.outer < config.max_outer {
        match solver.step()? {
            LoopEvent::Accepted(report) => {
                if let Some(stream) = stream.as_mut() {
                    stream.step(&report)?;
                }
                steps.push(report);
            }
            LoopEvent::Terminated(reason) => {
                termination = reason;
                break;
            }
        }
    }
    let final_point: Vec<f64> = solver.x.iter().copied().collect();
    if let Some(stream) = stream {
        stream.finish(termination, &final_point, solver.f_x, solver.slope_bound)?;
    }
    Ok(Trace {
        meta: trace_meta,
        config: config.clone(),
        constants: registry.clone(),
        x0: x0_vec,
        steps,
        termination,
        final_point,
        final_objective: solver.f_x,
        slope_bound: solver.slope_bound,
        wall_time: Some(start.elapsed().as_secs_f64()),
    })
}
