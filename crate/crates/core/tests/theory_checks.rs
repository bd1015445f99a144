//! Checker-level identities and guard paths that the acceptance criteria do
//! not already pin down.

use nalgebra::{DMatrix, DVector};

use prox_convex::driver::{trial_step, MuUpdate, RunMeta, SolverConfig};
use prox_convex::theory::{
    check_complexity, check_gradient_inequality, compare_linearizations, step_contexts, FStar,
    Verdict,
};
use prox_convex::zoo::instantiate;
use prox_convex::{
    build_model, fixtures, make_metric, run, ExecMode, SubproblemOptions, DEFAULT_SIGN_TOLERANCE,
};

fn vec1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

// The model-level gradient inequality is tight at y = x_{k+1}: the linear
// and quadratic terms cancel exactly against the prox-model value.
#[test]
fn model_inequality_tight_at_next_iterate() {
    let inst = instantiate("P5", None, 0).unwrap();
    let trace = run(
        &inst.problem,
        &inst.registry,
        &inst.x0,
        &SolverConfig::default(),
        RunMeta::default(),
    )
    .unwrap();
    let contexts = step_contexts(&inst.problem, &trace).unwrap();
    for ctx in contexts.iter().take(4) {
        let d = &ctx.x_plus - &ctx.x_k;
        let g_vec = ctx.metric.apply(&-&d);
        let quad = ctx.metric.quadratic_form(&d);
        let fq_plus = ctx.state.eval_prox_model(&ctx.x_plus, &ctx.metric).unwrap();
        let lhs = ctx.state.eval_model(&ctx.x_plus).unwrap();
        let rhs = fq_plus + g_vec.dot(&d) + 0.5 * quad;
        assert!(
            (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()),
            "identity broken: lhs {lhs} rhs {rhs}"
        );
    }
}

// With Q = t^{-1} I and L_L = L_U = L, the function-level inequality reduces
// to the scalar prox-gradient form
// F(y) >= F(x+) + <G, y - x_k> + (t/2)(2 - L t) ||G||^2 - (L/2)||y - x_k||^2.
#[test]
fn scalar_metric_reduces_to_prox_linear_inequality() {
    let l = 1.7;
    let t = 1.0 / l;
    let (problem, registry) = fixtures::scalar_quadratic(l, 0.3);
    assert_eq!(registry.l_upper, registry.l_lower);
    let x_k = vec1(2.0);
    let state = build_model(&problem, &x_k, DEFAULT_SIGN_TOLERANCE).unwrap();
    let metric = make_metric(1.0 / t, DMatrix::zeros(1, 1)).unwrap();
    let opts = SubproblemOptions::with_tol(1e-14);
    let (trial, _) = trial_step(&state, &metric, &opts, None).unwrap();
    let x_plus = &trial.certificate.solution;
    let d = x_plus - &x_k;
    let g_vec = metric.apply(&-&d);
    let quad = metric.quadratic_form(&d); // <Q^{-1} G, G>
    for y in [-1.0, 0.0, 0.5, 2.5, 4.0] {
        let yv = vec1(y);
        let dy = &yv - &x_k;
        let general = (1.0 - registry.l_upper / (2.0 * metric.sigma_min)) * quad;
        let scalar = 0.5 * t * (2.0 - l * t) * g_vec.norm_squared();
        assert!((general - scalar).abs() <= 1e-12 * (1.0 + scalar.abs()));
        // and the full inequality holds on the true objective
        let lhs = problem.objective(&yv).unwrap();
        let rhs = problem.objective(x_plus).unwrap() + g_vec.dot(&dy) + general
            - 0.5 * registry.l_lower * dy.norm_squared();
        assert!(lhs >= rhs - 1e-10 * (1.0 + rhs.abs()));
    }
}

// Sampled gradient-inequality check over a benchmark trace must not fail.
#[test]
fn gradient_inequality_check_on_p5() {
    let inst = instantiate("P5", None, 3).unwrap();
    let trace = run(
        &inst.problem,
        &inst.registry,
        &inst.x0,
        &SolverConfig::default(),
        RunMeta {
            problem: "P5".into(),
            seed: 3,
            f_star: Some(0.0),
        },
    )
    .unwrap();
    let report = check_gradient_inequality(
        &inst.problem,
        &trace,
        &inst.region,
        60,
        8,
        17,
        ExecMode::default(),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
    assert!(report.samples > 0);
}

// Acceptance-threshold tightness on the deterministic quadratic family:
// sigma at the threshold gives rho = alpha1 to 1e-12.
#[test]
fn acceptance_threshold_is_tight_to_1e12() {
    let (problem, registry) = fixtures::scalar_quadratic(2.0, 0.0);
    let alpha1 = 0.1;
    let sigma = registry.l_upper / (2.0 - alpha1);
    let state = build_model(&problem, &vec1(3.0), DEFAULT_SIGN_TOLERANCE).unwrap();
    let metric = make_metric(sigma, DMatrix::zeros(1, 1)).unwrap();
    let opts = SubproblemOptions {
        tol: 1e-15,
        target_suboptimality: None,
        max_iter: 500_000,
    };
    let (trial, _) = trial_step(&state, &metric, &opts, None).unwrap();
    let rho = trial.rho.unwrap();
    assert!(
        (rho - alpha1).abs() <= 1e-12,
        "rho {rho} vs alpha1 {alpha1}: dev {:.2e}",
        (rho - alpha1).abs()
    );
}

// Single accepted step on the scalar family: both sides of the complexity
// bound in closed form, inequality strict.
#[test]
fn complexity_single_step_closed_form() {
    let (problem, registry) = fixtures::scalar_quadratic(1.0, 0.0);
    let config = SolverConfig {
        mu0: 1.0,
        max_outer: 1,
        subproblem_tol: 1e-13,
        curvature: false,
        mu_update: MuUpdate::Fixed,
        ..SolverConfig::default()
    };
    let trace = run(&problem, &registry, &vec1(2.0), &config, RunMeta::default()).unwrap();
    assert_eq!(trace.accepted_steps(), 1);
    let step = &trace.steps[0];
    // G = mu (x0 - x1) = 2 exactly
    assert!((step.prox_grad_norm - 2.0).abs() < 1e-9);
    let q_hi = config
        .mu0
        .max(config.nu_inc * registry.l_upper / (2.0 - config.alpha1))
        + registry.curvature_cap;
    let delta_f = 2.0; // F(2) - 0
    let bound = 2.0 * q_hi * delta_f / config.alpha1;
    assert!(step.prox_grad_norm.powi(2) < bound, "strictness");
    let report = check_complexity(&trace, FStar::Analytic(0.0));
    assert_eq!(report.verdict, Verdict::Pass);
}

// A run that terminates before any acceptance leaves the prefix bound
// vacuous: the check must handle N = 0.
#[test]
fn complexity_vacuous_prefix() {
    let (problem, registry) = fixtures::scalar_quadratic(1.0, 0.0);
    let trace = run(
        &problem,
        &registry,
        &vec1(0.0), // already optimal
        &SolverConfig::default(),
        RunMeta::default(),
    )
    .unwrap();
    assert_eq!(trace.accepted_steps(), 0);
    let report = check_complexity(&trace, FStar::Analytic(0.0));
    assert_eq!(report.verdict, Verdict::Pass);
    assert_eq!(report.samples, 0);
}

// At y = x_k the function-level inequality reduces to the sufficient
// decrease estimate F(x_k) - F(x+) >= (1 - L_U/(2 sigma)) <Q^{-1}G, G>.
#[test]
fn function_inequality_at_xk_is_sufficient_decrease() {
    let (problem, registry) = fixtures::scalar_quadratic(1.3, -0.2);
    let x_k = vec1(1.5);
    let state = build_model(&problem, &x_k, DEFAULT_SIGN_TOLERANCE).unwrap();
    let metric = make_metric(2.0, DMatrix::zeros(1, 1)).unwrap();
    let (trial, _) =
        trial_step(&state, &metric, &SubproblemOptions::with_tol(1e-13), None).unwrap();
    let d = &trial.certificate.solution - &x_k;
    let quad = metric.quadratic_form(&d);
    let decrease_rhs = (1.0 - registry.l_upper / (2.0 * metric.sigma_min)) * quad;
    let act = trial.act.unwrap();
    assert!(act >= decrease_rhs - 1e-10 * (1.0 + decrease_rhs.abs()));
    // same bound in the 1/2 (2 - L_U/sigma) ||d||_Q^2 form
    let alt = 0.5 * (2.0 - registry.l_upper / metric.sigma_min) * quad;
    assert!((decrease_rhs - alt).abs() <= 1e-14 * (1.0 + alt.abs()));
}

// Direct 1-D evaluation on a grid: s(y) = y^2/2 over r(x) = x^2/2 with
// region-valid constants; all three errors stay inside their envelopes.
#[test]
fn linearization_errors_on_scalar_grid() {
    use prox_convex::problem::{maps, pieces, CompositeProblem};
    use std::sync::Arc;
    let problem = Arc::new(
        CompositeProblem::new(
            pieces::zero(1),
            pieces::zero(1),
            maps::zero_map(1, 1),
            maps::quadratic_outer(1).with_value_lipschitz(4.5), // |r| <= 4.5 on [-3, 3]
            vec![
                pieces::quadratic_distance(vec1(0.0), 1.0).with_lipschitz(3.0), // |x| <= 3
            ],
        )
        .unwrap(),
    );
    let x_k = vec1(1.0);
    let grid: Vec<DVector<f64>> = (0..121).map(|i| vec1(-3.0 + 0.05 * i as f64)).collect();
    let cmp = compare_linearizations(&problem, &x_k, &grid, ExecMode::Sequential).unwrap();
    assert_eq!(cmp.violations, 0, "max violation {}", cmp.max_violation);
    // the inner error is genuinely nonzero here (curved channel)
    assert!(cmp.max_abs_e_in > 1e-3);
}

// Structural identity of the linearization bounds: the full-model constant
// is the sum of the inner-only and outer-only constants.
#[test]
fn linearization_constants_are_additive() {
    let inst = instantiate("P1-smooth", None, 0).unwrap();
    let samples = vec![inst.x0.clone()];
    let cmp =
        compare_linearizations(&inst.problem, &inst.x0, &samples, ExecMode::Sequential).unwrap();
    assert!((cmp.coeff_all - (cmp.coeff_in + cmp.coeff_out)).abs() <= 1e-15);
}

// The rebuilt per-step context matches the recorded norms.
#[test]
fn step_contexts_match_recorded_norms() {
    let inst = instantiate("P4", None, 1).unwrap();
    let trace = run(
        &inst.problem,
        &inst.registry,
        &inst.x0,
        &SolverConfig::default(),
        RunMeta::default(),
    )
    .unwrap();
    let contexts = step_contexts(&inst.problem, &trace).unwrap();
    assert_eq!(contexts.len(), trace.steps.len());
    for ctx in &contexts {
        let g = ctx.metric.apply(&(&ctx.x_k - &ctx.x_plus));
        assert!(
            (g.norm() - ctx.report.prox_grad_norm).abs()
                <= 1e-9 * (1.0 + ctx.report.prox_grad_norm)
        );
    }
}
