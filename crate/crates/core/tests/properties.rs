//! Property tests for the structural invariants: model convexity along
//! segments, nonpositive design error, trace float round-tripping, and the
//! eigenvalue envelope of the metric prox-gradient.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::sync::Arc;

use prox_convex::problem::{maps, pieces, CompositeProblem};
use prox_convex::{build_model, make_metric, psd_project, DEFAULT_SIGN_TOLERANCE};

/// 1-D composite with a sign-indefinite outer map over one smooth quadratic
/// channel and one softplus channel: exercises both the kept-exact and the
/// linearized branches depending on `x_k`.
fn wells_and_softplus(center: f64) -> Arc<CompositeProblem> {
    Arc::new(
        CompositeProblem::new(
            pieces::zero(1),
            pieces::zero(1),
            maps::zero_map(1, 1),
            maps::wells_outer(2).with_value_lipschitz(100.0),
            vec![
                pieces::quadratic_distance(DVector::from_element(1, center), 1.0)
                    .with_lipschitz(50.0),
                pieces::affine_softplus(DVector::from_element(1, 0.8), 0.1),
            ],
        )
        .unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eval_model_is_convex_on_segments(
        center in -1.0..1.0f64,
        x_k in -2.0..2.0f64,
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        t in 0.0..1.0f64,
    ) {
        let problem = wells_and_softplus(center);
        let state = build_model(&problem, &DVector::from_element(1, x_k), DEFAULT_SIGN_TOLERANCE)
            .unwrap();
        let xa = DVector::from_element(1, a);
        let xb = DVector::from_element(1, b);
        let mid = &xa * t + &xb * (1.0 - t);
        let va = state.eval_model(&xa).unwrap();
        let vb = state.eval_model(&xb).unwrap();
        let vm = state.eval_model(&mid).unwrap();
        let scale = 1.0 + va.abs().max(vb.abs());
        prop_assert!(vm <= t * va + (1.0 - t) * vb + 1e-9 * scale);
    }

    #[test]
    fn design_error_is_nonpositive_everywhere(
        center in -1.0..1.0f64,
        x_k in -2.0..2.0f64,
        x in -4.0..4.0f64,
    ) {
        let problem = wells_and_softplus(center);
        let state = build_model(&problem, &DVector::from_element(1, x_k), DEFAULT_SIGN_TOLERANCE)
            .unwrap();
        let err = state.model_design_error(&DVector::from_element(1, x)).unwrap();
        prop_assert!(err <= 1e-12);
    }

    #[test]
    fn metric_prox_gradient_obeys_eigen_envelope(
        entries in proptest::collection::vec(-1.0..1.0f64, 9),
        d in proptest::collection::vec(-2.0..2.0f64, 3),
    ) {
        let raw = DMatrix::from_vec(3, 3, entries);
        let sym = (&raw + raw.transpose()) * 0.5;
        let h_plus = psd_project(&sym).unwrap().projected;
        let metric = make_metric(0.4, h_plus).unwrap();
        let d = DVector::from_vec(d);
        let g = metric.apply(&d);
        prop_assert!(g.norm() <= metric.sigma_max * d.norm() + 1e-10);
        prop_assert!(g.norm() >= metric.sigma_min * d.norm() - 1e-10);
    }

    #[test]
    fn trace_floats_roundtrip_bitwise(
        pred in proptest::num::f64::POSITIVE | proptest::num::f64::NEGATIVE,
        act in proptest::num::f64::POSITIVE | proptest::num::f64::NEGATIVE,
        x in proptest::num::f64::NORMAL,
    ) {
        use prox_convex::driver::trace::{
            read_trace, trace_to_string, StepReport, SubproblemSummary, Trace,
            TerminationReason, TraceMeta,
        };
        use prox_convex::driver::SolverConfig;
        use prox_convex::problem::ConstantRegistry;

        let step = StepReport {
            outer: 0,
            mu: 1.0,
            rejections: 0,
            rejected_mus: vec![],
            pred,
            pred_adjusted: pred,
            act,
            rho: 1.0,
            accepted: true,
            step_norm: x.abs(),
            metric_step_norm: x.abs(),
            prox_grad_norm: x.abs(),
            sigma_min: 1.0,
            sigma_max: 1.0,
            f_before: act,
            f_after: 0.0,
            subproblem: SubproblemSummary {
                kkt_residual: 0.0,
                suboptimality: 0.0,
                iterations: 1,
                converged: true,
                slow_path: false,
            },
            x_after: vec![x],
        };
        let trace = Trace {
            meta: TraceMeta::default(),
            config: SolverConfig::default(),
            constants: ConstantRegistry {
                l_h: 0.0,
                beta_c: 0.0,
                beta_s: 0.0,
                l_s: 0.0,
                channel_lipschitz: vec![],
                channel_gradient_lipschitz: vec![],
                linearizable: vec![],
                l_r: 0.0,
                beta_r: 0.0,
                l_upper: 0.0,
                l_lower: 0.0,
                curvature_cap: 0.0,
            },
            x0: vec![x],
            steps: vec![step],
            termination: TerminationReason::MaxOuter,
            final_point: vec![x],
            final_objective: 0.0,
            slope_bound: None,
            wall_time: None,
        };
        let text = trace_to_string(&trace).unwrap();
        let parsed = read_trace(text.as_bytes()).unwrap();
        prop_assert_eq!(parsed.steps[0].pred.to_bits(), pred.to_bits());
        prop_assert_eq!(parsed.steps[0].act.to_bits(), act.to_bits());
        prop_assert_eq!(parsed.x0[0].to_bits(), x.to_bits());
    }
}
