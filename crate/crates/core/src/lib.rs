//! Solver and verification harness for composite objectives
//!
//! ```text
//! F(x) = g(x) + h(C(x)) + s(R(x))
//! ```
//!
//! with `g`, `h` and every coordinate of `R` convex (possibly nonsmooth) and
//! `C`, `s` smooth. Each step minimizes a convex local model that linearizes
//! only the smooth maps — `g`, `h` and nonnegative-weight channels of `R`
//! stay exact — regularized by an adaptive proximal metric
//! `Q_k = mu_k I + H_k^+`, where `mu_k` follows a predicted/actual ratio test
//! and `H_k^+` injects PSD-projected curvature when second-order data is
//! available.
//!
//! Modules:
//!
//! * [`problem`]: oracle interfaces, constant registry, sampled validation.
//! * [`model`]: the convex local model, curvature blocks, PSD projection,
//!   proximal metric.
//! * [`subsolver`]: certified primal-dual solver for the subproblem, plus
//!   brute-force and high-accuracy reference oracles.
//! * [`driver`]: the outer loop, configuration, and trace records.
//! * [`theory`]: post-hoc checks of the decrease, spectral-bound, rate, and
//!   model-error properties a run is expected to satisfy.
//! * [`zoo`]: benchmark instances with analytic constants.
//!
//! Sample sweeps and batch runs are data parallel; build with the default
//! `parallel` feature for a rayon-backed sweep or without it for the
//! sequential fallback. Results are identical either way.
//!
//! # Example
//!
//! Solve a benchmark instance and check the decrease property of its trace:
//!
//! ```
//! use prox_convex::zoo::instantiate;
//! use prox_convex::{run, RunMeta, SolverConfig, TerminationReason};
//!
//! let inst = instantiate("P5", None, 0)?;
//! let trace = run(
//!     &inst.problem,
//!     &inst.registry,
//!     &inst.x0,
//!     &SolverConfig::default(),
//!     RunMeta { problem: inst.name.clone(), seed: 0, f_star: inst.f_star },
//! )?;
//! assert!(trace.steps.iter().all(|s| s.f_after <= s.f_before));
//! assert_eq!(trace.termination, TerminationReason::PredZero);
//! # Ok::<(), prox_convex::Error>(())
//! ```
//!
//! Custom problems are assembled from oracle bundles:
//!
//! ```
//! use nalgebra::DVector;
//! use prox_convex::problem::{maps, pieces, CompositeProblem};
//! use prox_convex::{build_model, derive_constants, DEFAULT_SIGN_TOLERANCE};
//! use std::sync::Arc;
//!
//! // F(x) = |x|_1 + 1/2 (r(x))^2 with the smooth channel r(x) = <a, x>
//! let problem = Arc::new(CompositeProblem::new(
//!     pieces::scaled_l1(2, 1.0),
//!     pieces::zero(1),
//!     maps::zero_map(2, 1),
//!     maps::quadratic_outer(1).with_value_lipschitz(10.0),
//!     vec![pieces::affine(DVector::from_vec(vec![1.0, -0.5]), 0.3)],
//! )?);
//! let registry = derive_constants(&problem, &[0])?;
//! let state = build_model(&problem, &DVector::zeros(2), DEFAULT_SIGN_TOLERANCE)?;
//! assert_eq!(state.eval_model(&DVector::zeros(2))?, state.f_k);
//! assert!(registry.l_upper > 0.0);
//! # Ok::<(), prox_convex::Error>(())
//! ```

pub mod driver;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod model;
pub mod problem;
pub mod sampling;
pub mod subsolver;
pub mod summary;
pub mod theory;
pub mod zoo;

pub use driver::{
    model_decrease, prox_gradient, read_trace, run, run_streamed, slope_bound, write_trace,
    EpsSchedule, LoopEvent, MuUpdate, RunMeta, SolverConfig, SolverLoop, StepReport,
    TerminationReason, Trace,
};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use model::{
    assemble_curvature, build_model, make_metric, model_error_bounds_check, psd_project,
    CurvatureBlocks, ModelState, ProximalMetric, DEFAULT_SIGN_TOLERANCE,
};
pub use problem::{
    derive_constants, evaluate_objective, CompositeProblem, ConstantRegistry, ConvexPiece,
    SmoothMap,
};
pub use sampling::ProbeRegion;
pub use subsolver::{
    oracle::{oracle_solve, OracleSpec},
    solve_subproblem, SubproblemCertificate, SubproblemOptions,
};
pub use summary::export_summary;
pub use zoo::{instantiate, BenchmarkInstance};
