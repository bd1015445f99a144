//! Sequential vs data-parallel sweeps over the three hot sample loops:
//! model-error checking, oracle validation, and batches of independent
//! solves. With the default `parallel` feature both modes are measured;
//! without it only the sequential fallback exists.
//!
//! Run with `cargo bench -p prox-convex`.

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

use prox_convex::driver::{RunMeta, SolverConfig};
use prox_convex::problem::validate::{validate_oracles, FD_STEP};
use prox_convex::zoo::instantiate;
use prox_convex::{
    build_model, exec, model_error_bounds_check, run, ExecMode, DEFAULT_SIGN_TOLERANCE,
};

fn modes() -> Vec<(&'static str, ExecMode)> {
    let mut out = vec![("sequential", ExecMode::Sequential)];
    #[cfg(feature = "parallel")]
    out.push(("parallel", ExecMode::Parallel));
    out
}

fn bench_model_error_sweep(c: &mut Criterion) {
    let inst = instantiate("P1", None, 0).unwrap();
    let state = build_model(&inst.problem, &inst.x0, DEFAULT_SIGN_TOLERANCE).unwrap();
    let samples: Vec<DVector<f64>> = (0..1000)
        .map(|i| {
            let mut rng = prox_convex::sampling::rng_for(5, i);
            inst.region.sample(&mut rng)
        })
        .collect();
    let mut group = c.benchmark_group("model_error_sweep_1000");
    for (name, mode) in modes() {
        group.bench_function(name, |b| {
            b.iter(|| model_error_bounds_check(&state, &inst.registry, &samples, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_oracle_validation(c: &mut Criterion) {
    let inst = instantiate("P1-smooth", None, 0).unwrap();
    let mut group = c.benchmark_group("validate_oracles_200");
    for (name, mode) in modes() {
        group.bench_function(name, |b| {
            b.iter(|| validate_oracles(&inst.problem, &inst.region, 200, 3, FD_STEP, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_independent_solves(c: &mut Criterion) {
    let config = SolverConfig::default();
    let solve_batch = |mode: ExecMode| {
        exec::map_indexed(mode, 8, |seed| {
            let inst = instantiate("P5", None, seed as u64).unwrap();
            run(
                &inst.problem,
                &inst.registry,
                &inst.x0,
                &config,
                RunMeta::default(),
            )
            .unwrap()
            .accepted_steps()
        })
    };
    let mut group = c.benchmark_group("independent_solves_8xP5");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_function(name, |b| b.iter(|| solve_batch(mode)));
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_model_error_sweep,
    bench_oracle_validation,
    bench_independent_solves
);
criterion_main!(benches);
