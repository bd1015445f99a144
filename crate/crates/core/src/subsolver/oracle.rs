//! Reference minimizers for cross-checking the subproblem solver: a
//! brute-force grid search for up to three dimensions, and the splitting
//! itself run to a much tighter tolerance for higher dimensions.

use nalgebra::DVector;

use super::{solve_subproblem, SubproblemOptions};
use crate::error::{Error, Result};
use crate::model::{ModelState, ProximalMetric};

#[derive(Debug, Clone)]
pub enum OracleSpec {
    /// Exhaustive grid over `x_k ± halfwidth`, `points_per_dim + 1` points per
    /// axis. Only for dimension <= 3.
    Grid {
        halfwidth: f64,
        points_per_dim: usize,
    },
    /// The splitting run to a 1e-12 residual with a large iteration budget.
    HighAccuracy,
}

pub fn oracle_solve(
    state: &ModelState,
    metric: &ProximalMetric,
    spec: &OracleSpec,
) -> Result<DVector<f64>> {
    match spec {
        OracleSpec::Grid {
            halfwidth,
            points_per_dim,
        } => grid_solve(state, metric, *halfwidth, *points_per_dim),
        OracleSpec::HighAccuracy => {
            let opts = SubproblemOptions {
                tol: 1e-12,
                target_suboptimality: None,
                max_iter: 400_000,
            };
            let (cert, _) = solve_subproblem(state, metric, &opts, None)?;
            Ok(cert.solution)
        }
    }
}

fn grid_solve(
    state: &ModelState,
    metric: &ProximalMetric,
    halfwidth: f64,
    points_per_dim: usize,
) -> Result<DVector<f64>> {
    let m = state.dim();
    if m > 3 {
        return Err(Error::config(format!(
            "grid oracle supports dimension <= 3, got {m}"
        )));
    }
    if points_per_dim == 0 {
        return Err(Error::config("grid needs at least one interval"));
    }
    let steps = points_per_dim + 1;
    let coord = |idx: usize| -> f64 {
        -halfwidth + 2.0 * halfwidth * (idx as f64) / (points_per_dim as f64)
    };
    let mut best_val = f64::INFINITY;
    let mut best = state.x_k.clone();
    let mut point = state.x_k.clone();
    let total = steps.pow(m as u32);
    for flat in 0..total {
        let mut rem = flat;
        for axis in 0..m {
            point[axis] = state.x_k[axis] + coord(rem % steps);
            rem /= steps;
        }
        let val = state.eval_prox_model(&point, metric)?;
        if val < best_val {
            best_val = val;
            best.copy_from(&point);
        }
    }
    Ok(best)
}
