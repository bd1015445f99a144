//! Curvature blocks, the PSD-cone projection, and the proximal metric
//! `Q = mu I + H^+`.
//!
//! Curvature is assembled from second-order data where declared:
//! `H_C = sum_j y_j Hess C_j(x_k)` with `y` a subgradient of `h` at `C(x_k)`
//! (the gradient when `h` is smooth), and `H_s` as the outer pullback
//! `G_R^T Hess s(R(x_k)) G_R` plus the inner compensation
//! `sum_{i linearized} w_i Hess r_i(x_k)` on channels that expose a Hessian.
//! Blocks without second-order data contribute zero. The sum is symmetrized
//! and projected onto the PSD cone.

use nalgebra::{DMatrix, DVector};

use super::ModelState;
use crate::error::{Error, Result};

/// Result of the Frobenius-nearest PSD projection of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct PsdProjection {
    /// The projected matrix (negative eigenvalues clipped to zero).
    pub projected: DMatrix<f64>,
    /// The gap `projected - input`, itself PSD.
    pub gap: DMatrix<f64>,
    /// Extremal eigenvalues of the projected matrix.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Extremal eigenvalues of the input.
    pub input_lambda_min: f64,
    pub input_lambda_max: f64,
}

/// Projects a symmetric matrix onto the PSD cone by eigenvalue clipping.
/// The caller is responsible for symmetrizing the input.
pub fn psd_project(m: &DMatrix<f64>) -> Result<PsdProjection> {
    if m.nrows() != m.ncols() {
        return Err(Error::config(format!(
            "psd_project needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(PsdProjection {
            projected: m.clone(),
            gap: m.clone(),
            lambda_min: 0.0,
            lambda_max: 0.0,
            input_lambda_min: 0.0,
            input_lambda_max: 0.0,
        });
    }
    let eig = m
        .clone()
        .try_symmetric_eigen(1e-14, 10_000)
        .ok_or_else(|| {
            Error::numerical(format!(
                "symmetric eigendecomposition failed (dim {}, frobenius norm {:.3e})",
                m.nrows(),
                m.norm()
            ))
        })?;
    let input_lambda_min = eig.eigenvalues.min();
    let input_lambda_max = eig.eigenvalues.max();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut projected =
        &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    // kill rounding asymmetry from the eigenvector products
    let transpose = projected.transpose();
    projected = (projected + transpose) * 0.5;
    let gap = &projected - m;
    Ok(PsdProjection {
        projected,
        gap,
        lambda_min: clipped.min(),
        lambda_max: clipped.max(),
        input_lambda_min,
        input_lambda_max,
    })
}

/// Assembled curvature blocks at an iterate.
#[derive(Debug, Clone)]
pub struct CurvatureBlocks {
    pub h_c: DMatrix<f64>,
    pub h_s: DMatrix<f64>,
    /// PSD projection of `H_C + H_s`.
    pub h_plus: DMatrix<f64>,
    /// Projection gap `H^+ - (H_C + H_s)`, PSD.
    pub gap: DMatrix<f64>,
    pub used_c_hessians: bool,
    pub used_s_hessian: bool,
    /// Linearized channels whose Hessians entered the inner compensation.
    pub compensated_channels: Vec<usize>,
    /// Extremal eigenvalues of `h_plus`, cached for metric assembly.
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl CurvatureBlocks {
    /// All-zero blocks (second-order data unavailable or disabled).
    pub fn zeros(dim: usize) -> Self {
        let z = DMatrix::zeros(dim, dim);
        CurvatureBlocks {
            h_c: z.clone(),
            h_s: z.clone(),
            h_plus: z.clone(),
            gap: z,
            used_c_hessians: false,
            used_s_hessian: false,
            compensated_channels: Vec::new(),
            lambda_min: 0.0,
            lambda_max: 0.0,
        }
    }
}

/// Builds the curvature blocks for the model state. Blocks without
/// second-order oracles are zero.
pub fn assemble_curvature(state: &ModelState) -> Result<CurvatureBlocks> {
    let problem = state.problem();
    let m = state.dim();

    let mut h_c = DMatrix::zeros(m, m);
    let mut used_c_hessians = false;
    if problem.c.has_hessians() {
        let y = problem.h.gradient_or_subgradient(&state.c_k)?;
        for j in 0..problem.c.output_dim() {
            if y[j] != 0.0 {
                let hess = problem.c.component_hessian(&state.x_k, j).unwrap()?;
                h_c += hess * y[j];
            }
        }
        used_c_hessians = true;
    }

    let mut h_s = DMatrix::zeros(m, m);
    let mut used_s_hessian = false;
    let n = problem.n_channels();
    if n > 0 {
        if let Some(hess_s) = problem.s.component_hessian(&state.r_k, 0) {
            let hess_s = hess_s?;
            let mut g_r = DMatrix::zeros(n, m);
            for (i, sub) in state.channel_subgradients.iter().enumerate() {
                g_r.row_mut(i).copy_from(&sub.transpose());
            }
            h_s += g_r.transpose() * hess_s * &g_r;
            used_s_hessian = true;
        }
    }
    let mut compensated_channels = Vec::new();
    for &i in &state.i_minus {
        if let Some(hess) = problem.channels[i].hessian(&state.x_k) {
            h_s += hess? * state.grad_s[i];
            compensated_channels.push(i);
        }
    }

    let sum = &h_c + &h_s;
    let transpose = sum.transpose();
    let symmetrized = (sum + transpose) * 0.5;
    let projection = psd_project(&symmetrized)?;

    Ok(CurvatureBlocks {
        h_c,
        h_s,
        h_plus: projection.projected,
        gap: projection.gap,
        used_c_hessians,
        used_s_hessian,
        compensated_channels,
        lambda_min: projection.lambda_min,
        lambda_max: projection.lambda_max,
    })
}

/// The proximal metric `Q = mu I + H^+` with cached extremal eigenvalues.
#[derive(Debug, Clone)]
pub struct ProximalMetric {
    pub mu: f64,
    pub h_plus: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl ProximalMetric {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.q * v
    }

    /// `v^T Q v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        (&self.q * v).dot(v)
    }

    pub fn metric_norm(&self, v: &DVector<f64>) -> f64 {
        self.quadratic_form(v).max(0.0).sqrt()
    }
}

/// Assembles `Q = mu I + H^+`, computing the extremal eigenvalues of `H^+`.
pub fn make_metric(mu: f64, h_plus: DMatrix<f64>) -> Result<ProximalMetric> {
    if h_plus.nrows() == 0 {
        return Err(Error::config("metric needs a nonzero dimension"));
    }
    let eig = h_plus
        .clone()
        .try_symmetric_eigen(1e-14, 10_000)
        .ok_or_else(|| Error::numerical("eigendecomposition of H+ failed".to_string()))?;
    make_metric_with_bounds(mu, h_plus, eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Same as [`make_metric`] but reuses already-known extremal eigenvalues of
/// `H^+` (the driver computes them once per outer iteration).
pub fn make_metric_with_bounds(
    mu: f64,
    h_plus: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
) -> Result<ProximalMetric> {
    if mu <= 0.0 {
        return Err(Error::config(format!("mu must be positive, got {mu}")));
    }
    let dim = h_plus.nrows();
    let mut q = h_plus.clone();
    for i in 0..dim {
        q[(i, i)] += mu;
    }
    Ok(ProximalMetric {
        mu,
        h_plus,
        q,
        sigma_min: mu + lambda_min.max(0.0),
        sigma_max: mu + lambda_max.max(0.0),
    })
}

/// Spectral norm estimate by power iteration on `A^T A` (30 iterations,
/// relative tolerance 1e-6), with a deterministic start vector.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut v = DVector::from_iterator(cols, (0..cols).map(|i| 1.0 + (i as f64) * 1e-3));
    let mut norm = 0.0;
    v /= v.norm();
    let mut prev = f64::INFINITY;
    for _ in 0..30 {
        let av = a * &v;
        let atav = a.transpose() * av;
        let n = atav.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = atav / n;
        norm = n.sqrt();
        if (norm - prev).abs() <= 1e-6 * norm.max(1e-300) {
            break;
        }
        prev = norm;
    }
    norm
}
