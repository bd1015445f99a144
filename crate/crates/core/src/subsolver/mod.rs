//! Solves the strongly convex subproblem
//! `min_x F(x; x_k) + 1/2 ||x - x_k||_Q^2` to a certified accuracy.
//!
//! Layout: with `A = J_C(x_k)` and `b = C(x_k) - A x_k`, the prox-model is
//!
//! ```text
//! min_x  g(x) + h(A x + b) + sum_{i exact} w_i r_i(x) + <c_lin, x>
//!        + 1/2 ||x - x_k||_Q^2
//! ```
//!
//! where `w_i = grad s(R(x_k))_i >= 0` on kept-exact channels and `c_lin`
//! collects the linearized channels. This is solved by a primal-dual
//! splitting: the prox of `g` handles the primal block, `h` and each scaled
//! exact channel are dualized (Moreau), and the quadratic term is treated as
//! a strongly convex smooth regularizer.
//!
//! Every iteration assembles an explicit epsilon-subgradient of the
//! prox-model at the current primal point; strong convexity then certifies
//! `F_Q(x) - inf F_Q <= kkt^2 / (2 sigma_min)`, which is the suboptimality
//! bound reported in the certificate.

pub mod oracle;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{spectral_norm, ModelState, ProximalMetric};

/// Options for a single subproblem solve.
#[derive(Debug, Clone)]
pub struct SubproblemOptions {
    /// Absolute tolerance on the certified residual; the stopping threshold
    /// is `tol * (1 + ||x_k|| * sigma_max)`.
    pub tol: f64,
    /// Optional target on the certified suboptimality bound; when set, the
    /// solve may stop as soon as the bound drops below it.
    pub target_suboptimality: Option<f64>,
    pub max_iter: usize,
}

impl Default for SubproblemOptions {
    fn default() -> Self {
        SubproblemOptions {
            tol: 1e-8,
            target_suboptimality: None,
            max_iter: 50_000,
        }
    }
}

impl SubproblemOptions {
    pub fn with_tol(tol: f64) -> Self {
        SubproblemOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Solution certificate.
///
/// `suboptimality = kkt_residual^2 / (2 sigma_min)` by strong convexity, and
/// `||solution - exact|| <= kkt_residual / sigma_min`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubproblemCertificate {
    #[serde(skip)]
    pub solution: DVector<f64>,
    pub kkt_residual: f64,
    pub suboptimality: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when some piece lacked a prox oracle and the slow subgradient
    /// fallback was used.
    pub slow_path: bool,
}

/// Dual variables carried across outer iterations for warm starting.
#[derive(Debug, Clone)]
pub struct DualState {
    signature: (usize, Vec<usize>),
    y_h: DVector<f64>,
    y_channels: Vec<DVector<f64>>,
}

struct Layout {
    a: DMatrix<f64>,
    b_aff: DVector<f64>,
    /// Kept-exact channels with strictly positive weight.
    exact: Vec<usize>,
    /// Linear term from linearized channels.
    c_lin: DVector<f64>,
    use_h_block: bool,
    norm_a: f64,
}

fn layout(state: &ModelState) -> Layout {
    let a = state.j_c.clone();
    let b_aff = &state.c_k - &a * &state.x_k;
    let mut exact = Vec::new();
    let mut c_lin = DVector::zeros(state.dim());
    for i in 0..state.r_k.len() {
        let w = state.grad_s[i];
        if state.is_linearized(i) {
            c_lin += state.lin_gradients[i].as_ref().unwrap() * w;
        } else if w > 0.0 {
            exact.push(i);
        }
        // w == 0 on an exact channel contributes nothing
    }
    let norm_a = spectral_norm(&a) * (1.0 + 1e-3);
    let use_h_block = norm_a > 0.0;
    Layout {
        a,
        b_aff,
        exact,
        c_lin,
        use_h_block,
        norm_a,
    }
}

/// Solves the subproblem at `state` with metric `metric`.
///
/// `warm` reuses dual variables from a previous solve when the block
/// structure matches. Returns the certificate and the dual state for the
/// next warm start. A certificate with `converged = false` is returned when
/// the iteration budget runs out; the caller decides what to do with it.
pub fn solve_subproblem(
    state: &ModelState,
    metric: &ProximalMetric,
    opts: &SubproblemOptions,
    warm: Option<&DualState>,
) -> Result<(SubproblemCertificate, DualState)> {
    let problem = state.problem();
    let lay = layout(state);
    let x_k = &state.x_k;

    // step sizes from the operator-norm condition
    let l_f = metric.sigma_max;
    let norm_k_sq = if lay.use_h_block {
        lay.norm_a * lay.norm_a
    } else {
        0.0
    } + lay.exact.len() as f64;
    let (tau, sigma) = if norm_k_sq > 0.0 {
        let sigma = 1.0 / norm_k_sq.sqrt();
        (0.99 / (l_f / 2.0 + sigma * norm_k_sq), sigma)
    } else {
        (1.0 / l_f, 0.0)
    };

    // primal warm start from x_k; duals from the previous outer iteration
    // when the block structure matches, otherwise from subgradients at x_k
    let signature = (problem.outer_dim(), lay.exact.clone());
    let (mut y_h, mut y_channels) = match warm {
        Some(w) if w.signature == signature => (w.y_h.clone(), w.y_channels.clone()),
        _ => {
            let y_h = problem.h.gradient_or_subgradient(&state.c_k)?;
            let y_channels = lay
                .exact
                .iter()
                .map(|&i| Ok(&state.channel_subgradients[i] * state.grad_s[i]))
                .collect::<Result<Vec<_>>>()?;
            (y_h, y_channels)
        }
    };
    let mut x = x_k.clone();

    let mut slow_path = false;
    let threshold = opts.tol * (1.0 + x_k.norm() * metric.sigma_max);
    let mut best: Option<(f64, DVector<f64>, f64, usize)> = None;

    let grad_f = |x: &DVector<f64>| -> DVector<f64> { &lay.c_lin + metric.apply(&(x - x_k)) };

    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iter {
        iterations = it + 1;

        // primal step
        let mut v = grad_f(&x);
        if lay.use_h_block {
            v += lay.a.transpose() * &y_h;
        }
        for y in &y_channels {
            v += y;
        }
        let (x_new, slow_g) = problem.g.prox_or_fallback(&(&x - &v * tau), tau)?;
        slow_path |= slow_g;
        if x_new.iter().any(|t| !t.is_finite()) {
            return Err(Error::numerical(
                "subproblem iterate became non-finite".to_string(),
            ));
        }
        if problem.g.value(&x_new)? == f64::INFINITY {
            return Err(Error::Infeasible(
                "prox of g returned a point outside its domain".to_string(),
            ));
        }
        let x_bar = &x_new * 2.0 - &x;

        // dual steps, remembering shifted points for the epsilon gaps;
        // gaps below the rounding floor of their value scale count as zero,
        // otherwise the certificate can never certify past sqrt(eps_machine)
        let clip = |gap: f64, scale: f64| {
            let noise = 1e-14 * (1.0 + scale.abs());
            if gap <= noise {
                0.0
            } else {
                gap
            }
        };
        let mut eps_gap = 0.0;
        let mut y_h_new = y_h.clone();
        if lay.use_h_block {
            let p = &y_h + (&lay.a * &x_bar + &lay.b_aff) * sigma;
            let (prox_h, slow_h) = problem.h.prox_or_fallback(&(&p / sigma), 1.0 / sigma)?;
            slow_path |= slow_h;
            y_h_new = &p - prox_h * sigma;
            // y_h_new is an exact subgradient of h at z_h; the epsilon gap
            // transports it to A x_new + b
            let z_h = &lay.a * &x_bar + &lay.b_aff + (&y_h - &y_h_new) / sigma;
            let arg_new = &lay.a * &x_new + &lay.b_aff;
            let value_new = problem.h.finite_value(&arg_new)?;
            let gap = value_new - problem.h.finite_value(&z_h)? - y_h_new.dot(&(&arg_new - &z_h));
            eps_gap += clip(gap, value_new);
        }
        let mut y_channels_new = Vec::with_capacity(y_channels.len());
        for (idx, &i) in lay.exact.iter().enumerate() {
            let w = state.grad_s[i];
            let piece = &problem.channels[i];
            let p = &y_channels[idx] + &x_bar * sigma;
            let (prox_r, slow_r) = piece.prox_or_fallback(&(&p / sigma), w / sigma)?;
            slow_path |= slow_r;
            let y_new = &p - prox_r * sigma;
            let z = &x_bar + (&y_channels[idx] - &y_new) / sigma;
            let value_new = w * piece.finite_value(&x_new)?;
            let gap = value_new - w * piece.finite_value(&z)? - y_new.dot(&(&x_new - &z));
            eps_gap += clip(gap, value_new);
            y_channels_new.push(y_new);
        }

        // certificate: u in dg(x_new) from prox optimality, then an
        // epsilon-subgradient of the full prox-model at x_new
        let mut residual = (&x - &x_new) / tau - grad_f(&x) + grad_f(&x_new);
        if lay.use_h_block {
            residual += lay.a.transpose() * (&y_h_new - &y_h);
        }
        for (y_new, y_old) in y_channels_new.iter().zip(y_channels.iter()) {
            residual += y_new - y_old;
        }
        let kkt = (residual.norm_squared() + 2.0 * metric.sigma_min * eps_gap).sqrt();
        let subopt = kkt * kkt / (2.0 * metric.sigma_min);

        x = x_new;
        y_h = y_h_new;
        y_channels = y_channels_new;

        if best.as_ref().is_none_or(|(k, ..)| kkt < *k) {
            best = Some((kkt, x.clone(), subopt, iterations));
        }
        let target_hit = opts.target_suboptimality.is_some_and(|eps| subopt <= eps);
        if kkt <= threshold || target_hit {
            converged = true;
            break;
        }
    }

    let (kkt, solution, subopt, at_iter) =
        best.ok_or_else(|| Error::numerical("subproblem produced no iterate".to_string()))?;
    let cert = SubproblemCertificate {
        solution,
        kkt_residual: kkt,
        suboptimality: subopt,
        iterations: if converged { iterations } else { at_iter },
        converged,
        slow_path,
    };
    let dual = DualState {
        signature,
        y_h,
        y_channels,
    };
    Ok((cert, dual))
}
