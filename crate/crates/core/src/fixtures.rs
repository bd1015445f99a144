//! Small analytic problem instances shared by unit tests, the verification
//! harness, and the benches. Each comes with exactly known constants so that
//! ratio and error identities hold in closed form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::problem::{derive_constants, maps, pieces, CompositeProblem, ConstantRegistry};

/// `F(x) = (l/2) (x - shift)^2` realized through `s(y) = y^2/2` over the
/// affine channel `r(x) = sqrt(l) (x - shift)`, so the declared `L_U` equals
/// the true curvature `l` and the acceptance ratio satisfies
/// `rho = 2 - L_U / sigma` exactly.
pub fn scalar_quadratic(l: f64, shift: f64) -> (Arc<CompositeProblem>, ConstantRegistry) {
    assert!(l > 0.0);
    let root = l.sqrt();
    let problem = Arc::new(
        CompositeProblem::new(
            pieces::zero(1),
            pieces::zero(1),
            maps::zero_map(1, 1),
            maps::quadratic_outer(1).with_value_lipschitz(1e6),
            vec![pieces::affine(
                DVector::from_element(1, root),
                -root * shift,
            )],
        )
        .unwrap(),
    );
    let registry = derive_constants(&problem, &[0]).unwrap();
    debug_assert!((registry.l_upper - l).abs() <= 1e-12 * l.max(1.0));
    (problem, registry)
}

/// `F(x) = x^4` through `s(y) = y^2` over the channel `r(x) = x^2`: a flat
/// valley at the origin where no step-size error bound holds.
pub fn flat_valley() -> (Arc<CompositeProblem>, ConstantRegistry) {
    let problem = Arc::new(
        CompositeProblem::new(
            pieces::zero(1),
            pieces::zero(1),
            maps::zero_map(1, 1),
            maps::quadratic_outer(1).with_value_lipschitz(100.0),
            vec![pieces::quadratic_distance(DVector::zeros(1), 2.0).with_lipschitz(20.0)],
        )
        .unwrap(),
    );
    // r(x) = x^2 (weight 2 halves cancel), s(y) = y^2/2 gives F = x^4/2
    let registry = derive_constants(&problem, &[0]).unwrap();
    (problem, registry)
}

/// `F(x) = h(C(x))` with `h` the scalar identity and `C` quadratic with the
/// given symmetric curvature matrix: the Hessian-augmented model error is
/// exactly `-1/2 d^T H^- d`, with no cubic or quartic remainder.
pub fn quadratic_curvature(m_mat: DMatrix<f64>) -> Arc<CompositeProblem> {
    let m = m_mat.nrows();
    let grad0 = DVector::from_fn(m, |i, _| 0.3 + 0.1 * i as f64);
    let c = maps::quadratic_scalar_map(0.7, grad0, m_mat).with_value_lipschitz(100.0);
    Arc::new(
        CompositeProblem::new(
            pieces::zero(m),
            // h(u) = u: linear, smooth, beta_h = 0
            pieces::affine(DVector::from_element(1, 1.0), 0.0),
            c,
            maps::zero_scalar(0),
            vec![],
        )
        .unwrap(),
    )
}

/// `F(x) = x^3/6` via the scalar identity `h` over a cubic map: the
/// Hessian-augmented model error is exactly `d^3/6`, giving a clean cubic
/// decay and the envelope constant `L_h * gamma_C / 6 = 1/6`.
pub fn cubic_composite(region_halfwidth: f64, x_center: f64) -> Arc<CompositeProblem> {
    let reach = x_center.abs() + region_halfwidth;
    let beta = reach; // |C''(x)| = |x|
    let l_c = 0.5 * reach * reach; // |C'(x)| = x^2/2
    Arc::new(
        CompositeProblem::new(
            pieces::zero(1),
            pieces::affine(DVector::from_element(1, 1.0), 0.0),
            maps::cubic_scalar_map(beta, l_c),
            maps::zero_scalar(0),
            vec![],
        )
        .unwrap(),
    )
}

/// Exact-model instance: `h` linear, `C` quadratic with PSD curvature, `s`
/// quadratic over an affine channel. Every remainder constant vanishes and
/// the Hessian-augmented model reproduces `F` exactly.
pub fn exact_second_order(channel: DVector<f64>) -> Arc<CompositeProblem> {
    let m = channel.len();
    let psd = DMatrix::from_fn(
        m,
        m,
        |i, j| if i == j { 0.5 + 0.25 * i as f64 } else { 0.0 },
    );
    let grad0 = DVector::from_fn(m, |i, _| -0.2 + 0.1 * i as f64);
    Arc::new(
        CompositeProblem::new(
            pieces::zero(m),
            pieces::affine(DVector::from_element(1, 1.0), 0.0),
            maps::quadratic_scalar_map(0.3, grad0, psd).with_value_lipschitz(100.0),
            maps::quadratic_outer(1).with_value_lipschitz(100.0),
            vec![pieces::affine(channel, 0.4)],
        )
        .unwrap(),
    )
}
