//! Reusable smooth maps for the `C` and `s` slots.

use nalgebra::{DMatrix, DVector};

use super::SmoothMap;

/// The zero map `R^m -> R^d`.
pub fn zero_map(input_dim: usize, output_dim: usize) -> SmoothMap {
    SmoothMap::new(
        input_dim,
        output_dim,
        "zero-map",
        Box::new(move |_| DVector::zeros(output_dim)),
        Box::new(move |_| DMatrix::zeros(output_dim, input_dim)),
        0.0,
    )
    .with_value_lipschitz(0.0)
    .with_component_hessian(Box::new(move |_, _| DMatrix::zeros(input_dim, input_dim)))
    .with_hessian_lipschitz(0.0)
}

/// Scalar zero outer map `s = 0` on `R^n` (including `n = 0`).
pub fn zero_scalar(input_dim: usize) -> SmoothMap {
    SmoothMap::new(
        input_dim,
        1,
        "zero-outer",
        Box::new(move |_| DVector::zeros(1)),
        Box::new(move |_| DMatrix::zeros(1, input_dim)),
        0.0,
    )
    .with_value_lipschitz(0.0)
    .with_component_hessian(Box::new(move |_, _| DMatrix::zeros(input_dim, input_dim)))
    .with_hessian_lipschitz(0.0)
}

/// Identity outer map `s(y) = y` on `R^1`.
pub fn identity_scalar(_n: usize) -> SmoothMap {
    SmoothMap::new(
        1,
        1,
        "identity-outer",
        Box::new(|y: &DVector<f64>| y.clone()),
        Box::new(|_| DMatrix::from_element(1, 1, 1.0)),
        0.0,
    )
    .with_value_lipschitz(1.0)
    .with_component_hessian(Box::new(|_, _| DMatrix::zeros(1, 1)))
    .with_hessian_lipschitz(0.0)
}

/// Linear outer map `s(y) = w^T y`.
pub fn linear_outer(w: DVector<f64>) -> SmoothMap {
    let n = w.len();
    let l = w.norm();
    let w0 = w.clone();
    let w1 = w;
    SmoothMap::new(
        n,
        1,
        "linear-outer",
        Box::new(move |y: &DVector<f64>| DVector::from_element(1, w0.dot(y))),
        Box::new(move |_| DMatrix::from_row_slice(1, n, w1.as_slice())),
        0.0,
    )
    .with_value_lipschitz(l)
    .with_component_hessian(Box::new(move |_, _| DMatrix::zeros(n, n)))
    .with_hessian_lipschitz(0.0)
}

/// Quadratic outer map `s(y) = 1/2 ||y||^2`.
///
/// The gradient is unbounded globally; attach a region-valid `L_s` with
/// [`SmoothMap::with_value_lipschitz`] before deriving constants.
pub fn quadratic_outer(n: usize) -> SmoothMap {
    SmoothMap::new(
        n,
        1,
        "half-norm-squared",
        Box::new(|y: &DVector<f64>| DVector::from_element(1, 0.5 * y.norm_squared())),
        Box::new(|y: &DVector<f64>| DMatrix::from_row_slice(1, y.len(), y.transpose().as_slice())),
        1.0,
    )
    .with_component_hessian(Box::new(|y: &DVector<f64>, _| {
        DMatrix::identity(y.len(), y.len())
    }))
    .with_hessian_lipschitz(0.0)
    .with_value_lipschitz(1.0)
}

/// Outer map `s(y) = ||y||^2 - sum(y)`, whose partials `2 y_i - 1` are
/// strictly negative wherever `y_i < 1/2`.
pub fn wells_outer(n: usize) -> SmoothMap {
    SmoothMap::new(
        n,
        1,
        "wells-outer",
        Box::new(|y: &DVector<f64>| DVector::from_element(1, y.norm_squared() - y.sum())),
        Box::new(|y: &DVector<f64>| {
            DMatrix::from_row_iterator(1, y.len(), y.iter().map(|v| 2.0 * v - 1.0))
        }),
        2.0,
    )
    .with_component_hessian(Box::new(|y: &DVector<f64>, _| {
        DMatrix::identity(y.len(), y.len()) * 2.0
    }))
    .with_hessian_lipschitz(0.0)
    .with_value_lipschitz(1.0)
}

/// Product-of-squared-hinges outer map `s(y) = prod_i (y_i)_+^2`.
///
/// Encodes disjunctions: `s(R(x)) = 0` iff some predicate `r_i(x) <= 0`
/// holds. All partials are nonnegative, so no channel is ever linearized.
/// C^1 with piecewise Hessian (one-sided at the kinks).
pub fn product_plus_squared(n: usize) -> SmoothMap {
    assert!(n >= 1);
    let plus = |t: f64| t.max(0.0);
    SmoothMap::new(
        n,
        1,
        "product-plus-squared",
        Box::new(move |y: &DVector<f64>| {
            DVector::from_element(1, y.iter().map(|&t| plus(t) * plus(t)).product())
        }),
        Box::new(move |y: &DVector<f64>| {
            let vals: Vec<f64> = y.iter().map(|&t| plus(t) * plus(t)).collect();
            let mut row = DMatrix::zeros(1, y.len());
            for i in 0..y.len() {
                let rest: f64 = (0..y.len()).filter(|&j| j != i).map(|j| vals[j]).product();
                row[(0, i)] = 2.0 * plus(y[i]) * rest;
            }
            row
        }),
        1.0, // placeholder; callers must override with a region-valid cap
    )
    .with_component_hessian(Box::new(move |y: &DVector<f64>, _| {
        let n = y.len();
        let vals: Vec<f64> = y.iter().map(|&t| plus(t) * plus(t)).collect();
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let rest: f64 = (0..n).filter(|&j| j != i).map(|j| vals[j]).product();
            hess[(i, i)] = if y[i] < 0.0 { 0.0 } else { 2.0 * rest };
            for j in 0..n {
                if j == i {
                    continue;
                }
                let rest_ij: f64 = (0..n)
                    .filter(|&k| k != i && k != j)
                    .map(|k| vals[k])
                    .product();
                hess[(i, j)] = 4.0 * plus(y[i]) * plus(y[j]) * rest_ij;
            }
        }
        hess
    }))
}

/// Dense affine map `C(x) = A x + b`.
pub fn affine_map(a: DMatrix<f64>, b: DVector<f64>) -> SmoothMap {
    assert_eq!(a.nrows(), b.len());
    let (d, m) = (a.nrows(), a.ncols());
    let l = spectral_norm_upper(&a);
    let a0 = a.clone();
    let a1 = a;
    SmoothMap::new(
        m,
        d,
        "affine-map",
        Box::new(move |x: &DVector<f64>| &a0 * x + &b),
        Box::new(move |_| a1.clone()),
        0.0,
    )
    .with_value_lipschitz(l)
    .with_component_hessian(Box::new(move |_, _| DMatrix::zeros(m, m)))
    .with_hessian_lipschitz(0.0)
}

/// Rowwise sine-perturbed affine map, `C_j(x) = a_j^T x + eps * sin(b_j^T x) + c_j`.
///
/// Jacobian-Lipschitz `beta_C = eps * sqrt(sum_j ||b_j||^4)` and
/// component-Hessian-Lipschitz `gamma_C = eps * max_j ||b_j||^3`, both exact.
pub fn sine_perturbed_affine(
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
    eps: f64,
) -> SmoothMap {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(a.nrows(), c.len());
    assert_eq!(a.ncols(), b.ncols());
    let (d, m) = (a.nrows(), a.ncols());
    let beta = eps * (0..d).map(|j| b.row(j).norm().powi(4)).sum::<f64>().sqrt();
    let gamma = eps * (0..d).map(|j| b.row(j).norm().powi(3)).fold(0.0, f64::max);
    let l = (0..d)
        .map(|j| (a.row(j).norm() + eps * b.row(j).norm()).powi(2))
        .sum::<f64>()
        .sqrt();
    let (a0, b0, c0) = (a.clone(), b.clone(), c.clone());
    let (a1, b1) = (a.clone(), b.clone());
    let b2 = b;
    SmoothMap::new(
        m,
        d,
        "sine-perturbed-affine",
        Box::new(move |x: &DVector<f64>| {
            let mut v = &a0 * x + &c0;
            for j in 0..d {
                v[j] += eps * (b0.row(j).transpose().dot(x)).sin();
            }
            v
        }),
        Box::new(move |x: &DVector<f64>| {
            let mut jac = a1.clone();
            for j in 0..d {
                let phase = b1.row(j).transpose().dot(x);
                let cosj = phase.cos();
                for k in 0..m {
                    jac[(j, k)] += eps * cosj * b1[(j, k)];
                }
            }
            jac
        }),
        beta,
    )
    .with_component_hessian(Box::new(move |x: &DVector<f64>, j: usize| {
        let row = b2.row(j).transpose();
        let phase = row.dot(x);
        let outer = &row * row.transpose();
        outer * (-eps * phase.sin())
    }))
    .with_hessian_lipschitz(gamma)
    .with_value_lipschitz(l)
}

/// Scalar quadratic map `C(x) = c0 + g^T x + 1/2 x^T M x` (d = 1), `M` symmetric.
pub fn quadratic_scalar_map(c0: f64, g: DVector<f64>, m_mat: DMatrix<f64>) -> SmoothMap {
    let m = g.len();
    assert_eq!(m_mat.nrows(), m);
    assert_eq!(m_mat.ncols(), m);
    let beta = spectral_norm_upper(&m_mat);
    let g0 = g.clone();
    let m0 = m_mat.clone();
    let g1 = g;
    let m1 = m_mat.clone();
    let m2 = m_mat;
    SmoothMap::new(
        m,
        1,
        "quadratic-scalar-map",
        Box::new(move |x: &DVector<f64>| {
            DVector::from_element(1, c0 + g0.dot(x) + 0.5 * (x.transpose() * &m0 * x)[(0, 0)])
        }),
        Box::new(move |x: &DVector<f64>| {
            let grad = &g1 + &m1 * x;
            DMatrix::from_row_slice(1, grad.len(), grad.as_slice())
        }),
        beta,
    )
    .with_component_hessian(Box::new(move |_, _| m2.clone()))
    .with_hessian_lipschitz(0.0)
}

/// Scalar cubic map `C(x) = x^3 / 6` on `R^1`.
///
/// Component Hessian `x` with Hessian-Lipschitz `gamma_C = 1`; the
/// Jacobian-Lipschitz constant is only valid on a bounded region and must be
/// supplied by the caller.
pub fn cubic_scalar_map(beta_on_region: f64, l_on_region: f64) -> SmoothMap {
    SmoothMap::new(
        1,
        1,
        "cubic-scalar-map",
        Box::new(|x: &DVector<f64>| DVector::from_element(1, x[0].powi(3) / 6.0)),
        Box::new(|x: &DVector<f64>| DMatrix::from_element(1, 1, 0.5 * x[0] * x[0])),
        beta_on_region,
    )
    .with_component_hessian(Box::new(|x: &DVector<f64>, _| {
        DMatrix::from_element(1, 1, x[0])
    }))
    .with_hessian_lipschitz(1.0)
    .with_value_lipschitz(l_on_region)
}

/// Upper bound on the spectral norm via deterministic power iteration on
/// `A^T A`, inflated by a 1e-6 relative safety factor.
pub(crate) fn spectral_norm_upper(a: &DMatrix<f64>) -> f64 {
    crate::model::spectral_norm(a) * (1.0 + 1e-6)
}
