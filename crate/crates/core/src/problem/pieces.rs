//! Reusable convex pieces with deterministic subgradients and closed-form
//! proxes. Tie-breaks at kinks take the limit from the positive direction
//! (componentwise; along the last coordinate axis for radial kinks).

use nalgebra::DVector;

use super::ConvexPiece;

/// The zero function on `R^dim`.
pub fn zero(dim: usize) -> ConvexPiece {
    ConvexPiece::new(
        dim,
        "zero",
        Box::new(|_| 0.0),
        Box::new(|x: &DVector<f64>| DVector::zeros(x.len())),
    )
    .with_prox(Box::new(|p: &DVector<f64>, _| p.clone()))
    .with_lipschitz(0.0)
    .with_gradient(Box::new(|x: &DVector<f64>| DVector::zeros(x.len())), 0.0)
}

/// `weight * ||x||_1`. Subgradient at 0 is `+weight` (positive-side limit).
pub fn scaled_l1(dim: usize, weight: f64) -> ConvexPiece {
    assert!(weight >= 0.0);
    let w = weight;
    ConvexPiece::new(
        dim,
        format!("{w}*l1"),
        Box::new(move |x: &DVector<f64>| w * x.iter().map(|t| t.abs()).sum::<f64>()),
        Box::new(move |x: &DVector<f64>| x.map(|t| if t < 0.0 { -w } else { w })),
    )
    .with_prox(Box::new(move |p: &DVector<f64>, t: f64| {
        let tau = w * t;
        p.map(|v| {
            if v > tau {
                v - tau
            } else if v < -tau {
                v + tau
            } else {
                0.0
            }
        })
    }))
    .with_lipschitz(weight * (dim as f64).sqrt())
}

/// 1-D absolute value.
pub fn abs() -> ConvexPiece {
    scaled_l1(1, 1.0)
}

/// `weight/2 * ||x - center||^2`. Smooth, prox in closed form.
///
/// Not globally Lipschitz; callers that need `L` must attach a region-valid
/// cap via [`ConvexPiece::with_lipschitz`].
pub fn quadratic_distance(center: DVector<f64>, weight: f64) -> ConvexPiece {
    assert!(weight >= 0.0);
    let dim = center.len();
    let c0 = center.clone();
    let c1 = center.clone();
    let c2 = center.clone();
    let c3 = center;
    ConvexPiece::new(
        dim,
        "quadratic-distance",
        Box::new(move |x: &DVector<f64>| 0.5 * weight * (x - &c0).norm_squared()),
        Box::new(move |x: &DVector<f64>| (x - &c1) * weight),
    )
    .with_gradient(Box::new(move |x: &DVector<f64>| (x - &c2) * weight), weight)
    .with_hessian(Box::new(move |x: &DVector<f64>| {
        nalgebra::DMatrix::identity(x.len(), x.len()) * weight
    }))
    .with_prox(Box::new(move |p: &DVector<f64>, t: f64| {
        // argmin w/2 ||y-c||^2 + 1/(2t) ||y-p||^2
        (p + &c3 * (weight * t)) / (1.0 + weight * t)
    }))
}

/// Indicator of the box `[lower, upper]` (componentwise).
pub fn box_indicator(lower: DVector<f64>, upper: DVector<f64>) -> ConvexPiece {
    assert_eq!(lower.len(), upper.len());
    assert!(lower.iter().zip(upper.iter()).all(|(l, u)| l <= u));
    let dim = lower.len();
    let l0 = lower.clone();
    let u0 = upper.clone();
    let l1 = lower;
    let u1 = upper;
    ConvexPiece::new(
        dim,
        "box-indicator",
        Box::new(move |x: &DVector<f64>| {
            let inside = x
                .iter()
                .zip(l0.iter().zip(u0.iter()))
                .all(|(v, (l, u))| *v >= *l && *v <= *u);
            if inside {
                0.0
            } else {
                f64::INFINITY
            }
        }),
        Box::new(|x: &DVector<f64>| DVector::zeros(x.len())),
    )
    .with_prox(Box::new(move |p: &DVector<f64>, _| {
        DVector::from_iterator(
            p.len(),
            p.iter()
                .zip(l1.iter().zip(u1.iter()))
                .map(|(v, (l, u))| v.clamp(*l, *u)),
        )
    }))
}

/// Distance-to-ball predicate `||x - center|| - radius` (negative inside).
/// Nonsmooth only at the center; no gradient oracle is declared, so
/// finite-difference validation skips it.
pub fn ball_distance(center: DVector<f64>, radius: f64) -> ConvexPiece {
    let dim = center.len();
    let c0 = center.clone();
    let c1 = center.clone();
    let c2 = center;
    ConvexPiece::new(
        dim,
        "ball-distance",
        Box::new(move |x: &DVector<f64>| (x - &c0).norm() - radius),
        Box::new(move |x: &DVector<f64>| {
            let d = x - &c1;
            let n = d.norm();
            if n > 0.0 {
                d / n
            } else {
                // limit along +e_last
                let mut e = DVector::zeros(x.len());
                e[x.len() - 1] = 1.0;
                e
            }
        }),
    )
    .with_prox(Box::new(move |p: &DVector<f64>, t: f64| {
        // block soft threshold toward the center; the -radius shift does not
        // change the prox
        let d = p - &c2;
        let n = d.norm();
        if n <= t {
            c2.clone()
        } else {
            &c2 + d * (1.0 - t / n)
        }
    }))
    .with_lipschitz(1.0)
}

/// Affine function `a^T x + b` (convex, exactly linear).
pub fn affine(a: DVector<f64>, b: f64) -> ConvexPiece {
    let dim = a.len();
    let a0 = a.clone();
    let a1 = a.clone();
    let a2 = a.clone();
    let a3 = a.clone();
    let l = a.norm();
    ConvexPiece::new(
        dim,
        "affine",
        Box::new(move |x: &DVector<f64>| a0.dot(x) + b),
        Box::new(move |_| a1.clone()),
    )
    .with_gradient(Box::new(move |_| a2.clone()), 0.0)
    .with_hessian(Box::new(move |x: &DVector<f64>| {
        nalgebra::DMatrix::zeros(x.len(), x.len())
    }))
    .with_prox(Box::new(move |p: &DVector<f64>, t: f64| p - &a3 * t))
    .with_lipschitz(l)
}

/// Smoothed hinge `softplus(a^T x - b) = ln(1 + exp(a^T x - b))`.
///
/// Smooth with gradient-Lipschitz `||a||^2 / 4` and value-Lipschitz `||a||`.
/// The prox reduces to a monotone scalar root-find solved by bisection.
pub fn affine_softplus(a: DVector<f64>, b: f64) -> ConvexPiece {
    let dim = a.len();
    let norm_sq = a.norm_squared();
    let a0 = a.clone();
    let a1 = a.clone();
    let a2 = a.clone();
    let a3 = a.clone();
    let a4 = a.clone();
    let l = a.norm();
    ConvexPiece::new(
        dim,
        "softplus",
        Box::new(move |x: &DVector<f64>| softplus(a0.dot(x) - b)),
        Box::new(move |x: &DVector<f64>| &a1 * sigmoid(a1.dot(x) - b)),
    )
    .with_gradient(
        Box::new(move |x: &DVector<f64>| &a2 * sigmoid(a2.dot(x) - b)),
        norm_sq / 4.0,
    )
    .with_hessian(Box::new(move |x: &DVector<f64>| {
        let s = sigmoid(a3.dot(x) - b);
        let outer = &a3 * a3.transpose();
        outer * (s * (1.0 - s))
    }))
    .with_prox(Box::new(move |p: &DVector<f64>, t: f64| {
        // y = p - theta a with theta in [0, t] solving
        // theta = t * sigmoid(a^T p - b - theta ||a||^2); phi is monotone.
        if norm_sq == 0.0 {
            return p.clone();
        }
        let z0 = a4.dot(p) - b;
        let phi = |theta: f64| theta - t * sigmoid(z0 - theta * norm_sq);
        let (mut lo, mut hi) = (0.0, t);
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        p - &a4 * (0.5 * (lo + hi))
    }))
    .with_lipschitz(l)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// 1-D `max(x, 0)`. Subgradient at 0 is 1 (positive-side limit).
pub fn hinge() -> ConvexPiece {
    ConvexPiece::new(
        1,
        "hinge",
        Box::new(|x: &DVector<f64>| x[0].max(0.0)),
        Box::new(|x: &DVector<f64>| DVector::from_element(1, if x[0] < 0.0 { 0.0 } else { 1.0 })),
    )
    .with_prox(Box::new(|p: &DVector<f64>, t: f64| {
        let v = p[0];
        let out = if v > t {
            v - t
        } else if v < 0.0 {
            v
        } else {
            0.0
        };
        DVector::from_element(1, out)
    }))
    .with_lipschitz(1.0)
}
