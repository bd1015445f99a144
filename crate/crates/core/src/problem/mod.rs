//! Oracle interfaces for the four building blocks of the composite objective
//! `F(x) = g(x) + h(C(x)) + s(R(x))`, plus the registry of Lipschitz and
//! smoothness constants that feeds every bound checked by the harness.
//!
//! * `g`, `h` and each channel `r_i` are [`ConvexPiece`]s: finite-valued,
//!   closed, convex (only `g` may take the value `+inf`).
//! * `C` and `s` are [`SmoothMap`]s with declared Jacobian-Lipschitz
//!   constants and optional second-order data.
//!
//! Oracles are plain closures behind `Send + Sync` boxes; they must be safe
//! for concurrent read-only invocation and must not mutate shared state.

pub mod estimate;
pub mod maps;
pub mod pieces;
pub mod validate;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ValueFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MapFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ComponentHessianFn = Box<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;
/// Proximal oracle: `(point, t)` returns the minimizer of
/// `piece(y) + 1/(2t) * ||y - point||^2`, i.e. the prox in the metric `t^{-1} I`.
pub type ProxFn = Box<dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync>;

/// A finite-valued (or, for `g`, extended-valued) closed convex function with
/// a deterministic subgradient selection and optional prox / smoothness data.
///
/// The subgradient oracle returns a single element of the convex
/// subdifferential chosen deterministically: at kinks, the limit of gradients
/// from the positive direction (componentwise for separable pieces, along the
/// last coordinate axis for radial ones).
pub struct ConvexPiece {
    dim: usize,
    label: String,
    value: ValueFn,
    subgradient: VectorFn,
    prox: Option<ProxFn>,
    gradient: Option<VectorFn>,
    hessian: Option<JacobianFn>,
    /// Lipschitz constant of the value; `None` means unbounded/undeclared.
    lipschitz: Option<f64>,
    /// Lipschitz constant of the gradient (only meaningful when smooth).
    gradient_lipschitz: Option<f64>,
}

impl fmt::Debug for ConvexPiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexPiece")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("has_prox", &self.prox.is_some())
            .field("smooth", &self.gradient.is_some())
            .field("lipschitz", &self.lipschitz)
            .field("gradient_lipschitz", &self.gradient_lipschitz)
            .finish()
    }
}

impl ConvexPiece {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        value: ValueFn,
        subgradient: VectorFn,
    ) -> Self {
        ConvexPiece {
            dim,
            label: label.into(),
            value,
            subgradient,
            prox: None,
            gradient: None,
            hessian: None,
            lipschitz: None,
            gradient_lipschitz: None,
        }
    }

    pub fn with_prox(mut self, prox: ProxFn) -> Self {
        self.prox = Some(prox);
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    /// Declares the piece smooth with the given gradient oracle and
    /// gradient-Lipschitz constant.
    pub fn with_gradient(mut self, gradient: VectorFn, beta: f64) -> Self {
        self.gradient = Some(gradient);
        self.gradient_lipschitz = Some(beta);
        self
    }

    pub fn with_hessian(mut self, hessian: JacobianFn) -> Self {
        self.hessian = Some(hessian);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn gradient_lipschitz(&self) -> Option<f64> {
        self.gradient_lipschitz
    }

    pub fn is_smooth(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_prox(&self) -> bool {
        self.prox.is_some()
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    fn check_dim(&self, x: &DVector<f64>, context: &'static str) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Extended-real value. `+inf` is a legal return (indicator pieces);
    /// NaN and `-inf` are contract violations.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x, "piece value")?;
        let v = (self.value)(x);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::oracle(format!(
                "piece `{}` returned {v} (must be real or +inf)",
                self.label
            )));
        }
        Ok(v)
    }

    /// Value that must be finite (used for `h` and channels).
    pub fn finite_value(&self, x: &DVector<f64>) -> Result<f64> {
        let v = self.value(x)?;
        if !v.is_finite() {
            return Err(Error::oracle(format!(
                "piece `{}` must be finite-valued, got {v}",
                self.label
            )));
        }
        Ok(v)
    }

    pub fn subgradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x, "piece subgradient")?;
        Ok((self.subgradient)(x))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Option<Result<DVector<f64>>> {
        self.gradient.as_ref().map(|g| {
            self.check_dim(x, "piece gradient")?;
            Ok(g(x))
        })
    }

    /// Gradient when smooth, otherwise the deterministic subgradient.
    pub fn gradient_or_subgradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.gradient {
            Some(g) => {
                self.check_dim(x, "piece gradient")?;
                Ok(g(x))
            }
            None => self.subgradient(x),
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Option<Result<DMatrix<f64>>> {
        self.hessian.as_ref().map(|h| {
            self.check_dim(x, "piece hessian")?;
            Ok(h(x))
        })
    }

    pub fn prox(&self, point: &DVector<f64>, t: f64) -> Option<Result<DVector<f64>>> {
        self.prox.as_ref().map(|p| {
            self.check_dim(point, "piece prox")?;
            Ok(p(point, t))
        })
    }

    /// Prox evaluation with a subgradient-descent fallback for pieces without
    /// a closed-form prox. The fallback is the "slow path": it returns an
    /// approximate minimizer of `piece(y) + 1/(2t) ||y - point||^2` after a
    /// fixed number of strongly convex subgradient steps.
    pub fn prox_or_fallback(&self, point: &DVector<f64>, t: f64) -> Result<(DVector<f64>, bool)> {
        if let Some(res) = self.prox(point, t) {
            return Ok((res?, false));
        }
        self.check_dim(point, "piece prox fallback")?;
        let mut y = point.clone();
        // step_j = 2t/(j+2) for the 1/t-strongly convex prox objective
        let iters = 300;
        for j in 0..iters {
            let sg = (self.subgradient)(&y) + (&y - point) / t;
            let step = 2.0 * t / (j as f64 + 2.0);
            y -= sg * step;
        }
        Ok((y, true))
    }
}

/// A C^1 map with declared Jacobian-Lipschitz constant and optional
/// per-component Hessians for curvature injection.
pub struct SmoothMap {
    input_dim: usize,
    output_dim: usize,
    label: String,
    value: MapFn,
    jacobian: JacobianFn,
    component_hessian: Option<ComponentHessianFn>,
    /// beta: Lipschitz constant of the Jacobian.
    jacobian_lipschitz: f64,
    /// L: Lipschitz constant of the value; `None` means unbounded/undeclared.
    value_lipschitz: Option<f64>,
    /// gamma: Lipschitz constant of the component Hessians, when declared.
    hessian_lipschitz: Option<f64>,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .field("label", &self.label)
            .field("jacobian_lipschitz", &self.jacobian_lipschitz)
            .field("value_lipschitz", &self.value_lipschitz)
            .field("hessian_lipschitz", &self.hessian_lipschitz)
            .field("has_hessians", &self.component_hessian.is_some())
            .finish()
    }
}

impl SmoothMap {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        label: impl Into<String>,
        value: MapFn,
        jacobian: JacobianFn,
        jacobian_lipschitz: f64,
    ) -> Self {
        SmoothMap {
            input_dim,
            output_dim,
            label: label.into(),
            value,
            jacobian,
            component_hessian: None,
            jacobian_lipschitz,
            value_lipschitz: None,
            hessian_lipschitz: None,
        }
    }

    pub fn with_component_hessian(mut self, hessian: ComponentHessianFn) -> Self {
        self.component_hessian = Some(hessian);
        self
    }

    pub fn with_value_lipschitz(mut self, l: f64) -> Self {
        self.value_lipschitz = Some(l);
        self
    }

    /// Overrides the Jacobian-Lipschitz declaration (used by instances whose
    /// constant is a level-set cap rather than a global bound).
    pub fn with_jacobian_lipschitz(mut self, beta: f64) -> Self {
        self.jacobian_lipschitz = beta;
        self
    }

    pub fn with_hessian_lipschitz(mut self, gamma: f64) -> Self {
        self.hessian_lipschitz = Some(gamma);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn jacobian_lipschitz(&self) -> f64 {
        self.jacobian_lipschitz
    }

    pub fn value_lipschitz(&self) -> Option<f64> {
        self.value_lipschitz
    }

    pub fn hessian_lipschitz(&self) -> Option<f64> {
        self.hessian_lipschitz
    }

    pub fn has_hessians(&self) -> bool {
        self.component_hessian.is_some()
    }

    fn check_dim(&self, x: &DVector<f64>, context: &'static str) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x, "map value")?;
        let v = (self.value)(x);
        if v.len() != self.output_dim {
            return Err(Error::oracle(format!(
                "map `{}` returned dimension {}, declared {}",
                self.label,
                v.len(),
                self.output_dim
            )));
        }
        if v.iter().any(|t| !t.is_finite()) {
            return Err(Error::oracle(format!(
                "map `{}` returned a non-finite value",
                self.label
            )));
        }
        Ok(v)
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x, "map jacobian")?;
        let j = (self.jacobian)(x);
        if j.nrows() != self.output_dim || j.ncols() != self.input_dim {
            return Err(Error::oracle(format!(
                "map `{}` jacobian is {}x{}, declared {}x{}",
                self.label,
                j.nrows(),
                j.ncols(),
                self.output_dim,
                self.input_dim
            )));
        }
        Ok(j)
    }

    pub fn component_hessian(&self, x: &DVector<f64>, j: usize) -> Option<Result<DMatrix<f64>>> {
        self.component_hessian.as_ref().map(|h| {
            self.check_dim(x, "map hessian")?;
            Ok(h(x, j))
        })
    }

    /// Gradient of a scalar map (`output_dim == 1`).
    pub fn scalar_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let j = self.jacobian(x)?;
        Ok(j.row(0).transpose())
    }
}

/// The full composite problem: oracles for `g`, `h`, `C`, `s` and the ordered
/// channel list `R = (r_1, ..., r_n)`.
#[derive(Debug)]
pub struct CompositeProblem {
    pub g: ConvexPiece,
    pub h: ConvexPiece,
    pub c: SmoothMap,
    pub s: SmoothMap,
    pub channels: Vec<ConvexPiece>,
}

impl CompositeProblem {
    /// Validates the dimension chain
    /// `g.dim = m = C.input`, `h.dim = d = C.output`, `s.input = n = |R|`.
    pub fn new(
        g: ConvexPiece,
        h: ConvexPiece,
        c: SmoothMap,
        s: SmoothMap,
        channels: Vec<ConvexPiece>,
    ) -> Result<Self> {
        let m = g.dim();
        if c.input_dim() != m {
            return Err(Error::config(format!(
                "C has input dimension {}, but g lives on dimension {m}",
                c.input_dim()
            )));
        }
        if h.dim() != c.output_dim() {
            return Err(Error::config(format!(
                "h has dimension {}, but C has output dimension {}",
                h.dim(),
                c.output_dim()
            )));
        }
        if s.output_dim() != 1 {
            return Err(Error::config("s must be scalar-valued".to_string()));
        }
        if s.input_dim() != channels.len() {
            return Err(Error::config(format!(
                "s has input dimension {}, but there are {} channels",
                s.input_dim(),
                channels.len()
            )));
        }
        for (i, r) in channels.iter().enumerate() {
            if r.dim() != m {
                return Err(Error::config(format!(
                    "channel {i} has dimension {}, expected {m}",
                    r.dim()
                )));
            }
        }
        Ok(CompositeProblem {
            g,
            h,
            c,
            s,
            channels,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn outer_dim(&self) -> usize {
        self.h.dim()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Evaluates `R(x)` as a vector of channel values.
    pub fn channel_values(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut r = DVector::zeros(self.channels.len());
        for (i, piece) in self.channels.iter().enumerate() {
            r[i] = piece.finite_value(x)?;
        }
        Ok(r)
    }

    /// Full objective `F(x) = g(x) + h(C(x)) + s(R(x))`.
    ///
    /// Returns `+inf` exactly when `g(x) = +inf`; all other pieces must be
    /// finite-valued.
    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "objective",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let gv = self.g.value(x)?;
        if gv == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        let hv = self.h.finite_value(&self.c.value(x)?)?;
        let r = self.channel_values(x)?;
        let sv = self.s.value(&r)?[0];
        Ok(gv + hv + sv)
    }
}

/// Evaluates the composite objective; see [`CompositeProblem::objective`].
pub fn evaluate_objective(problem: &CompositeProblem, x: &DVector<f64>) -> Result<f64> {
    problem.objective(x)
}

/// Declared and derived Lipschitz/smoothness constants.
///
/// Primitive constants are declared by the problem author; derived constants
/// are recomputed deterministically from them:
///
/// * `l_r      = ||(L_{r_1}, ..., L_{r_n})||_2`
/// * `beta_r   = sqrt(sum over the linearizable set of beta_{r_i}^2)`
/// * `l_upper  = L_h * beta_C + L_R^2 * beta_s`
/// * `l_lower  = L_U + L_s * beta_R`
/// * `curvature_cap = beta_C * L_h + beta_s * L_R^2 + L_s * beta_R`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRegistry {
    pub l_h: f64,
    pub beta_c: f64,
    pub beta_s: f64,
    pub l_s: f64,
    /// Per-channel value-Lipschitz constants `L_{r_i}`.
    pub channel_lipschitz: Vec<f64>,
    /// Per-channel gradient-Lipschitz constants `beta_{r_i}` (where declared).
    pub channel_gradient_lipschitz: Vec<Option<f64>>,
    /// Channels that may ever be linearized (sorted, deduplicated).
    pub linearizable: Vec<usize>,
    pub l_r: f64,
    pub beta_r: f64,
    pub l_upper: f64,
    pub l_lower: f64,
    pub curvature_cap: f64,
}

/// Populates a [`ConstantRegistry`] for `problem`, with `linearizable` the set
/// of channel indices that may ever be linearized.
///
/// Fails if a linearizable channel has no declared gradient-Lipschitz
/// constant, or if a required primitive constant is undeclared.
pub fn derive_constants(
    problem: &CompositeProblem,
    linearizable: &[usize],
) -> Result<ConstantRegistry> {
    let n = problem.n_channels();
    let mut lin: Vec<usize> = linearizable.to_vec();
    lin.sort_unstable();
    lin.dedup();
    if let Some(&bad) = lin.iter().find(|&&i| i >= n) {
        return Err(Error::config(format!(
            "linearizable channel index {bad} out of range (n = {n})"
        )));
    }

    let l_h = problem
        .h
        .lipschitz()
        .ok_or_else(|| Error::config("h must declare a finite Lipschitz constant".to_string()))?;
    let beta_c = problem.c.jacobian_lipschitz();
    let beta_s = problem.s.jacobian_lipschitz();
    let l_s = problem.s.value_lipschitz().ok_or_else(|| {
        Error::config("s must declare a finite value-Lipschitz constant".to_string())
    })?;

    let mut channel_lipschitz = Vec::with_capacity(n);
    let mut channel_gradient_lipschitz = Vec::with_capacity(n);
    for (i, r) in problem.channels.iter().enumerate() {
        let l = r.lipschitz().ok_or_else(|| {
            Error::config(format!(
                "channel {i} (`{}`) must declare a finite Lipschitz constant",
                r.label()
            ))
        })?;
        channel_lipschitz.push(l);
        channel_gradient_lipschitz.push(r.gradient_lipschitz());
    }

    let mut beta_r_sq = 0.0;
    for &i in &lin {
        let beta = channel_gradient_lipschitz[i].ok_or_else(|| {
            Error::config(format!(
                "channel {i} is linearizable but has no declared gradient-Lipschitz constant"
            ))
        })?;
        beta_r_sq += beta * beta;
    }
    let beta_r = beta_r_sq.sqrt();

    let l_r = channel_lipschitz.iter().map(|l| l * l).sum::<f64>().sqrt();
    let l_upper = l_h * beta_c + l_r * l_r * beta_s;
    let l_lower = l_upper + l_s * beta_r;
    let curvature_cap = beta_c * l_h + beta_s * l_r * l_r + l_s * beta_r;

    Ok(ConstantRegistry {
        l_h,
        beta_c,
        beta_s,
        l_s,
        channel_lipschitz,
        channel_gradient_lipschitz,
        linearizable: lin,
        l_r,
        beta_r,
        l_upper,
        l_lower,
        curvature_cap,
    })
}
