//! Closed-form model-step coefficients for one parameter group, the
//! diagnostic quadratic model, and the dense scaling matrices used to verify
//! the linear-time path.
//!
//! Given a group gradient `g`, the gradient `g_t` at the trial point
//! `x + s_t` with `s_t = -alpha * g`, and `y = g_t - g`, the model step is
//!
//! ```text
//! s = c_g * g + c_y * y + c_s * s_t,
//! c_g = -|s_t|^2 / (2 delta),
//! c_y = -|s_t|^2 / (2 delta theta) * [-(y.s_t + 2 delta)(s_t.g) + |s_t|^2 (y.g)],
//! c_s = -|s_t|^2 / (2 delta theta) * [-(y.s_t + 2 delta)(y.g) + |y|^2 (s_t.g)],
//! delta = (|s_t| (|y| + |g|/eta) - y.s_t) / 2,
//! theta = (y.s_t + 2 delta)^2 - |s_t|^2 |y|^2.
//! ```
//!
//! The same step can be written `s = -alpha * H * g` for the symmetric
//! positive definite matrix
//!
//! ```text
//! H = |g|^2/(sigma gamma) [gamma I + beta y g^T + |g|^2 y y^T
//!                                   + beta g y^T + |y|^2 g g^T],
//! sigma = |g||y| + |g|^2/eta + y.g,   beta = sigma - y.g,
//! gamma = beta^2 - |g|^2 |y|^2,
//! ```
//! with `H = B^{-1}` for `B = (sigma I - g y^T - y g^T)/|g|^2`. The dense
//! constructors exist to cross-check the coefficient path: `B` has exact
//! extreme eigenvalues `1/eta` and `2|y|/|g| + 1/eta`, so every model step
//! satisfies `|s| <= eta |s_t|`.

use crate::core::ParamVector;
use crate::linalg::{jacobi_eigenvalues, DenseMatrix, LinalgError};
use thiserror::Error;

/// Relative zero-gradient guard: a group with `|g| <= 1e-12 * max(1, |x|)`
/// yields a zero step (the exact limit of the coefficients as `g -> 0`).
pub const ZERO_GRAD_GUARD: f64 = 1e-12;

/// Dense `H`/`B` construction is for verification only; larger groups must go
/// through the linear-time coefficient path.
pub const DENSE_DIM_CAP: usize = 512;

#[derive(Debug, Error)]
pub enum ModelStepError {
    #[error("gradient norm {norm} is below the zero-gradient guard {guard}")]
    DegenerateGradient { norm: f64, guard: f64 },
    #[error("g has length {g} but g_t has length {g_t}")]
    MismatchedLengths { g: usize, g_t: usize },
    #[error("stepsize must be positive, got {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("eta must lie in (0, 1), got {eta}")]
    InvalidEta { eta: f64 },
    #[error("group dimension {dim} exceeds the dense-oracle cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Per-group inputs of one model step.
#[derive(Debug, Clone, Copy)]
pub struct GroupStepInputs<'a> {
    g: &'a ParamVector,
    g_t: &'a ParamVector,
    alpha: f64,
    eta: f64,
    guard: f64,
}

impl<'a> GroupStepInputs<'a> {
    pub fn new(
        g: &'a ParamVector,
        g_t: &'a ParamVector,
        alpha: f64,
        eta: f64,
    ) -> Result<Self, ModelStepError> {
        if g.len() != g_t.len() {
            return Err(ModelStepError::MismatchedLengths { g: g.len(), g_t: g_t.len() });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelStepError::InvalidAlpha { alpha });
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(ModelStepError::InvalidEta { eta });
        }
        Ok(Self { g, g_t, alpha, eta, guard: ZERO_GRAD_GUARD })
    }

    /// Scales the zero-gradient guard by the owning group's parameter norm.
    pub fn with_param_norm(mut self, x_norm: f64) -> Self {
        self.guard = ZERO_GRAD_GUARD * x_norm.max(1.0);
        self
    }

    pub fn g(&self) -> &ParamVector {
        self.g
    }

    pub fn g_t(&self) -> &ParamVector {
        self.g_t
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// `y = g_t - g`.
    pub fn y(&self) -> ParamVector {
        self.g_t.stepped(-1.0, self.g)
    }

    /// Trial step `s_t = -alpha * g`.
    pub fn trial_step(&self) -> ParamVector {
        self.g.scaled(-self.alpha)
    }

    pub fn is_degenerate(&self) -> bool {
        self.g.norm() <= self.guard
    }

    fn check_not_degenerate(&self) -> Result<(), ModelStepError> {
        if self.is_degenerate() {
            return Err(ModelStepError::DegenerateGradient {
                norm: self.g.norm(),
                guard: self.guard,
            });
        }
        Ok(())
    }

    fn check_dense_cap(&self) -> Result<(), ModelStepError> {
        if self.dim() > DENSE_DIM_CAP {
            return Err(ModelStepError::DimensionTooLarge {
                dim: self.dim(),
                cap: DENSE_DIM_CAP,
            });
        }
        Ok(())
    }
}

/// Scalars of one model step. `delta`/`theta` parameterize the closed-form
/// coefficients; `sigma`/`beta`/`gamma` are the equivalent matrix-form
/// scalars, tied together by `2 delta = alpha * sigma` and
/// `theta = alpha^2 * gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelStepCoefficients {
    pub delta: f64,
    pub theta: f64,
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c_g: f64,
    pub c_y: f64,
    pub c_s: f64,
}

/// Outcome of [`model_step`]: the step, its coefficients, and whether the
/// zero-gradient guard fired (in which case the step is exactly zero).
#[derive(Debug, Clone)]
pub struct ModelStepResult {
    pub step: ParamVector,
    pub coefficients: Option<ModelStepCoefficients>,
    pub degenerate: bool,
}

/// Closed-form step coefficients for one group.
pub fn step_coefficients(inp: &GroupStepInputs) -> Result<ModelStepCoefficients, ModelStepError> {
    inp.check_not_degenerate()?;

    let y = inp.y();
    let s_t = inp.trial_step();
    let g = inp.g;
    let eta_inv = 1.0 / inp.eta;

    let g_norm_sq = g.norm_sq();
    let g_norm = g_norm_sq.sqrt();
    let y_norm_sq = y.norm_sq();
    let y_norm = y_norm_sq.sqrt();
    let st_norm_sq = s_t.norm_sq();
    let st_norm = st_norm_sq.sqrt();
    let y_dot_st = y.dot(&s_t);
    let y_dot_g = y.dot(g);
    let st_dot_g = s_t.dot(g);

    let delta = 0.5 * (st_norm * (y_norm + eta_inv * g_norm) - y_dot_st);
    let two_delta = 2.0 * delta;
    let theta = (y_dot_st + two_delta).powi(2) - st_norm_sq * y_norm_sq;

    let sigma = g_norm * y_norm + eta_inv * g_norm_sq + y_dot_g;
    let beta = g_norm * y_norm + eta_inv * g_norm_sq;
    // Factored form of beta^2 - |g|^2 |y|^2; positive whenever g != 0 and free
    // of the cancellation the difference-of-squares form suffers. No
    // collinearity guard is needed because of this factorization.
    let gamma = eta_inv * g_norm_sq * (2.0 * g_norm * y_norm + eta_inv * g_norm_sq);
    debug_assert!(delta > 0.0 && gamma > 0.0 && theta > 0.0);

    let c_g = -st_norm_sq / two_delta;
    let scale = st_norm_sq / (two_delta * theta);
    let c_y = -scale * (-(y_dot_st + two_delta) * st_dot_g + st_norm_sq * y_dot_g);
    let c_s = -scale * (-(y_dot_st + two_delta) * y_dot_g + y_norm_sq * st_dot_g);

    Ok(ModelStepCoefficients { delta, theta, sigma, beta, gamma, c_g, c_y, c_s })
}

/// Model step `s = c_g g + c_y y + c_s s_t` for one group.
///
/// A degenerate gradient (see [`ZERO_GRAD_GUARD`]) yields a zero step with the
/// flag set rather than an error: the coefficients approach 0/0 but the true
/// limit step is zero.
pub fn model_step(inp: &GroupStepInputs) -> ModelStepResult {
    if inp.is_degenerate() {
        return ModelStepResult {
            step: ParamVector::zeros(inp.dim()),
            coefficients: None,
            degenerate: true,
        };
    }
    let coeffs =
        step_coefficients(inp).expect("non-degenerate inputs always yield coefficients");
    let y = inp.y();
    let s_t = inp.trial_step();
    let mut step = inp.g.scaled(coeffs.c_g);
    step.axpy(coeffs.c_y, &y);
    step.axpy(coeffs.c_s, &s_t);
    debug_assert!(
        step.norm() <= inp.eta * s_t.norm() + 1e-10,
        "model step exceeded its contraction bound"
    );
    ModelStepResult { step, coefficients: Some(coeffs), degenerate: false }
}

/// Applies the scaling matrix to an arbitrary vector in O(dim):
/// `H v = |g|^2/(sigma gamma) [gamma v + (beta (g.v) + |g|^2 (y.v)) y
///                                      + (beta (y.v) + |y|^2 (g.v)) g]`.
///
/// This is the production path for the independent-batch variant, whose step
/// applies the scaling built from one batch to the gradient of another.
pub fn scaling_apply(inp: &GroupStepInputs, v: &ParamVector) -> Result<ParamVector, ModelStepError> {
    inp.check_not_degenerate()?;
    if v.len() != inp.dim() {
        return Err(ModelStepError::MismatchedLengths { g: inp.dim(), g_t: v.len() });
    }
    let y = inp.y();
    let g = inp.g;
    let eta_inv = 1.0 / inp.eta;
    let g_norm_sq = g.norm_sq();
    let g_norm = g_norm_sq.sqrt();
    let y_norm_sq = y.norm_sq();
    let y_norm = y_norm_sq.sqrt();
    let y_dot_g = y.dot(g);
    let sigma = g_norm * y_norm + eta_inv * g_norm_sq + y_dot_g;
    let beta = g_norm * y_norm + eta_inv * g_norm_sq;
    let gamma = eta_inv * g_norm_sq * (2.0 * g_norm * y_norm + eta_inv * g_norm_sq);

    let g_dot_v = g.dot(v);
    let y_dot_v = y.dot(v);
    let front = g_norm_sq / (sigma * gamma);
    let mut out = v.scaled(front * gamma);
    out.axpy(front * (beta * g_dot_v + g_norm_sq * y_dot_v), &y);
    out.axpy(front * (beta * y_dot_v + y_norm_sq * g_dot_v), g);
    Ok(out)
}

/// Dense scaling matrix `H` (verification oracle; capped at
/// [`DENSE_DIM_CAP`]).
pub fn build_dense_h(inp: &GroupStepInputs) -> Result<DenseMatrix, ModelStepError> {
    inp.check_not_degenerate()?;
    inp.check_dense_cap()?;
    let y = inp.y();
    let g = inp.g;
    let eta_inv = 1.0 / inp.eta;
    let g_norm_sq = g.norm_sq();
    let g_norm = g_norm_sq.sqrt();
    let y_norm_sq = y.norm_sq();
    let y_norm = y_norm_sq.sqrt();
    let y_dot_g = y.dot(g);
    let sigma = g_norm * y_norm + eta_inv * g_norm_sq + y_dot_g;
    let beta = g_norm * y_norm + eta_inv * g_norm_sq;
    let gamma = eta_inv * g_norm_sq * (2.0 * g_norm * y_norm + eta_inv * g_norm_sq);

    let n = inp.dim();
    let mut h = DenseMatrix::zeros(n);
    for i in 0..n {
        h.set(i, i, gamma);
    }
    h.add_outer(beta, y.as_slice(), g.as_slice());
    h.add_outer(g_norm_sq, y.as_slice(), y.as_slice());
    h.add_outer(beta, g.as_slice(), y.as_slice());
    h.add_outer(y_norm_sq, g.as_slice(), g.as_slice());
    h.scale(g_norm_sq / (sigma * gamma));
    Ok(h)
}

/// Dense inverse `B = (sigma I - g y^T - y g^T) / |g|^2` of the scaling
/// matrix (verification oracle).
pub fn build_dense_b(inp: &GroupStepInputs) -> Result<DenseMatrix, ModelStepError> {
    inp.check_not_degenerate()?;
    inp.check_dense_cap()?;
    let y = inp.y();
    let g = inp.g;
    let eta_inv = 1.0 / inp.eta;
    let g_norm_sq = g.norm_sq();
    let g_norm = g_norm_sq.sqrt();
    let y_norm = y.norm();
    let y_dot_g = y.dot(g);
    let sigma = g_norm * y_norm + eta_inv * g_norm_sq + y_dot_g;

    let n = inp.dim();
    let mut b = DenseMatrix::zeros(n);
    for i in 0..n {
        b.set(i, i, sigma);
    }
    b.add_outer(-1.0, g.as_slice(), y.as_slice());
    b.add_outer(-1.0, y.as_slice(), g.as_slice());
    b.scale(1.0 / g_norm_sq);
    Ok(b)
}

/// Smallest and largest eigenvalue of a symmetric matrix via the Jacobi
/// solver. Rejects non-symmetric input.
pub fn eigen_extremes(m: &DenseMatrix) -> Result<(f64, f64), ModelStepError> {
    let eigs = eigenvalues(m)?;
    Ok((eigs[0], eigs[eigs.len() - 1]))
}

/// All eigenvalues of a symmetric matrix, sorted ascending.
pub fn eigenvalues(m: &DenseMatrix) -> Result<Vec<f64>, ModelStepError> {
    Ok(jacobi_eigenvalues(m)?)
}

/// Value of the two-point quadratic model at step `s`:
/// `m(s) = a0(s) l0(s) + at(s) lt(s - s_t)` with
/// `a0(s) = (s - s_t).(-s_t)/|s_t|^2`, `at(s) = s.s_t/|s_t|^2`,
/// `l0(s) = f + g.s`, `lt(u) = f_t + g_t.u`.
///
/// Interpolates `f` at `s = 0` and `f_t` at `s = s_t` exactly.
pub fn quadratic_model_value(
    inp: &GroupStepInputs,
    f: f64,
    f_t: f64,
    s: &ParamVector,
) -> Result<f64, ModelStepError> {
    inp.check_not_degenerate()?;
    if s.len() != inp.dim() {
        return Err(ModelStepError::MismatchedLengths { g: inp.dim(), g_t: s.len() });
    }
    let s_t = inp.trial_step();
    let st_norm_sq = s_t.norm_sq();
    let d = s.stepped(-1.0, &s_t);
    let a0 = -d.dot(&s_t) / st_norm_sq;
    let at = s.dot(&s_t) / st_norm_sq;
    let l0 = f + inp.g.dot(s);
    let lt = f_t + inp.g_t.dot(&d);
    Ok(a0 * l0 + at * lt)
}

/// Diagnostic check of the original trust-region constraint
/// `|s|^2 + |s - s_t|^2 <= |s_t|^2` (with `1e-12` slack).
///
/// The relaxed closed-form minimizer is not guaranteed to satisfy it, so
/// callers log violations instead of asserting.
pub fn trust_region_holds(s: &ParamVector, s_t: &ParamVector) -> bool {
    assert_eq!(s.len(), s_t.len(), "trust-region check requires equal lengths");
    let d = s.stepped(-1.0, s_t);
    s.norm_sq() + d.norm_sq() <= s_t.norm_sq() + 1e-12
}
