//! Model interface for functional rejection plus the built-in model family:
//! linear, quadratic, power-law, exponential (about a pivot) and sinusoid
//! (with a canonical form for its countably many equivalent solutions).

use crate::error::{RcrError, Result};

/// An M-parameter, n-dimensional model `y(x | theta)`.
///
/// Custom models supply the evaluator and the partial derivatives with
/// respect to each parameter; a prior density and a canonicalizer are
/// optional. Implementations must be reentrant: tuple fits run in parallel.
pub trait Model: Send + Sync {
    /// Number of independent variables.
    fn n_dims(&self) -> usize;

    /// Number of free parameters M.
    fn n_params(&self) -> usize;

    fn evaluate(&self, x: &[f64], theta: &[f64]) -> f64;

    /// Writes dy/dtheta_j into `out` (length M).
    fn partials(&self, x: &[f64], theta: &[f64], out: &mut [f64]);

    /// Prior density up to a constant; multiplies a solution's weight.
    /// Solutions with zero prior are dropped from the ensemble.
    fn prior(&self, _theta: &[f64]) -> f64 {
        1.0
    }

    /// Map equivalent parameterizations onto a chosen simplest form.
    /// Must be idempotent.
    fn canonicalize(&self, _theta: &mut [f64]) {}

    /// Starting point for tuple fits.
    fn default_guess(&self) -> Vec<f64>;

    /// Starting point for an exact M-point fit, given the tuple's points as
    /// (x, y) pairs. Models with a closed-form M-point solution should
    /// return it: a static guess cannot reach steep solutions, and dropping
    /// those tuples censors the ensemble toward shallow parameters. `None`
    /// falls back to [`Model::default_guess`].
    fn tuple_guess(&self, _points: &[(&[f64], f64)]) -> Option<Vec<f64>> {
        None
    }

    /// Fixed reference value(s) baked into the parameterization to
    /// decorrelate fitted parameters. Models without a pivot ignore this.
    fn set_pivot(&mut self, _pivot: &[f64]) {}

    /// Indices of strictly positive scale parameters whose ensemble
    /// statistics should be taken in log space. A scale parameter's
    /// propagated uncertainty grows with its value (sigma_b proportional to
    /// b for the exponential), so inverse-variance weights in linear space
    /// diverge as the parameter approaches zero and solutions with tiny
    /// scales hijack the weighted median and mode. Working in log space
    /// makes the weights relative-precision based.
    fn log_scale_params(&self) -> &'static [usize] {
        &[]
    }

    fn name(&self) -> &'static str;
}

/// y = a + b x
#[derive(Debug, Clone, Default)]
pub struct LinearModel;

impl Model for LinearModel {
    fn n_dims(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        2
    }
    fn evaluate(&self, x: &[f64], theta: &[f64]) -> f64 {
        theta[0] + theta[1] * x[0]
    }
    fn partials(&self, x: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x[0];
    }
    fn default_guess(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }
    fn name(&self) -> &'static str {
        "linear"
    }
}

/// y = a + b x + c x^2
#[derive(Debug, Clone, Default)]
pub struct QuadraticModel;

impl Model for QuadraticModel {
    fn n_dims(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        3
    }
    fn evaluate(&self, x: &[f64], theta: &[f64]) -> f64 {
        theta[0] + theta[1] * x[0] + theta[2] * x[0] * x[0]
    }
    fn partials(&self, x: &[f64], _theta: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = x[0];
        out[2] = x[0] * x[0];
    }
    fn default_guess(&self) -> Vec<f64> {
        vec![0.0, 0.0, 0.0]
    }
    fn name(&self) -> &'static str {
        "quadratic"
    }
}

/// y = a x^b for x > 0.
#[derive(Debug, Clone)]
pub struct PowerLawModel;

impl Model for PowerLawModel {
    fn n_dims(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        2
    }
    fn evaluate(&self, x: &[f64], theta: &[f64]) -> f64 {
        theta[0] * x[0].powf(theta[1])
    }
    fn partials(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let p = x[0].powf(theta[1]);
        out[0] = p;
        out[1] = theta[0] * p * x[0].ln();
    }
    fn default_guess(&self) -> Vec<f64> {
        vec![1.0, 1.0]
    }
    fn tuple_guess(&self, points: &[(&[f64], f64)]) -> Option<Vec<f64>> {
        // b = ln(y1/y2) / ln(x1/x2), a = y1 / x1^b for positive x and
        // same-sign y.
        if points.len() != 2 {
            return None;
        }
        let (x1, y1) = (points[0].0[0], points[0].1);
        let (x2, y2) = (points[1].0[0], points[1].1);
        if x1 <= 0.0 || x2 <= 0.0 || x1 == x2 || y1 == 0.0 || y1.signum() != y2.signum() {
            return None;
        }
        let b = (y1 / y2).ln() / (x1 / x2).ln();
        let a = y1 / x1.powf(b);
        (a.is_finite() && b.is_finite()).then(|| vec![a, b])
    }
    fn log_scale_params(&self) -> &'static [usize] {
        &[0] // a
    }
    fn name(&self) -> &'static str {
        "power-law"
    }
}

/// y = b e^(m (x - pivot)). The pivot decorrelates ln b and m; by default it
/// is set to the weighted mean of the x values before fitting.
#[derive(Debug, Clone)]
pub struct ExponentialModel {
    pub pivot: f64,
}

impl Default for ExponentialModel {
    fn default() -> Self {
        ExponentialModel { pivot: 0.0 }
    }
}

impl Model for ExponentialModel {
    fn n_dims(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        2
    }
    fn evaluate(&self, x: &[f64], theta: &[f64]) -> f64 {
        theta[0] * (theta[1] * (x[0] - self.pivot)).exp()
    }
    fn partials(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let dx = x[0] - self.pivot;
        let e = (theta[1] * dx).exp();
        out[0] = e;
        out[1] = theta[0] * dx * e;
    }
    fn default_guess(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }
    fn tuple_guess(&self, points: &[(&[f64], f64)]) -> Option<Vec<f64>> {
        // Two points of one sign determine the fit exactly:
        // m = ln(y2/y1) / (x2 - x1), b = y1 e^(-m (x1 - pivot)).
        if points.len() != 2 {
            return None;
        }
        let (x1, y1) = (points[0].0[0], points[0].1);
        let (x2, y2) = (points[1].0[0], points[1].1);
        if x1 == x2 || y1 == 0.0 || y1.signum() != y2.signum() {
            return None;
        }
        let m = (y2 / y1).ln() / (x2 - x1);
        let b = y1 * (-m * (x1 - self.pivot)).exp();
        (b.is_finite() && m.is_finite()).then(|| vec![b, m])
    }
    fn set_pivot(&mut self, pivot: &[f64]) {
        self.pivot = pivot[0];
    }
    fn log_scale_params(&self) -> &'static [usize] {
        &[0] // b
    }
    fn name(&self) -> &'static str {
        "exponential"
    }
}

/// y = b sin(m (x - x0)). Any point tuple admits countably many solutions,
/// so fits are mapped onto the canonical form with m >= 0 and m|x0| < pi.
#[derive(Debug, Clone, Default)]
pub struct SinusoidModel;

impl Model for SinusoidModel {
    fn n_dims(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        3
    }
    fn evaluate(&self, x: &[f64], theta: &[f64]) -> f64 {
        theta[0] * (theta[1] * (x[0] - theta[2])).sin()
    }
    fn partials(&self, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let arg = theta[1] * (x[0] - theta[2]);
        out[0] = arg.sin();
        out[1] = theta[0] * (x[0] - theta[2]) * arg.cos();
        out[2] = -theta[0] * theta[1] * arg.cos();
    }
    fn canonicalize(&self, theta: &mut [f64]) {
        canonicalize_sinusoid(theta);
    }
    fn default_guess(&self) -> Vec<f64> {
        vec![1.0, 1.0, 0.0]
    }
    fn name(&self) -> &'static str {
        "sinusoid"
    }
}

/// Map a sinusoid's (b, m, x0) onto its simplest equivalent form by applying,
/// in order: (1) flip m and b if m < 0; (2) reduce x0 by whole periods while
/// m|x0| >= 2 pi; (3) shift x0 by a half period and flip b if m|x0| >= pi.
/// Afterwards m >= 0 and m|x0| < pi. A zero frequency has no phase and is
/// returned unchanged.
pub fn canonicalize_sinusoid(theta: &mut [f64]) {
    assert!(theta.len() == 3, "sinusoid parameters are (b, m, x0)");
    let (b, m, x0) = (theta[0], theta[1], theta[2]);
    if m == 0.0 || !m.is_finite() || !x0.is_finite() || !b.is_finite() {
        return;
    }
    let (mut b, mut m, mut x0) = (b, m, x0);
    if m < 0.0 {
        m = -m;
        b = -b;
    }
    let phase = m * x0.abs();
    if phase >= 2.0 * std::f64::consts::PI {
        let whole = (phase / (2.0 * std::f64::consts::PI)).floor();
        x0 -= x0.signum() * 2.0 * std::f64::consts::PI * whole / m;
    }
    if m * x0.abs() >= std::f64::consts::PI {
        x0 -= x0.signum() * std::f64::consts::PI / m;
        b = -b;
    }
    theta[0] = b;
    theta[1] = m;
    theta[2] = x0;
}

/// Look up a built-in model by its CLI name.
pub fn model_by_name(name: &str) -> Result<Box<dyn Model>> {
    match name {
        "linear" => Ok(Box::new(LinearModel)),
        "quadratic" => Ok(Box::new(QuadraticModel)),
        "power-law" | "powerlaw" => Ok(Box::new(PowerLawModel)),
        "exponential" => Ok(Box::new(ExponentialModel::default())),
        "sinusoid" => Ok(Box::new(SinusoidModel)),
        other => Err(RcrError::InvalidScenario(format!(
            "unknown model '{other}' (expected linear, quadratic, power-law, exponential or sinusoid)"
        ))),
    }
}
