//! Data-space derivatives for exponential-family GLMs.
//!
//! The log-density is `l = log h(y) + log g(θ) + b(θ) T(y)` with the mean
//! parameter `θ = k⁻¹(xᵀβ)`. Derivatives are taken with respect to the data
//! point `z = (y, x)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A scalar function with its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }
}

pub trait GlmSpec {
    fn h(&self, y: f64) -> Jet;
    fn g(&self, theta: f64) -> Jet;
    fn b(&self, theta: f64) -> Jet;
    fn t(&self, y: f64) -> Jet;
    /// Inverse link `k⁻¹(η)`.
    fn inverse_link(&self, eta: f64) -> Jet;
}

/// Bernoulli response with the logit link.
#[derive(Debug, Clone, Copy, Default)]
pub struct BernoulliLogit;

impl GlmSpec for BernoulliLogit {
    fn h(&self, _y: f64) -> Jet {
        Jet::new(1.0, 0.0, 0.0)
    }

    fn g(&self, theta: f64) -> Jet {
        Jet::new(1.0 - theta, -1.0, 0.0)
    }

    fn b(&self, theta: f64) -> Jet {
        let v = theta * (1.0 - theta);
        Jet::new(
            (theta / (1.0 - theta)).ln(),
            1.0 / v,
            (2.0 * theta - 1.0) / (v * v),
        )
    }

    fn t(&self, y: f64) -> Jet {
        Jet::new(y, 1.0, 0.0)
    }

    fn inverse_link(&self, eta: f64) -> Jet {
        let s = crate::models::sigmoid(eta);
        let d1 = s * (1.0 - s);
        Jet::new(s, d1, d1 * (1.0 - 2.0 * s))
    }
}

/// Normal response with known variance and the identity link.
#[derive(Debug, Clone, Copy)]
pub struct NormalIdentity {
    pub variance: f64,
}

impl GlmSpec for NormalIdentity {
    fn h(&self, y: f64) -> Jet {
        let s2 = self.variance;
        let v = (-y * y / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
        Jet::new(v, -y / s2 * v, (y * y / (s2 * s2) - 1.0 / s2) * v)
    }

    fn g(&self, theta: f64) -> Jet {
        let s2 = self.variance;
        let v = (-theta * theta / (2.0 * s2)).exp();
        Jet::new(v, -theta / s2 * v, (theta * theta / (s2 * s2) - 1.0 / s2) * v)
    }

    fn b(&self, theta: f64) -> Jet {
        Jet::new(theta / self.variance, 1.0 / self.variance, 0.0)
    }

    fn t(&self, y: f64) -> Jet {
        Jet::new(y, 1.0, 0.0)
    }

    fn inverse_link(&self, eta: f64) -> Jet {
        Jet::new(eta, 1.0, 0.0)
    }
}

fn linear_predictor(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// `l(z; β)` for `z = (y, x)`.
pub fn glm_loglik(z: &[f64], beta: &[f64], spec: &dyn GlmSpec) -> Result<f64> {
    let (y, x) = split(z, beta)?;
    let theta = spec.inverse_link(linear_predictor(x, beta)).value;
    let h = spec.h(y).value;
    let g = spec.g(theta).value;
    if !(h > 0.0) || !(g > 0.0) {
        return Err(Error::NumericDomain(format!(
            "log-density undefined: h(y) = {h}, g(θ) = {g}"
        )));
    }
    Ok(h.ln() + g.ln() + spec.b(theta).value * spec.t(y).value)
}

fn split<'a>(z: &'a [f64], beta: &[f64]) -> Result<(f64, &'a [f64])> {
    if z.len() != beta.len() + 1 {
        return Err(Error::InvalidParams(format!(
            "data point of length {} for {} coefficients",
            z.len(),
            beta.len()
        )));
    }
    Ok((z[0], &z[1..]))
}

/// Gradient and Hessian of `l(z; β)` with respect to `z = (y, x)`.
pub fn glm_data_gradient_hessian(
    z: &[f64],
    beta: &[f64],
    spec: &dyn GlmSpec,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (y, x) = split(z, beta)?;
    let p = x.len();
    let k = spec.inverse_link(linear_predictor(x, beta));
    let theta = k.value;
    let (h, g, b, t) = (spec.h(y), spec.g(theta), spec.b(theta), spec.t(y));
    if h.value == 0.0 || g.value == 0.0 || !h.value.is_finite() || !g.value.is_finite() {
        return Err(Error::NumericDomain(format!(
            "derivatives undefined at h(y) = {}, g(θ) = {}",
            h.value, g.value
        )));
    }
    let (hr1, hr2) = (h.d1 / h.value, h.d2 / h.value);
    let (gr1, gr2) = (g.d1 / g.value, g.d2 / g.value);

    let d_y = hr1 + b.value * t.d1;
    let d_eta = gr1 * k.d1 + b.d1 * k.d1 * t.value;
    let d_yy = hr2 - hr1 * hr1 + b.value * t.d2;
    let d_y_eta = b.d1 * k.d1 * t.d1;
    let d_eta_eta = (gr2 - gr1 * gr1) * k.d1 * k.d1
        + gr1 * k.d2
        + b.d2 * k.d1 * k.d1 * t.value
        + b.d1 * k.d2 * t.value;

    let mut gradient = DVector::zeros(p + 1);
    let mut hessian = DMatrix::zeros(p + 1, p + 1);
    gradient[0] = d_y;
    hessian[(0, 0)] = d_yy;
    for i in 0..p {
        gradient[i + 1] = d_eta * beta[i];
        hessian[(0, i + 1)] = d_y_eta * beta[i];
        hessian[(i + 1, 0)] = d_y_eta * beta[i];
        for j in 0..p {
            hessian[(i + 1, j + 1)] = d_eta_eta * beta[i] * beta[j];
        }
    }
    if gradient.iter().chain(hessian.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain("non-finite data-space derivative".into()));
    }
    Ok((gradient, hessian))
}
