//! Richards growth curve, its Gompertz limit, the basis factor and the flat
//! time point.
//!
//! The curve used throughout the crate is
//!
//! ```text
//! f(t; θ1, θ2, θ3, ξ) = θ1 · [1 + ξ·exp{−θ2 (t − θ3)}]^(−1/ξ)
//! ```
//!
//! `ξ = 1` gives the logistic curve and `ξ → 0+` converges to the Gompertz
//! curve `θ1 · exp[−exp{−θ2 (t − θ3)}]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of one Richards curve.
///
/// Only `xi > 0` is enforced here. Positivity of the final size and growth
/// rate is an application-level concern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RichardsParams {
    /// Final size (upper asymptote).
    pub theta1: f64,
    /// Growth rate, per day.
    pub theta2: f64,
    /// Lag phase, in days.
    pub theta3: f64,
    /// Shape.
    pub xi: f64,
}

impl RichardsParams {
    pub fn new(theta1: f64, theta2: f64, theta3: f64, xi: f64) -> Result<Self> {
        let p = Self {
            theta1,
            theta2,
            theta3,
            xi,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta1.is_finite() && self.theta2.is_finite() && self.theta3.is_finite()) {
            return Err(Error::domain(format!("non-finite curve parameters {self:?}")));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::domain(format!("shape xi must be positive, got {}", self.xi)));
        }
        Ok(())
    }
}

/// Progression constant `gamma` in (0, 1) for flat-time queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatTimeQuery {
    gamma: f64,
}

impl FlatTimeQuery {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Log of the basis factor, assuming validated inputs.
#[inline]
pub(crate) fn log_basis_unchecked(t: f64, theta2: f64, theta3: f64, xi: f64) -> f64 {
    log_basis_with_ln_xi(t, theta2, theta3, xi, xi.ln())
}

#[inline]
pub(crate) fn log_basis_with_ln_xi(t: f64, theta2: f64, theta3: f64, xi: f64, ln_xi: f64) -> f64 {
    let a = -theta2 * (t - theta3);
    // log(1 + ξ e^a) = softplus(a + log ξ)
    -softplus(a + ln_xi) / xi
}

#[inline]
pub(crate) fn basis_unchecked(t: f64, theta2: f64, theta3: f64, xi: f64) -> f64 {
    log_basis_unchecked(t, theta2, theta3, xi).exp()
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(format!("non-finite input among {values:?}")))
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi.is_finite() && xi > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("shape xi must be positive, got {xi}")))
    }
}

/// Evaluates the Richards curve at day `t`.
pub fn richards(t: f64, p: &RichardsParams) -> Result<f64> {
    check_finite(&[t])?;
    p.validate()?;
    Ok(p.theta1 * basis_unchecked(t, p.theta2, p.theta3, p.xi))
}

/// Gompertz curve `θ1 · exp[−exp{−θ2 (t − θ3)}]`.
pub fn gompertz(t: f64, theta1: f64, theta2: f64, theta3: f64) -> Result<f64> {
    check_finite(&[t, theta1, theta2, theta3])?;
    Ok(theta1 * (-(-theta2 * (t - theta3)).exp()).exp())
}

/// Elementwise [`richards`] over `times`.
pub fn richards_series(times: &[f64], p: &RichardsParams) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Err(Error::domain("richards_series needs at least one time point"));
    }
    check_finite(times)?;
    p.validate()?;
    Ok(times
        .iter()
        .map(|&t| p.theta1 * basis_unchecked(t, p.theta2, p.theta3, p.xi))
        .collect())
}

/// The bracket `[1 + ξ·exp{−θ2 (t − θ3)}]^(−1/ξ)`, so that
/// `richards(t, p) == p.theta1 * basis(t, p.theta2, p.theta3, p.xi)`.
pub fn basis(t: f64, theta2: f64, theta3: f64, xi: f64) -> Result<f64> {
    check_finite(&[t, theta2, theta3])?;
    check_xi(xi)?;
    Ok(basis_unchecked(t, theta2, theta3, xi))
}

/// Day at which the curve reaches the fraction `gamma` of its asymptote.
pub fn flat_time_point(p: &RichardsParams, q: FlatTimeQuery) -> Result<f64> {
    p.validate()?;
    if p.theta2 == 0.0 {
        return Err(Error::domain("flat time point undefined for theta2 = 0"));
    }
    let gamma = q.gamma();
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    // (1/γ)^ξ − 1 = expm1(−ξ log γ)
    let bracket = (-p.xi * gamma.ln()).exp_m1() / p.xi;
    Ok(p.theta3 - bracket.ln() / p.theta2)
}
