//! Closed-form moments of iid centered Gaussian noise `N(0, σ²)`.
//!
//! Integer coefficients are computed exactly and only converted to `f64` when
//! multiplied by the power of `σ`.

use std::f64::consts::FRAC_2_PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiindex::{factorial, MultiIndex};

/// Noise standard deviation. Zero is allowed and makes every moment of
/// positive order vanish.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Sigma(f64);

impl Sigma {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Sigma(value))
        } else {
            Err(Error::usage(format!(
                "sigma must be finite and non-negative, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }

    fn pow(self, k: u32) -> f64 {
        self.0.powi(k as i32)
    }
}

impl TryFrom<f64> for Sigma {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Sigma::new(value)
    }
}

impl From<Sigma> for f64 {
    fn from(s: Sigma) -> f64 {
        s.0
    }
}

/// `n!!` with `0!! = (-1)!! = 1`.
pub fn double_factorial(n: i64) -> Result<u128> {
    let mut acc = 1u128;
    let mut k = n;
    while k > 1 {
        acc = acc
            .checked_mul(k as u128)
            .ok_or_else(|| Error::Overflow(format!("{n}!! exceeds u128")))?;
        k -= 2;
    }
    Ok(acc)
}

/// `(2s)! / (2^s s!) = (2s-1)!!`, the coefficient of `E[ε^{2s}]`.
fn even_coefficient(s: u32) -> Result<u128> {
    double_factorial(2 * s as i64 - 1)
}

/// `E[ε^{2s}] = (2s)!/(2^s s!)·σ^{2s}`.
pub fn even_moment(s: u32, sigma: Sigma) -> Result<f64> {
    Ok(even_coefficient(s)? as f64 * sigma.pow(2 * s))
}

/// `E[|ε|^s] = 2^{s/2} σ^s Γ(s/2 + 1/2) / √π`.
///
/// At half-integer arguments this is `(s-1)!!·σ^s`, times `√(2/π)` when `s` is odd.
pub fn abs_moment(s: u32, sigma: Sigma) -> f64 {
    let coeff = match double_factorial(s as i64 - 1) {
        Ok(c) => c as f64,
        Err(_) => (1..s).rev().step_by(2).map(f64::from).product(),
    };
    let parity = if s % 2 == 1 { FRAC_2_PI.sqrt() } else { 1.0 };
    coeff * parity * sigma.pow(s)
}

/// `E[Z_1^{s_1}…Z_d^{s_d}]` for iid `Z_m ~ N(0, σ²)`; zero whenever a component is odd.
pub fn product_moment(s: &MultiIndex, sigma: Sigma) -> Result<f64> {
    match s.halved() {
        None => Ok(0.0),
        Some(half) => upsilon(&half, sigma),
    }
}

fn upsilon_coefficient(s: &MultiIndex) -> Result<u128> {
    s.components().iter().try_fold(1u128, |acc, &sm| {
        acc.checked_mul(even_coefficient(sm)?)
            .ok_or_else(|| Error::Overflow(format!("Υ coefficient for {s} exceeds u128")))
    })
}

/// `Υ(s, σ) = Π (2s_m)!/(2^{s_m} s_m!)·σ^{2 s_m}`.
pub fn upsilon(s: &MultiIndex, sigma: Sigma) -> Result<f64> {
    Ok(upsilon_coefficient(s)? as f64 * sigma.pow(2 * s.order()))
}

/// `Υ(s, σ) - Υ(s/2, σ)²` for an all-even `s`, with the integer part of the
/// difference taken exactly before scaling by `σ^{2|s|}`.
pub fn jensen_bracket(s: &MultiIndex, sigma: Sigma) -> Result<f64> {
    let half = s
        .halved()
        .ok_or_else(|| Error::usage(format!("{s} has an odd component")))?;
    let full = upsilon_coefficient(s)?;
    let h = upsilon_coefficient(&half)?;
    let sq = h
        .checked_mul(h)
        .ok_or_else(|| Error::Overflow(format!("Υ({half})² exceeds u128")))?;
    debug_assert!(full >= sq);
    Ok((full - sq) as f64 * sigma.pow(2 * s.order()))
}

/// The Gaussian factor `Π s_m!/(2^{s_m/2}(s_m/2)!)·σ^{s_m}` attached to the
/// all-even SmoothGrad terms. Equals `Υ(s/2, σ)`.
pub fn smoothgrad_coeff(s: &MultiIndex, sigma: Sigma) -> Result<f64> {
    if s.any_odd() {
        return Err(Error::usage(format!(
            "SmoothGrad coefficient needs an all-even index, got {s}"
        )));
    }
    let coeff = s.components().iter().try_fold(1u128, |acc, &sm| {
        let num = factorial(sm)?;
        let den = (1u128 << (sm / 2))
            .checked_mul(factorial(sm / 2)?)
            .ok_or_else(|| Error::Overflow(format!("coefficient for {s} exceeds u128")))?;
        debug_assert_eq!(num % den, 0);
        acc.checked_mul(num / den)
            .ok_or_else(|| Error::Overflow(format!("coefficient for {s} exceeds u128")))
    })?;
    let value = coeff as f64 * sigma.pow(s.order());
    debug_assert_eq!(
        Some(value),
        s.halved().and_then(|h| upsilon(&h, sigma).ok())
    );
    Ok(value)
}
