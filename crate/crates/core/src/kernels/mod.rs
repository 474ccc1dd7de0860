//! One-dimensional Brownian kernels, Vandermonde products and the
//! Karlin–McGregor determinant with its two-sided product bounds.
//!
//! Everything here is evaluated in log domain. For ordered points the
//! determinant is factored as
//!
//! ```text
//! det[G_t(x_i, y_j)] = (2πt)^{-n/2} · Π e^{-(x_i² + y_i²)/2t} · det[e^{x_i y_j / t}]
//! ```
//!
//! and only the last factor needs an elimination (see [`det`]).

pub mod det;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logsigned::{LogSigned, Sign};

/// Strictly increasing, finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderedPoints(Vec<f64>);

impl OrderedPoints {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("ordered points must be non-empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite coordinate {v}")));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Contract(format!(
                "coordinates not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(OrderedPoints(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiplies every coordinate by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Domain(format!("scale factor {factor} must be positive")));
        }
        OrderedPoints::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn diameter(&self) -> f64 {
        self.0[self.0.len() - 1] - self.0[0]
    }
}

impl<'de> Deserialize<'de> for OrderedPoints {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        OrderedPoints::new(v).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<Vec<f64>> for OrderedPoints {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        OrderedPoints::new(v)
    }
}

/// A strictly positive, finite time.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct TimeValue(f64);

impl TimeValue {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t.is_finite() {
            Ok(TimeValue(t))
        } else {
            Err(Error::Domain(format!("time must be positive and finite, got {t}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

pub fn log_gaussian_kernel(a: f64, b: f64, t: TimeValue) -> f64 {
    let t = t.get();
    -0.5 * (2.0 * PI * t).ln() - (a - b).powi(2) / (2.0 * t)
}

/// `(2πt)^{-1/2} exp(-(a-b)²/2t)`.
pub fn gaussian_kernel(a: f64, b: f64, t: TimeValue) -> f64 {
    log_gaussian_kernel(a, b, t).exp()
}

/// `Π_{i<j} (x_i - x_j)`; the empty product is one.
pub fn vandermonde(x: &[f64]) -> LogSigned {
    let mut negatives = 0usize;
    let mut log_abs = 0.0;
    for (i, &a) in x.iter().enumerate() {
        for &b in &x[i + 1..] {
            let d = a - b;
            if d == 0.0 {
                return LogSigned::ZERO;
            }
            if d < 0.0 {
                negatives += 1;
            }
            log_abs += d.abs().ln();
        }
    }
    let sign = if negatives.is_multiple_of(2) {
        Sign::Positive
    } else {
        Sign::Negative
    };
    LogSigned::new(sign, log_abs)
}

/// `ln Π_{k=1}^{m} k!`.
pub fn log_superfactorial(m: usize) -> f64 {
    (1..=m).map(|k| (1..=k).map(|j| (j as f64).ln()).sum::<f64>()).sum()
}

/// `ln c_n` for the product bounds, `c_n = (Π_{k=1}^{n-1} k!)^{-1}`.
///
/// This is the constant for which `det[e^{x_i y_j}] / (Δ(x)Δ(y))` tends to
/// `c_n` as the points collapse, so it is also the normalization of the
/// unitary group integral.
pub fn log_sandwich_constant(n: usize) -> f64 {
    -log_superfactorial(n.saturating_sub(1))
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Contract(format!(
            "length mismatch: x has {} points, y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Contract("at least one point is required".into()));
    }
    Ok(())
}

/// Signed `det[G_t(x_i, y_j)]` for arbitrary, possibly unordered or
/// coincident inputs.
pub fn km_determinant(x: &[f64], y: &[f64], t: TimeValue) -> Result<LogSigned> {
    check_lengths(x, y)?;
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("non-finite coordinate {v}")));
    }
    let n = x.len() as f64;
    let tv = t.get();
    let log_prefactor = -0.5 * n * (2.0 * PI * tv).ln()
        - x.iter().chain(y).map(|v| v * v).sum::<f64>() / (2.0 * tv);
    Ok(det::det_exp_kernel(x, y, tv).scale_log(log_prefactor))
}

/// Transition density of `n` non-intersecting Brownian paths from `x` to
/// `y` in time `t`. Positive for ordered inputs.
pub fn km_density(x: &OrderedPoints, y: &OrderedPoints, t: TimeValue) -> Result<LogSigned> {
    km_determinant(x.as_slice(), y.as_slice(), t)
}

/// Lower and upper product bounds on [`km_density`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KmBounds {
    pub lower: LogSigned,
    pub upper: LogSigned,
}

impl KmBounds {
    /// Whether `value` lies in `[lower, upper]` up to relative `slack`.
    pub fn contains(&self, value: LogSigned, slack: f64) -> bool {
        let lo = self.lower.scale_log((1.0 - slack).ln());
        let hi = self.upper.scale_log((1.0 + slack).ln());
        lo <= value && value <= hi
    }
}

pub fn km_bounds(x: &OrderedPoints, y: &OrderedPoints, t: TimeValue) -> Result<KmBounds> {
    let (xs, ys) = (x.as_slice(), y.as_slice());
    check_lengths(xs, ys)?;
    let n = xs.len();
    let inv_sqrt_t = t.get().sqrt().recip();
    let scaled = |v: &[f64]| v.iter().map(|a| a * inv_sqrt_t).collect::<Vec<_>>();
    let common = log_sandwich_constant(n)
        + vandermonde(&scaled(xs)).abs().log_abs
        + vandermonde(&scaled(ys)).abs().log_abs;
    let aligned: f64 = (0..n).map(|i| log_gaussian_kernel(xs[i], ys[i], t)).sum();
    let reversed: f64 = (0..n)
        .map(|i| log_gaussian_kernel(xs[i], ys[n - 1 - i], t))
        .sum();
    Ok(KmBounds {
        lower: LogSigned::positive(common + reversed),
        upper: LogSigned::positive(common + aligned),
    })
}

/// Relative deviation between `G_t(x, y)` and `t^{-n/2} G_1(x/√t, y/√t)`.
pub fn check_scaling(x: &OrderedPoints, y: &OrderedPoints, t: TimeValue) -> Result<f64> {
    check_lengths(x.as_slice(), y.as_slice())?;
    let direct = km_density(x, y, t)?;
    let s = t.get().sqrt().recip();
    let unit = TimeValue::new(1.0)?;
    let rescaled = km_density(&x.scaled(s)?, &y.scaled(s)?, unit)?
        .scale_log(-0.5 * x.len() as f64 * t.get().ln());
    Ok(direct.relative_deviation(rescaled))
}
