//! Sign and log-magnitude representation for quantities that span hundreds
//! of orders of magnitude (determinants, kernel products).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Div, Mul};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Negative => -1,
            Sign::Zero => 0,
            Sign::Positive => 1,
        }
    }

    fn from_i8(s: i8) -> Self {
        match s.signum() {
            -1 => Sign::Negative,
            0 => Sign::Zero,
            _ => Sign::Positive,
        }
    }
}

/// `sign · exp(log_abs)`. When `sign` is [`Sign::Zero`] the magnitude is
/// ignored and stored as negative infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSigned {
    pub sign: Sign,
    pub log_abs: f64,
}

impl LogSigned {
    pub const ZERO: LogSigned = LogSigned {
        sign: Sign::Zero,
        log_abs: f64::NEG_INFINITY,
    };
    pub const ONE: LogSigned = LogSigned {
        sign: Sign::Positive,
        log_abs: 0.0,
    };

    pub fn new(sign: Sign, log_abs: f64) -> Self {
        if sign == Sign::Zero {
            Self::ZERO
        } else {
            LogSigned { sign, log_abs }
        }
    }

    pub fn positive(log_abs: f64) -> Self {
        Self::new(Sign::Positive, log_abs)
    }

    pub fn from_f64(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else if v > 0.0 {
            Self::positive(v.ln())
        } else {
            Self::new(Sign::Negative, (-v).ln())
        }
    }

    /// Materializes the value; underflows to `±0` or overflows to `±inf`
    /// outside the `f64` range.
    pub fn to_f64(self) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            Sign::Positive => self.log_abs.exp(),
            Sign::Negative => -self.log_abs.exp(),
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn abs(self) -> Self {
        match self.sign {
            Sign::Zero => self,
            _ => Self::positive(self.log_abs),
        }
    }

    /// Multiplies by a positive scalar given as its logarithm.
    pub fn scale_log(self, log_factor: f64) -> Self {
        Self::new(self.sign, self.log_abs + log_factor)
    }

    pub fn powi(self, k: i32) -> Self {
        if self.is_zero() {
            return if k == 0 { Self::ONE } else { self };
        }
        let sign = if self.sign == Sign::Negative && k % 2 != 0 {
            Sign::Negative
        } else {
            Sign::Positive
        };
        Self::new(sign, self.log_abs * k as f64)
    }

    /// `|self − other| / |self|`, computed without materializing either side.
    pub fn relative_deviation(self, other: LogSigned) -> f64 {
        match (self.sign, other.sign) {
            (Sign::Zero, Sign::Zero) => 0.0,
            (Sign::Zero, _) => f64::INFINITY,
            (_, Sign::Zero) => 1.0,
            (a, b) if a == b => (other.log_abs - self.log_abs).exp_m1().abs(),
            _ => 1.0 + (other.log_abs - self.log_abs).exp(),
        }
    }
}

impl Mul for LogSigned {
    type Output = LogSigned;

    fn mul(self, rhs: LogSigned) -> LogSigned {
        let s = self.sign.as_i8() * rhs.sign.as_i8();
        LogSigned::new(Sign::from_i8(s), self.log_abs + rhs.log_abs)
    }
}

impl Div for LogSigned {
    type Output = LogSigned;

    fn div(self, rhs: LogSigned) -> LogSigned {
        assert!(!rhs.is_zero(), "division by a zero LogSigned");
        let s = self.sign.as_i8() * rhs.sign.as_i8();
        LogSigned::new(Sign::from_i8(s), self.log_abs - rhs.log_abs)
    }
}

impl PartialOrd for LogSigned {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let (a, b) = (self.sign.as_i8(), other.sign.as_i8());
        if a != b {
            return a.partial_cmp(&b);
        }
        match self.sign {
            Sign::Zero => Some(Ordering::Equal),
            Sign::Positive => self.log_abs.partial_cmp(&other.log_abs),
            Sign::Negative => other.log_abs.partial_cmp(&self.log_abs),
        }
    }
}

impl fmt::Display for LogSigned {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Zero => write!(f, "0"),
            Sign::Positive => write!(f, "exp({})", self.log_abs),
            Sign::Negative => write!(f, "-exp({})", self.log_abs),
        }
    }
}

impl std::ops::Neg for LogSigned {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(Sign::from_i8(-self.sign.as_i8()), self.log_abs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_and_one() {
        assert_eq!(LogSigned::from_f64(0.0), LogSigned::ZERO);
        assert_eq!(LogSigned::from_f64(1.0), LogSigned::ONE);
        assert_eq!(LogSigned::ZERO.to_f64(), 0.0);
    }

    #[test]
    fn ordering_respects_sign() {
        let a = LogSigned::from_f64(-5.0);
        let b = LogSigned::from_f64(-0.5);
        let c = LogSigned::from_f64(2.0);
        assert!(a < b && b < LogSigned::ZERO && LogSigned::ZERO < c);
    }

    #[test]
    fn relative_deviation_of_equal_values_is_zero() {
        let v = LogSigned::positive(-700.0);
        assert_eq!(v.relative_deviation(v), 0.0);
        assert!((v.relative_deviation(v.scale_log(1e-3)) - 1e-3).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn round_trip(v in prop_oneof![-1e300f64..-1e-300, 1e-300f64..1e300]) {
            let back = LogSigned::from_f64(v).to_f64();
            prop_assert!(((back - v) / v).abs() <= 1e-12);
        }

        #[test]
        fn product_matches_float(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let p = (LogSigned::from_f64(a) * LogSigned::from_f64(b)).to_f64();
            let exact = a * b;
            prop_assert!((p - exact).abs() <= 1e-12 * exact.abs());
        }
    }
}
