//! Nonnegative magnitudes stored in the log domain, for quantities like
//! `exp(T^{1/2gamma}/...)` that outgrow f64 long before the comparisons on
//! them stop being meaningful.

/// A nonnegative real held as its natural log. Zero is `ln = -inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMag {
    ln: f64,
}

impl LogMag {
    pub const ZERO: LogMag = LogMag { ln: f64::NEG_INFINITY };

    pub fn from_value(v: f64) -> LogMag {
        debug_assert!(v >= 0.0);
        LogMag { ln: v.ln() }
    }

    pub fn from_ln(ln: f64) -> LogMag {
        LogMag { ln }
    }

    /// ln(e^x - 1), stable for both tails.
    pub fn from_ln_expm1(x: f64) -> LogMag {
        if x > 36.0 {
            // ln(e^x - 1) = x + ln(1 - e^{-x})
            LogMag { ln: x + (-(-x).exp()).ln_1p() }
        } else {
            LogMag { ln: x.exp_m1().ln() }
        }
    }

    pub fn ln(&self) -> f64 {
        self.ln
    }

    /// The value itself; +inf when out of range.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    pub fn mul(&self, other: LogMag) -> LogMag {
        if self.is_zero() || other.is_zero() {
            return LogMag::ZERO;
        }
        LogMag { ln: self.ln + other.ln }
    }

    pub fn mul_value(&self, v: f64) -> LogMag {
        self.mul(LogMag::from_value(v))
    }

    /// self - other, requiring self >= other. Returns ZERO on exact ties.
    pub fn sub(&self, other: LogMag) -> Option<LogMag> {
        if other.is_zero() {
            return Some(*self);
        }
        if other.ln > self.ln {
            return None;
        }
        if other.ln == self.ln {
            return Some(LogMag::ZERO);
        }
        // ln(a - b) = ln a + ln(1 - e^{ln b - ln a})
        Some(LogMag {
            ln: self.ln + (-((other.ln - self.ln).exp())).ln_1p(),
        })
    }

    pub fn add(&self, other: LogMag) -> LogMag {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return *self;
        }
        let (hi, lo) = if self.ln >= other.ln {
            (self.ln, other.ln)
        } else {
            (other.ln, self.ln)
        };
        LogMag { ln: hi + (lo - hi).exp().ln_1p() }
    }
}

impl PartialOrd for LogMag {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.ln.partial_cmp(&other.ln)
    }
}
