use std::fmt;

/// A probability bound carried as its natural logarithm.
///
/// Bounds such as `M·e^{-ε²F/4+ε}` or `2^{-nsize}` underflow `f64` long
/// before they stop being meaningful, so all assembly happens in the log
/// domain and only [`LogProb::linear`] leaves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogProb {
    pub ln_value: f64,
}

impl LogProb {
    pub const ZERO: LogProb = LogProb {
        ln_value: f64::NEG_INFINITY,
    };

    pub fn from_ln(ln_value: f64) -> Self {
        LogProb { ln_value }
    }

    pub fn from_linear(p: f64) -> Self {
        LogProb { ln_value: p.ln() }
    }

    /// Set when the bound is at least one and therefore says nothing.
    pub fn clamped(&self) -> bool {
        self.ln_value >= 0.0
    }

    /// `min(1, exp(ln_value))`.
    pub fn linear(&self) -> f64 {
        if self.clamped() {
            1.0
        } else {
            self.ln_value.exp()
        }
    }

    pub fn log10(&self) -> f64 {
        self.ln_value / std::f64::consts::LN_10
    }

    /// Sum of two bounds, `ln(e^a + e^b)`.
    pub fn add(self, other: LogProb) -> LogProb {
        let (hi, lo) = if self.ln_value >= other.ln_value {
            (self.ln_value, other.ln_value)
        } else {
            (other.ln_value, self.ln_value)
        };
        if hi == f64::NEG_INFINITY {
            return LogProb::ZERO;
        }
        LogProb::from_ln(hi + (lo - hi).exp().ln_1p())
    }

    /// Multiply by a positive constant.
    pub fn scale(self, factor: f64) -> LogProb {
        LogProb::from_ln(self.ln_value + factor.ln())
    }
}

impl fmt::Display for LogProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.clamped() {
            write!(f, "1 (vacuous, ln={:.6})", self.ln_value)
        } else {
            write!(f, "10^{:.4}", self.log10())
        }
    }
}
