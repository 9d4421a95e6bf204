use std::ops::Mul;

use crate::tensor::C64;

/// A complex number stored as `exp(log_magnitude) * phase`, `|phase| = 1`.
///
/// Zero is `log_magnitude = -inf` with phase one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogComplex {
    pub log_magnitude: f64,
    pub phase: C64,
}

impl LogComplex {
    pub const ZERO: Self = Self {
        log_magnitude: f64::NEG_INFINITY,
        phase: C64::new(1.0, 0.0),
    };

    pub const ONE: Self = Self {
        log_magnitude: 0.0,
        phase: C64::new(1.0, 0.0),
    };

    pub fn from_complex(z: C64) -> Self {
        let mag = z.norm();
        if mag == 0.0 || !mag.is_finite() {
            return Self::ZERO;
        }
        Self {
            log_magnitude: mag.ln(),
            phase: z / mag,
        }
    }

    pub fn to_complex(self) -> C64 {
        if self.is_zero() {
            return C64::new(0.0, 0.0);
        }
        self.phase * self.log_magnitude.exp()
    }

    pub fn is_zero(&self) -> bool {
        self.log_magnitude == f64::NEG_INFINITY
    }

    pub fn magnitude(&self) -> f64 {
        self.log_magnitude.exp()
    }

    /// Multiplies by the positive real `exp(log)`.
    pub fn scale_log(self, log: f64) -> Self {
        if self.is_zero() {
            return self;
        }
        Self {
            log_magnitude: self.log_magnitude + log,
            phase: self.phase,
        }
    }

    pub fn conj(self) -> Self {
        Self {
            log_magnitude: self.log_magnitude,
            phase: self.phase.conj(),
        }
    }

    /// Sum carried out relative to the larger magnitude.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Self) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (big, small) = if self.log_magnitude >= other.log_magnitude {
            (self, other)
        } else {
            (other, self)
        };
        let rel = big.phase + small.phase * (small.log_magnitude - big.log_magnitude).exp();
        Self::from_complex(rel).scale_log(big.log_magnitude)
    }

    pub fn sum(values: impl IntoIterator<Item = Self>) -> Self {
        let values: Vec<Self> = values.into_iter().collect();
        let top = values.iter().map(|v| v.log_magnitude).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let rel: C64 = values
            .iter()
            .filter(|v| !v.is_zero())
            .map(|v| v.phase * (v.log_magnitude - top).exp())
            .sum();
        Self::from_complex(rel).scale_log(top)
    }
}

impl Mul for LogComplex {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            return Self::ZERO;
        }
        let phase = self.phase * rhs.phase;
        Self {
            log_magnitude: self.log_magnitude + rhs.log_magnitude,
            phase: phase / phase.norm(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_sums() {
        let a = C64::new(3.0, -4.0);
        let b = C64::new(-1.0, 0.5);
        let la = LogComplex::from_complex(a);
        assert!((la.to_complex() - a).norm() < 1e-14);
        assert!((la.add(LogComplex::from_complex(b)).to_complex() - (a + b)).norm() < 1e-14);
        assert!(
            (LogComplex::sum([la, LogComplex::from_complex(b), LogComplex::ZERO]).to_complex() - (a + b)).norm()
                < 1e-14
        );
        assert!(((la * LogComplex::from_complex(b)).to_complex() - a * b).norm() < 1e-13);
        assert!(LogComplex::from_complex(a).add(LogComplex::from_complex(-a)).is_zero());
    }

    #[test]
    fn huge_magnitudes_do_not_overflow() {
        let a = LogComplex::ONE.scale_log(2000.0);
        let b = LogComplex::ONE.scale_log(2000.0 + 2f64.ln());
        let s = a.add(b);
        assert!((s.log_magnitude - (2000.0 + 3f64.ln())).abs() < 1e-12);
    }
}
