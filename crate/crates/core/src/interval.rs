//! Closed real intervals and the interval extensions used to enclose
//! qr-number values over a region of state space.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{QrError, Result};

/// A closed interval `[lo, hi]` of the real line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(QrError::InvalidParameter(format!(
                "interval endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(QrError::InvalidParameter(format!(
                "interval is empty: [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Midpoint `a0`.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Width `|I|`.
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Largest absolute value over the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value over the interval.
    pub fn mig(&self) -> f64 {
        if self.lo <= 0.0 && 0.0 <= self.hi {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    pub fn scale(&self, alpha: f64) -> Interval {
        let (a, b) = (alpha * self.lo, alpha * self.hi);
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn abs(&self) -> Interval {
        Interval {
            lo: self.mig(),
            hi: self.mag(),
        }
    }

    pub fn square(&self) -> Interval {
        let m = self.mag();
        let n = self.mig();
        Interval { lo: n * n, hi: m * m }
    }

    /// Square root on the nonnegative part; `None` when the whole interval is
    /// negative.
    pub fn sqrt_pos(&self) -> Option<Interval> {
        if self.hi < 0.0 {
            return None;
        }
        Some(Interval {
            lo: self.lo.max(0.0).sqrt(),
            hi: self.hi.sqrt(),
        })
    }

    pub fn exp(&self) -> Interval {
        Interval {
            lo: self.lo.exp(),
            hi: self.hi.exp(),
        }
    }

    pub fn sin(&self) -> Interval {
        self.shifted_cos(-FRAC_PI_2)
    }

    pub fn cos(&self) -> Interval {
        self.shifted_cos(0.0)
    }

    // cos(x + shift) over the interval; sin(x) = cos(x - pi/2).
    fn shifted_cos(&self, shift: f64) -> Interval {
        if self.width() >= TAU {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let a = self.lo + shift;
        let b = self.hi + shift;
        let mut lo = a.cos().min(b.cos());
        let mut hi = a.cos().max(b.cos());
        // maxima at 2k pi, minima at (2k+1) pi
        let k_max = (a / TAU).ceil();
        if k_max * TAU <= b {
            hi = 1.0;
        }
        let k_min = ((a - PI) / TAU).ceil();
        if k_min * TAU + PI <= b {
            lo = -1.0;
        }
        Interval { lo, hi }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval {
            lo: self.lo + rhs.lo,
            hi: self.hi + rhs.hi,
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval {
            lo: self.lo - rhs.hi,
            hi: self.hi - rhs.lo,
        }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let p = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        Interval {
            lo: p.iter().copied().fold(f64::INFINITY, f64::min),
            hi: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
