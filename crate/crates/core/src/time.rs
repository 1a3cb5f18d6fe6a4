//! Fixed-point virtual time.
//!
//! One abstract time unit is split into [`TICKS_PER_UNIT`] ticks. All guard
//! comparisons happen on integer ticks, so traces are identical on every
//! platform.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use thiserror::Error;

/// Number of ticks in one abstract time unit.
pub const TICKS_PER_UNIT: u64 = 1_000_000;

const FRACTION_DIGITS: usize = 6;

/// A point in virtual time, or a duration, measured in ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ticks(ticks: u64) -> Self {
        SimTime(ticks)
    }

    pub const fn from_units(units: u64) -> Self {
        SimTime(units * TICKS_PER_UNIT)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    /// Lossy conversion for reporting only.
    pub fn as_units_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT as f64
    }

    pub fn saturating_add(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(other.0))
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn checked_mul(self, factor: u64) -> Option<SimTime> {
        self.0.checked_mul(factor).map(SimTime)
    }

    /// Midpoint of `[self, other]`, rounded down.
    pub fn midpoint(self, other: SimTime) -> SimTime {
        let (lo, hi) = if self <= other {
            (self, other)
        } else {
            (other, self)
        };
        SimTime(lo.0 + (hi.0 - lo.0) / 2)
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("virtual time overflow"))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("negative virtual duration"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:0width$}",
            self.0 / TICKS_PER_UNIT,
            self.0 % TICKS_PER_UNIT,
            width = FRACTION_DIGITS
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseTimeError {
    #[error("empty time value")]
    Empty,
    #[error("invalid time value `{0}`: expected a non-negative decimal")]
    Invalid(String),
    #[error("time value `{0}` has more than six fractional digits")]
    TooPrecise(String),
    #[error("time value `{0}` is too large")]
    Overflow(String),
}

impl FromStr for SimTime {
    type Err = ParseTimeError;

    /// Parses a non-negative decimal number of time units, e.g. `12`, `0.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ParseTimeError::Empty);
        }
        let (whole, frac) = match s.split_once('.') {
            Some((w, f)) => (w, f),
            None => (s, ""),
        };
        let digits = |part: &str| part.bytes().all(|b| b.is_ascii_digit());
        if (whole.is_empty() && frac.is_empty()) || !digits(whole) || !digits(frac) {
            return Err(ParseTimeError::Invalid(s.to_string()));
        }
        if frac.len() > FRACTION_DIGITS {
            return Err(ParseTimeError::TooPrecise(s.to_string()));
        }
        let overflow = || ParseTimeError::Overflow(s.to_string());
        let whole: u64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| overflow())?
        };
        let mut frac_ticks: u64 = 0;
        for (i, b) in frac.bytes().enumerate() {
            frac_ticks += u64::from(b - b'0') * 10u64.pow((FRACTION_DIGITS - 1 - i) as u32);
        }
        whole
            .checked_mul(TICKS_PER_UNIT)
            .and_then(|t| t.checked_add(frac_ticks))
            .map(SimTime)
            .ok_or_else(overflow)
    }
}
