//! Virtual time.
//!
//! The simulator runs on an integer nanosecond clock. Keeping the clock
//! integral makes event ordering a total order and keeps replays of the
//! same scenario bit-identical; fractional delays from the delay model
//! are rounded onto the nanosecond grid at the scheduling boundary.

use core::fmt;
use core::ops::{Add, Sub};

const NANOS_PER_SEC: u64 = 1_000_000_000;
const NANOS_PER_MILLI: f64 = 1_000_000.0;

/// A point in virtual time, in nanoseconds since the start of the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Converts non-negative seconds, rounding to the nanosecond grid.
    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0 && secs.is_finite());
        SimTime(round_non_negative(secs * NANOS_PER_SEC as f64))
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    /// Advances by a non-negative duration in milliseconds, rounded to
    /// the nanosecond grid.
    pub fn after_ms(self, ms: f64) -> Self {
        SimTime(self.0 + ms_to_nanos(ms))
    }

    /// Elapsed time since `earlier`, in milliseconds.
    pub fn ms_since(self, earlier: SimTime) -> f64 {
        debug_assert!(self.0 >= earlier.0);
        (self.0 - earlier.0) as f64 / NANOS_PER_MILLI
    }

    /// Elapsed time since `earlier`, in seconds.
    pub fn secs_since(self, earlier: SimTime) -> f64 {
        self.ms_since(earlier) / 1_000.0
    }
}

/// Rounds a non-negative millisecond value to whole nanoseconds.
pub fn ms_to_nanos(ms: f64) -> u64 {
    debug_assert!(ms >= 0.0 && ms.is_finite());
    round_non_negative(ms * NANOS_PER_MILLI)
}

/// Round-half-up for non-negative values; `f64::round` needs `std`.
fn round_non_negative(value: f64) -> u64 {
    (value + 0.5) as u64
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, ns: u64) -> SimTime {
        SimTime(self.0 + ns)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    /// Seconds with millisecond precision, the resolution reports use.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_seconds() {
        let t = SimTime::from_secs_f64(1.5);
        assert_eq!(t.as_nanos(), 1_500_000_000);
        assert_eq!(t.as_secs_f64(), 1.5);
    }

    #[test]
    fn ms_arithmetic_on_nanosecond_grid() {
        let t = SimTime::from_secs_f64(1.0).after_ms(5.805);
        assert_eq!(t.as_nanos(), 1_005_805_000);
        assert_eq!(t.ms_since(SimTime::from_secs_f64(1.0)), 5.805);
    }

    #[test]
    fn display_uses_millisecond_precision() {
        use alloc::string::ToString;
        assert_eq!(SimTime::from_secs_f64(280.0184).to_string(), "280.018");
    }
}
