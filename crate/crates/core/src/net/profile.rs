use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default profile period: one day, in seconds.
pub const DAY_SECONDS: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("profile has no breakpoints")]
    Empty,
    #[error("profile period must be positive")]
    NonPositivePeriod,
    #[error("breakpoint {0} offset lies outside [0, period)")]
    OffsetOutOfRange(usize),
    #[error("breakpoint {0} offset does not strictly increase")]
    NotIncreasing(usize),
    #[error("breakpoint {0} travel time must be positive and finite")]
    NonPositiveTravelTime(usize),
    #[error("FIFO violated on the segment starting at breakpoint {0}")]
    FifoViolation(usize),
}

/// Periodic piecewise-linear travel time on an arc.
///
/// Breakpoints are `(departure offset, travel time)` pairs. Between the last
/// breakpoint and the first one of the next period the profile interpolates
/// across the wrap. Construction rejects any profile under which leaving later
/// could arrive earlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeProfile<T> {
    breakpoints: Vec<(T, T)>,
    period: T,
}

impl<T: Scalar> TravelTimeProfile<T> {
    pub fn new(breakpoints: Vec<(T, T)>, period: T) -> Result<Self, ProfileError> {
        if breakpoints.is_empty() {
            return Err(ProfileError::Empty);
        }
        if !(period > T::zero()) || !period.is_finite_value() {
            return Err(ProfileError::NonPositivePeriod);
        }
        for (i, &(offset, tt)) in breakpoints.iter().enumerate() {
            if !(offset >= T::zero() && offset < period) {
                return Err(ProfileError::OffsetOutOfRange(i));
            }
            if !(tt > T::zero()) || !tt.is_finite_value() {
                return Err(ProfileError::NonPositiveTravelTime(i));
            }
            if i > 0 && !(offset > breakpoints[i - 1].0) {
                return Err(ProfileError::NotIncreasing(i));
            }
        }
        // The arrival function t + tt(t) is piecewise linear, so it is
        // nondecreasing iff it is nondecreasing across every segment.
        let n = breakpoints.len();
        for i in 0..n {
            let (oa, ta) = breakpoints[i];
            let (ob, tb) = if i + 1 < n {
                breakpoints[i + 1]
            } else {
                (breakpoints[0].0 + period, breakpoints[0].1)
            };
            if n > 1 && ob + tb < oa + ta {
                return Err(ProfileError::FifoViolation(i));
            }
        }
        Ok(Self {
            breakpoints,
            period,
        })
    }

    /// Time-invariant profile over the default daily period.
    pub fn constant(travel_time: T) -> Self {
        Self::new(vec![(T::zero(), travel_time)], T::lit(DAY_SECONDS))
            .expect("constant profile with positive travel time")
    }

    pub fn breakpoints(&self) -> &[(T, T)] {
        &self.breakpoints
    }

    pub fn period(&self) -> T {
        self.period
    }

    /// Travel time when entering the arc at `departure`.
    pub fn evaluate(&self, departure: T) -> T {
        let bps = &self.breakpoints;
        if bps.len() == 1 {
            return bps[0].1;
        }
        let u = departure.wrap(self.period);
        let idx = bps.partition_point(|&(o, _)| o <= u);
        let (a, b) = if idx == 0 {
            let (ol, tl) = bps[bps.len() - 1];
            ((ol - self.period, tl), bps[0])
        } else if idx == bps.len() {
            let (o0, t0) = bps[0];
            (bps[idx - 1], (o0 + self.period, t0))
        } else {
            (bps[idx - 1], bps[idx])
        };
        if u == a.0 {
            return a.1;
        }
        a.1 + (b.1 - a.1) * (u - a.0) / (b.0 - a.0)
    }

    /// Largest travel time over the period (attained at a breakpoint).
    pub fn max_travel_time(&self) -> T {
        self.breakpoints
            .iter()
            .map(|&(_, t)| t)
            .fold(self.breakpoints[0].1, T::max_of)
    }

    /// Smallest travel time over the period.
    pub fn min_travel_time(&self) -> T {
        self.breakpoints
            .iter()
            .map(|&(_, t)| t)
            .fold(self.breakpoints[0].1, T::min_of)
    }
}
