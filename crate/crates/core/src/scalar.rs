//! Scalar abstraction shared by every time and distance computation.
//!
//! The routing, signal and dispatch code is written once against [`Scalar`]
//! and instantiated for `f64` (the default), `f32`, and the exact rational
//! [`Exact`](crate::Exact) type used by tests that need tie-exact arithmetic.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type usable for seconds and meters.
pub trait Scalar:
    Copy + Debug + PartialOrd + Num + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts a literal. Panics if the value cannot be represented.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(|| panic!("{x} not representable"))
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Total order used for sorting and heap keys. Incomparable values
    /// (NaN) compare equal; validated inputs never produce them.
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn is_finite_value(self) -> bool;

    /// Injective key for hashing values (distinct values, distinct keys).
    fn hash_key(self) -> u128;

    /// Largest representable value strictly below `self` for floating point
    /// types; identity for exact types.
    fn step_down(self) -> Self;

    /// `self` reduced into `[0, period)`.
    fn wrap(self, period: Self) -> Self {
        let r = self % period;
        if r < Self::zero() {
            let shifted = r + period;
            // `r + period` can round up to `period` for tiny negative `r`.
            if shifted >= period {
                Self::zero()
            } else {
                shifted
            }
        } else {
            r
        }
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn is_finite_value(self) -> bool {
                self.is_finite()
            }

            fn hash_key(self) -> u128 {
                self.to_bits() as u128
            }

            fn step_down(self) -> Self {
                self.next_down()
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);

impl Scalar for Ratio<i64> {
    fn is_finite_value(self) -> bool {
        true
    }

    fn hash_key(self) -> u128 {
        // Ratios are kept reduced with a positive denominator.
        ((*self.numer() as u64 as u128) << 64) | (*self.denom() as u64 as u128)
    }

    fn step_down(self) -> Self {
        self
    }
}

/// Sum of a sequence in iteration order.
pub fn sum<T: Scalar>(it: impl IntoIterator<Item = T>) -> T {
    it.into_iter().fold(T::zero(), |acc, x| acc + x)
}
