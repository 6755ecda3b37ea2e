//! Scalar abstraction shared by distributions, predicates, costs and metrics.
//!
//! Counts and ticks are always integers; every real-valued quantity in the
//! crate is generic over [`Scalar`] so that the same code runs on `f32`,
//! `f64`, or exact rationals (`Rational64`) when bit-exact comparisons matter.

use std::fmt::{Debug, Display};

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// A real-like number usable throughout the engine.
pub trait Scalar:
    Num + Signed + FromPrimitive + ToPrimitive + Copy + PartialOrd + Debug + Display + Send + Sync + 'static
{
    /// Tolerance used when checking that a distribution sums to one.
    fn normalization_tolerance() -> Self;

    /// Converts an object count; counts in this crate always fit.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable as scalar")
    }

    /// Lossy conversion used only for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f32 {
    fn normalization_tolerance() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn normalization_tolerance() -> Self {
        1e-9
    }
}

impl Scalar for Rational64 {
    fn normalization_tolerance() -> Self {
        Rational64::new(1, 1_000_000_000)
    }
}

/// Half-up rounding of `fraction * total` apportioned so that the parts sum to `total`.
///
/// Each share is first rounded half-up; if the rounded shares do not add up to
/// `total`, units are moved by largest remainder (ties broken by position).
pub fn apportion<T: Scalar>(fractions: &[T], total: u64) -> Vec<u64> {
    let total_s = T::from_count(total);
    let half = T::one() / (T::one() + T::one());
    let mut exact = Vec::with_capacity(fractions.len());
    let mut shares = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let want = f * total_s;
        let floor = want.to_f64_lossy().floor().max(0.0) as u64;
        let rem = want - T::from_count(floor);
        let rounded = if rem >= half { floor + 1 } else { floor };
        exact.push(want);
        shares.push(rounded);
    }
    let mut sum: u64 = shares.iter().sum();
    while sum != total {
        // distance between the exact share and the rounded one decides who moves
        let idx = if sum < total {
            (0..shares.len())
                .max_by(|&a, &b| {
                    let da = exact[a] - T::from_count(shares[a]);
                    let db = exact[b] - T::from_count(shares[b]);
                    da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
                })
                .expect("nonempty")
        } else {
            (0..shares.len())
                .filter(|&i| shares[i] > 0)
                .min_by(|&a, &b| {
                    let da = exact[a] - T::from_count(shares[a]);
                    let db = exact[b] - T::from_count(shares[b]);
                    da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
                })
                .expect("some positive share")
        };
        if sum < total {
            shares[idx] += 1;
            sum += 1;
        } else {
            shares[idx] -= 1;
            sum -= 1;
        }
    }
    shares
}
