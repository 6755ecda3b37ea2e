//! Recognition of the dynamics type of a parameter series.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("series needs at least 3 samples, got {0}")]
    SeriesTooShort(usize),
    #[error("tolerance must be nonnegative")]
    NegativeTolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    MonotoneIncreasing,
    MonotoneDecreasing,
    NonMonotone,
    /// Every step stays inside the tolerance band.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsProfile<T> {
    pub trend: Trend,
    /// Sample indices where the sign of the first difference flips.
    pub critical_points: Vec<usize>,
    pub bounded_range: (T, T),
    /// Sample indices where the sign of the second difference flips.
    pub inflexions: Vec<usize>,
    pub cyclic: bool,
    /// Estimated period in samples, when cyclic.
    pub period: Option<T>,
}

fn sign<T: Scalar>(v: T, eps: T) -> i8 {
    if v > eps {
        1
    } else if v < -eps {
        -1
    } else {
        0
    }
}

/// Vertex indices where the nonzero sign of `signs` flips. A flip between the
/// last old-sign entry `i` and the first new-sign entry `j` is placed at the
/// middle of the vertex span `[i + 1, j + lead]` (rounded down); `lead` is 0
/// for first differences and 1 for second differences.
fn sign_flips(signs: &[i8], lead: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last: Option<(usize, i8)> = None;
    for (j, &s) in signs.iter().enumerate() {
        if s == 0 {
            continue;
        }
        if let Some((i, prev)) = last {
            if prev != s {
                out.push((i + 1 + j + lead) / 2);
            }
        }
        last = Some((j, s));
    }
    out
}

/// Positions where the series meets its mean. A run of samples within `eps`
/// of the mean counts once at its centre; a strict sign change between two
/// samples counts at the linearly interpolated crossing.
fn mean_crossings<T: Scalar>(series: &[T], eps: T) -> Vec<T> {
    let n = T::from_count(series.len() as u64);
    let mean = series.iter().fold(T::zero(), |a, &v| a + v) / n;
    let dev: Vec<T> = series.iter().map(|&v| v - mean).collect();
    let two = T::one() + T::one();
    let mut out = Vec::new();
    let mut i = 0;
    while i < dev.len() {
        if sign(dev[i], eps) == 0 {
            let start = i;
            while i + 1 < dev.len() && sign(dev[i + 1], eps) == 0 {
                i += 1;
            }
            out.push((T::from_count(start as u64) + T::from_count(i as u64)) / two);
        } else if i + 1 < dev.len() {
            let (a, b) = (sign(dev[i], eps), sign(dev[i + 1], eps));
            if a != 0 && b != 0 && a != b {
                let frac = dev[i] / (dev[i] - dev[i + 1]);
                out.push(T::from_count(i as u64) + frac);
            }
        }
        i += 1;
    }
    out
}

pub fn recognize_dynamics<T: Scalar>(series: &[T], eps: T) -> Result<DynamicsProfile<T>, ProfileError> {
    if series.len() < 3 {
        return Err(ProfileError::SeriesTooShort(series.len()));
    }
    if eps < T::zero() {
        return Err(ProfileError::NegativeTolerance);
    }
    let diffs: Vec<T> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let d_signs: Vec<i8> = diffs.iter().map(|&d| sign(d, eps)).collect();
    let second: Vec<i8> = diffs.windows(2).map(|w| sign(w[1] - w[0], eps)).collect();

    let any_up = d_signs.iter().any(|&s| s > 0);
    let any_down = d_signs.iter().any(|&s| s < 0);
    let trend = match (any_up, any_down) {
        (true, false) => Trend::MonotoneIncreasing,
        (false, true) => Trend::MonotoneDecreasing,
        (true, true) => Trend::NonMonotone,
        (false, false) => Trend::Constant,
    };

    let lo = series.iter().copied().fold(series[0], |a, b| a.min_of(b));
    let hi = series.iter().copied().fold(series[0], |a, b| a.max_of(b));

    let crossings = mean_crossings(series, eps);
    let gaps: Vec<T> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let two = T::one() + T::one();
    let regular = !gaps.is_empty() && {
        let gmin = gaps.iter().copied().fold(gaps[0], |a, b| a.min_of(b));
        let gmax = gaps.iter().copied().fold(gaps[0], |a, b| a.max_of(b));
        gmin > T::zero() && gmax <= gmin * two
    };
    let cyclic = crossings.len() >= 4 && regular;
    let period = cyclic.then(|| {
        let total = gaps.iter().fold(T::zero(), |a, &g| a + g);
        two * total / T::from_count(gaps.len() as u64)
    });

    Ok(DynamicsProfile {
        trend,
        critical_points: sign_flips(&d_signs, 0),
        bounded_range: (lo, hi),
        inflexions: sign_flips(&second, 1),
        cyclic,
        period,
    })
}
