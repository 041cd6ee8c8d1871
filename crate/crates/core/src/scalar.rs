//! Scalar abstraction shared by the numeric modules.
//!
//! Signal processing, statistics and geometry are written once against
//! [`Real`] and instantiated for `f32` and `f64`. Domain records (gaze and
//! flight samples, AOI configuration) stay in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type usable by every numeric routine in the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + rustfft::FftNum
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts a count or index into `Self`.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
    }
}

/// Unbiased sample variance (n - 1 denominator); `None` when n < 2.
pub fn sample_variance<T: Real>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some(ss / T::from_count(xs.len() - 1))
}

/// Median of a slice (mean of the two central values for even length).
pub fn median<T: Real>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    })
}

/// Median of integer sample intervals, used as the nominal sample period.
pub(crate) fn median_interval_ms(ts: &[u64]) -> u64 {
    if ts.len() < 2 {
        return 0;
    }
    let mut d: Vec<u64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    d.sort_unstable();
    d[d.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        let v: Vec<f64> = (1..=60).rev().map(f64::from).collect();
        assert_eq!(median(&v), Some(30.5));
        assert_eq!(median::<f32>(&[]), None);
    }

    #[test]
    fn variance_small() {
        assert!((sample_variance(&[1.0f64, 2.0, 3.0, 4.0]).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(sample_variance(&[1.0f32]), None);
    }
}
