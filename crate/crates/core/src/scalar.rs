//! Numeric traits the alignment and pooling code is generic over.

use std::fmt::Debug;

use num_traits::{Float, Num, Signed};

/// Value type usable in the DTW engine.
///
/// Only ring operations, `abs` and a partial order are needed, so exact
/// types such as `num_rational::Ratio<i64>` work alongside `f32`/`f64`.
pub trait Scalar: Num + Signed + PartialOrd + Copy + Debug + Send + Sync + 'static {
    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl<T> Scalar for T where T: Num + Signed + PartialOrd + Copy + Debug + Send + Sync + 'static {}

/// Floating point value type for statistics (means, variances, medians).
pub trait Real: Float + Scalar {}

impl<T> Real for T where T: Float + Scalar {}

pub fn mean<F: Real>(xs: &[F]) -> Option<F> {
    if xs.is_empty() {
        return None;
    }
    let sum = xs.iter().fold(F::zero(), |acc, &x| acc + x);
    Some(sum / F::from(xs.len()).unwrap())
}

/// Sample variance (denominator n - 1); zero for a single value.
pub fn sample_variance<F: Real>(xs: &[F]) -> Option<F> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(F::zero());
    }
    let ss = xs.iter().fold(F::zero(), |acc, &x| acc + (x - m) * (x - m));
    Some(ss / F::from(xs.len() - 1).unwrap())
}

pub fn median<F: Real>(xs: &[F]) -> Option<F> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in median input"));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / F::from(2).unwrap()
    })
}
