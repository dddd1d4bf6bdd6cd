//! Numeric abstraction for scores and percentages.
//!
//! Everything that computes a score (step complexity, accuracies, gaps) is
//! generic over [`Scalar`], so the same code runs on `f32`, `f64` and exact
//! rationals such as [`num_rational::Rational64`].

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
    /// The exact value `numerator / denominator`.
    fn ratio(numerator: i64, denominator: i64) -> Self {
        Self::from_i64(numerator).expect("numerator representable")
            / Self::from_i64(denominator).expect("denominator representable")
    }

    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count representable")
    }

    /// `self` raised to a non-negative integer power by repeated multiplication.
    fn powi(self, exponent: usize) -> Self {
        (0..exponent).fold(Self::one(), |acc, _| acc * self)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static
{
}

/// Arithmetic mean, `None` for an empty input.
pub fn mean<S: Scalar, I: IntoIterator<Item = S>>(values: I) -> Option<S> {
    let (sum, n) = values
        .into_iter()
        .fold((S::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / S::from_count(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;

    #[test]
    fn ratio_is_exact_for_rationals() {
        assert_eq!(Rational64::ratio(3, 2), Rational64::new(3, 2));
        assert_eq!(f64::ratio(1, 2), 0.5);
    }

    #[test]
    fn powi_and_mean() {
        assert_eq!(Rational64::ratio(3, 2).powi(2), Rational64::new(9, 4));
        assert_eq!(1.5f32.powi(0), 1.0);
        assert_eq!(mean([2.0, 4.0]), Some(3.0));
        assert_eq!(mean(Vec::<f64>::new()), None);
        assert_eq!(mean([Rational64::from_integer(1), Rational64::from_integer(2)]), Some(Rational64::new(3, 2)));
    }
}
