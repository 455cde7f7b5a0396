//! Floating-point scalar abstraction for probability arithmetic.
//!
//! Reuse profiles and hit-rate formulas are generic over [`Real`] so the same
//! code runs in `f32` or `f64`. The pipeline defaults to `f64`; see the
//! aliases at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type for probabilities and rates.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + Sum
    + Default
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an event count, rounding when the mantissa cannot hold it.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).unwrap_or_else(Self::max_value)
    }

    /// Converts an `f64` constant, rounding to the nearest representable value.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + Sum
        + Default
        + Display
        + Debug
        + Send
        + Sync
        + 'static
{
}

/// Lanczos coefficients for g = 7, n = 9.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 8] = [
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Natural logarithm of the gamma function for strictly positive arguments.
///
/// Accurate to roughly 1e-13 relative in `f64`, which keeps binomial terms
/// built on top of it well inside the tolerances used by the cache model.
pub fn ln_gamma<F: Real>(x: F) -> F {
    debug_assert!(x > F::zero(), "ln_gamma domain is x > 0");
    let x = x - F::one();
    #[allow(clippy::excessive_precision)]
    let mut acc = F::from_f64_lossy(0.999_999_999_999_809_93);
    for (i, &c) in LANCZOS.iter().enumerate() {
        acc += F::from_f64_lossy(c) / (x + F::from_count(i as u64 + 1));
    }
    let t = x + F::from_f64_lossy(7.5);
    F::from_f64_lossy(LN_SQRT_2PI) + (x + F::from_f64_lossy(0.5)) * t.ln() - t + acc.ln()
}

/// `ln C(n, k)` via log-gamma, usable far beyond where factorials overflow.
pub fn ln_choose<F: Real>(n: u64, k: u64) -> F {
    debug_assert!(k <= n, "ln_choose requires k <= n");
    ln_gamma::<F>(F::from_count(n + 1))
        - ln_gamma::<F>(F::from_count(k + 1))
        - ln_gamma::<F>(F::from_count(n - k + 1))
}

/// Geometric mean of a non-empty slice of non-negative rates.
///
/// Any zero entry pulls the mean to zero, matching the limit of the formula.
pub fn geometric_mean<F: Real>(values: &[F]) -> F {
    assert!(!values.is_empty(), "geometric mean of an empty slice");
    if values.iter().any(|v| *v <= F::zero()) {
        return F::zero();
    }
    let n = F::from_count(values.len() as u64);
    let sum = values
        .iter()
        .map(|v| v.ln())
        .fold(F::zero(), |a, b| a + b);
    (sum / n).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_known_values() {
        let cases = [
            (1.0, 0.0),
            (2.0, 0.0),
            (5.0, 24.0f64.ln()),
            (0.5, std::f64::consts::PI.sqrt().ln()),
            (11.0, 3_628_800.0f64.ln()),
        ];
        for (x, want) in cases {
            let got = ln_gamma::<f64>(x);
            assert!((got - want).abs() < 1e-12, "ln_gamma({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn ln_gamma_works_in_f32() {
        let got = ln_gamma::<f32>(5.0);
        assert!((got - 24.0f32.ln()).abs() < 1e-4);
    }

    #[test]
    fn ln_choose_matches_small_binomials() {
        assert!((ln_choose::<f64>(8, 1).exp() - 8.0).abs() < 1e-10);
        assert!((ln_choose::<f64>(10, 5).exp() - 252.0).abs() < 1e-9);
        assert!((ln_choose::<f64>(4, 0).exp() - 1.0).abs() < 1e-12);
        assert!((ln_choose::<f64>(4, 4).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_basics() {
        assert!((geometric_mean::<f64>(&[2.0, 8.0]) - 4.0).abs() < 1e-12);
        assert_eq!(geometric_mean::<f64>(&[0.5, 0.0]), 0.0);
        assert!((geometric_mean::<f64>(&[0.7]) - 0.7).abs() < 1e-12);
    }
}
