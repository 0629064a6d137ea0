//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real scalar type the game and dynamics code is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal representable in scalar type")
    }

    /// Converts a count into the scalar type.
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `p * ln(p / q)` with the convention `0 * ln(0 / q) = 0`.
pub(crate) fn xlogy_ratio<T: Scalar>(p: T, q: T) -> T {
    if p <= T::zero() {
        T::zero()
    } else {
        p * (p / q).ln()
    }
}

/// Kullback-Leibler divergence `KL(p, q)` in nats; infinite if `q` misses mass of `p`.
pub fn kl<T: Scalar>(p: &[T], q: &[T]) -> T {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = T::zero();
    for (&pa, &qa) in p.iter().zip(q) {
        if pa > T::zero() && qa <= T::zero() {
            return T::infinity();
        }
        acc += xlogy_ratio(pa, qa);
    }
    acc
}

pub fn l1_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_of_identical_is_zero() {
        let p = [0.2f64, 0.3, 0.5];
        assert_eq!(kl(&p, &p), 0.0);
    }

    #[test]
    fn kl_zero_times_log_zero() {
        let p = [0.0f64, 1.0];
        let q = [0.5f64, 0.5];
        assert!((kl(&p, &q) - 2f64.ln()).abs() < 1e-15);
        assert!(kl(&q, &p).is_infinite());
    }

    #[test]
    fn literals_in_f32() {
        assert_eq!(<f32 as Scalar>::lit(0.5), 0.5f32);
        assert_eq!(<f32 as Scalar>::count(3), 3.0f32);
    }
}
