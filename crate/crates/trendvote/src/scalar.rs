//! Scalar abstractions for the numeric kernels.
//!
//! Ratio comparisons and classification metrics only need field arithmetic
//! and ordering, so they accept any [`Scalar`] — including exact rationals,
//! which the test suites use to cross-check the float path. Kernels that
//! need transcendental functions (the t-distribution tail, binomial
//! enumeration) require the tighter [`RealScalar`] bound.

use num_traits::{Float, FromPrimitive, Num};

/// Field arithmetic plus ordering. Satisfied by `f32`/`f64` and by exact
/// rational types such as `num_rational::Ratio<i128>`.
pub trait Scalar: Num + FromPrimitive + PartialOrd + Clone + std::fmt::Debug {
    /// Lossless conversion from a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T: Num + FromPrimitive + PartialOrd + Clone + std::fmt::Debug> Scalar for T {}

/// Floating-point scalar for kernels that need `exp`/`ln`/`sqrt`.
pub trait RealScalar: Scalar + Float {
    fn half() -> Self {
        Self::from_f64(0.5).unwrap()
    }
}

impl<T: Scalar + Float> RealScalar for T {}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn rational_is_scalar() {
        fn ratio_of<F: Scalar>(num: usize, den: usize) -> F {
            F::from_count(num) / F::from_count(den)
        }
        let r: Ratio<i128> = ratio_of(1, 3);
        assert_eq!(r, Ratio::new(1, 3));
        let f: f64 = ratio_of(1, 3);
        assert!((f - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn float_is_real_scalar() {
        fn mid<F: RealScalar>() -> F {
            F::half()
        }
        assert_eq!(mid::<f64>(), 0.5);
        assert_eq!(mid::<f32>(), 0.5);
    }
}
