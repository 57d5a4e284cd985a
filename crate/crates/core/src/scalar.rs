//! Scalar abstractions.
//!
//! The closed-form predictions only need field arithmetic, so they are written
//! against [`Scalar`] and can be evaluated exactly with rationals. Geometry and
//! sampling need transcendental functions and random variates, which is what
//! [`Real`] adds on top.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Ordered field element used by parameter validation and the closed forms.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Display + FromPrimitive {
    /// `false` for NaN and infinities. Exact types are always finite.
    fn is_finite_scalar(&self) -> bool;
}

/// Floating point scalar with the random variates the simulator consumes.
pub trait Real: Scalar + Float + FloatConst + Send + Sync + 'static {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Exponential variate with unit rate.
    fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform variate on `[0, 1)`.
    fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion of an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("count fits the float type")
    }
}

macro_rules! impl_float {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn is_finite_scalar(&self) -> bool {
                self.is_finite()
            }
        }

        impl Real for $t {
            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }

            #[inline]
            fn uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }
        }
    )*};
}

impl_float!(f32, f64);

impl Scalar for Ratio<i64> {
    fn is_finite_scalar(&self) -> bool {
        true
    }
}

impl Scalar for Ratio<i128> {
    fn is_finite_scalar(&self) -> bool {
        true
    }
}

impl Scalar for Ratio<BigInt> {
    fn is_finite_scalar(&self) -> bool {
        true
    }
}
