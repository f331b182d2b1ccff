//! Scalar abstraction the whole library is generic over.
//!
//! Every physical quantity (energies, temperatures, rates, matrix entries)
//! shares one floating point type implementing [`Scalar`]. The crate root
//! exports `f64` aliases for the main types; `f32` compiles and runs but is
//! only good for smoke tests, since the rate quadratures target absolute
//! accuracies near 1e-9.

use std::fmt::{Debug, Display, LowerExp};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Conversion from an `f64` literal; panics only if the target type cannot
    /// represent ordinary literals, which none of the supported types do.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable by scalar type")
    }

    /// Widening (or identity) conversion used for cache keys and reports.
    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Complex number over the crate scalar.
pub type Cplx<T> = Complex<T>;

/// Real scalar lifted to a complex number.
#[inline]
pub fn cre<T: Scalar>(x: T) -> Cplx<T> {
    Complex::new(x, T::zero())
}

/// Purely imaginary complex number.
#[inline]
pub fn cim<T: Scalar>(x: T) -> Cplx<T> {
    Complex::new(T::zero(), x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_roundtrip() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(1.5), 1.5f32);
        assert_eq!(1.25f32.as_f64(), 1.25);
    }
}
