//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the samplers are generic over: `f32` or `f64`.
///
/// Probabilities handed to the random stream are always converted to `f64`,
/// so `f32` only affects linear algebra precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative tolerance under which negative eigenvalues are clipped to zero.
    const TOL_PSD: f64;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from a count.
    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {
    // 1e-8 is below f32 resolution; use a small multiple of machine epsilon.
    const TOL_PSD: f64 = 1.0e-5;
}

impl Scalar for f64 {
    const TOL_PSD: f64 = 1.0e-8;
}

/// Absolute slack used when checking an upper bound such as `kappa_sq`.
#[inline]
pub(crate) fn bound_slack<T: Scalar>() -> T {
    T::of(T::TOL_PSD.max(1.0e-9))
}
