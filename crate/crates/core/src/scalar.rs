//! Scalar abstraction shared by the estimation math.
//!
//! Geometry, filtering, assignment, clustering and fusion are written against
//! [`Scalar`] so they run on either `f32` or `f64`. The simulation layer fixes
//! `f64` through the aliases at the crate root.

use nalgebra::RealField;
use num_traits::ToPrimitive;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating point type usable by the estimation core: `f32` or `f64`.
pub trait Scalar:
    RealField + Copy + ToPrimitive + Default + Serialize + DeserializeOwned + Send + Sync + 'static
{
    /// Absolute tolerance used for symmetry / PSD checks on covariances.
    fn tolerance() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        nalgebra::convert(v)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    #[inline]
    fn tolerance() -> Self {
        1e-4
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_round_trip() {
        assert_eq!(f64::lit(0.25), 0.25);
        assert_eq!(f32::lit(0.25), 0.25f32);
        assert_eq!(0.5f32.as_f64(), 0.5);
    }
}
