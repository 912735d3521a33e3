//! Complex arithmetic on the closed upper half-plane.
//!
//! Every Loewner flow map in this crate is built from [`sqrt_h`], the square
//! root whose image is the closed upper half-plane. Points on the real axis
//! are admitted: trace compositions start at `z = 0`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A point of the closed upper half-plane `{z : Im z >= 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HalfPlanePoint(Complex64);

impl HalfPlanePoint {
    pub const ORIGIN: HalfPlanePoint = HalfPlanePoint(Complex64::new(0.0, 0.0));

    /// Validating constructor: rejects non-finite parts and `im < 0`.
    pub fn new(re: f64, im: f64) -> Result<Self> {
        Self::try_from_complex(Complex64::new(re, im))
    }

    pub fn try_from_complex(z: Complex64) -> Result<Self> {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::invalid("z", format!("non-finite point {z}")));
        }
        if z.im < 0.0 {
            return Err(Error::invalid("z", format!("imaginary part {} is negative", z.im)));
        }
        Ok(HalfPlanePoint(z))
    }

    /// `i * y` for `y >= 0`; the usual starting point `εi`.
    pub fn on_imaginary_axis(y: f64) -> Result<Self> {
        Self::new(0.0, y)
    }

    /// Wraps a value already known to lie in the closed upper half-plane,
    /// e.g. the output of [`sqrt_h`].
    pub(crate) fn from_complex_unchecked(z: Complex64) -> Self {
        debug_assert!(z.im >= 0.0 || z.im.is_nan(), "{z} is below the real axis");
        HalfPlanePoint(z)
    }

    #[inline]
    pub fn re(self) -> f64 {
        self.0.re
    }

    #[inline]
    pub fn im(self) -> f64 {
        self.0.im
    }

    #[inline]
    pub fn as_complex(self) -> Complex64 {
        self.0
    }

    /// Translation by a real amount; stays in the half-plane.
    #[inline]
    pub fn shift(self, c: f64) -> Self {
        HalfPlanePoint(Complex64::new(self.0.re + c, self.0.im))
    }

    #[inline]
    pub fn modulus(self) -> f64 {
        modulus(self)
    }
}

impl From<HalfPlanePoint> for Complex64 {
    fn from(p: HalfPlanePoint) -> Self {
        p.0
    }
}

impl TryFrom<Complex64> for HalfPlanePoint {
    type Error = Error;

    fn try_from(z: Complex64) -> Result<Self> {
        Self::try_from_complex(z)
    }
}

impl fmt::Display for HalfPlanePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Square root with nonnegative imaginary part.
///
/// Uses the half-angle form, picking whichever of `sqrt((|w| + x)/2)` or
/// `sqrt((|w| - x)/2)` avoids cancellation, then recovers the other
/// component from `y / (2 * root)`. On the nonnegative real axis the
/// nonnegative real root is returned; on the negative real axis the root is
/// `i * sqrt(-x)`.
#[inline]
pub fn sqrt_h(w: Complex64) -> Complex64 {
    let (x, y) = (w.re, w.im);
    let r = x.hypot(y);
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if x >= 0.0 {
        let t = ((r + x) * 0.5).sqrt();
        let s = y / (2.0 * t);
        if y < 0.0 {
            Complex64::new(-t, -s)
        } else {
            // `+ 0.0` turns a signed zero into +0
            Complex64::new(t, s + 0.0)
        }
    } else {
        let u = ((r - x) * 0.5).sqrt();
        Complex64::new(y / (2.0 * u), u)
    }
}

/// Euclidean modulus `|z|`.
#[inline]
pub fn modulus(z: HalfPlanePoint) -> f64 {
    z.0.re.hypot(z.0.im)
}
