use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::LinalgScalar;
use num_traits::{Float, FloatConst};

/// Floating-point type the network runs in: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float + FloatConst + LinalgScalar + AddAssign + SubAssign + MulAssign + Sum + Debug + Display + Send + Sync + 'static
{
    fn lit(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}
