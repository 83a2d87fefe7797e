//! Floating-point abstraction. The numerics are generic over f32 and f64:
//! training and checkpoints run in f32, while gradient verification against
//! finite differences runs the identical code in f64.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, NumAssign};

pub trait Scalar:
    Float + NumAssign + ScalarOperand + Debug + Display + Sum + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite f64 converts")
    }

    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
