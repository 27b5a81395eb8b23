//! Scalar abstractions shared by the numeric modules.
//!
//! [`Real`] covers the floating-point math (metrics, network training,
//! regression). [`Field`] is the weaker bound used by the profit ledger so
//! that curves can be computed in exact rational arithmetic as well.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; every `Real` can represent an `f64` approximately.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
}

/// Ordered arithmetic without the transcendental functions of [`Float`].
pub trait Field: Num + Clone + PartialOrd + Debug {}

impl<T> Field for T where T: Num + Clone + PartialOrd + Debug {}
