//! Scalar abstraction shared by the LP solver and the Q-network.
//!
//! Both are written against [`Scalar`] so they can run in `f32` or `f64`.
//! The rest of the crate (environment, agent, experiments) fixes `f64`
//! through the aliases exported at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// Smallest pivot magnitude accepted by the simplex ratio test.
    const PIVOT_TOL: f64;
    /// Primal feasibility tolerance.
    const FEAS_TOL: f64;
    /// Reduced-cost optimality tolerance.
    const OPT_TOL: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f64 {
    const PIVOT_TOL: f64 = 1e-11;
    const FEAS_TOL: f64 = 1e-9;
    const OPT_TOL: f64 = 1e-9;
}

impl Scalar for f32 {
    const PIVOT_TOL: f64 = 1e-6;
    const FEAS_TOL: f64 = 1e-5;
    const OPT_TOL: f64 = 1e-5;
}
