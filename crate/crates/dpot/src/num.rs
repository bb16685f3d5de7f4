//! Scalar abstraction shared by every module.

use nalgebra as na;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalar the numerical core is generic over.
pub trait Real:
    na::RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Relative residual target for iterative linear solves.
    const SOLVE_TOL: f64;
    /// Convergence target for Krylov matrix functions.
    const KRYLOV_TOL: f64;

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {
    const SOLVE_TOL: f64 = 1e-6;
    const KRYLOV_TOL: f64 = 1e-6;
}

impl Real for f64 {
    const SOLVE_TOL: f64 = 1e-13;
    const KRYLOV_TOL: f64 = 1e-12;
}

/// Max-norm of a slice.
pub fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
