//! Scalar abstraction for the numeric core.
//!
//! The tensor/tape machinery and the spectrum code are generic over [`Real`]
//! so they can be instantiated at `f32` or `f64`. The training stack itself
//! is pinned to `f64` (see the `Tensor64`/`Tape64` aliases at the crate root)
//! because run-to-run bit reproducibility is part of its contract.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar usable by tensors, the autodiff tape and the FFT.
pub trait Real:
    Float + FromPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless (or best-effort, for `f32`) conversion from `f64` literals.
    fn from_f64_lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal not representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
