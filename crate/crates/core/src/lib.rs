//! Training and evaluation stack for action-smoothness regularization in
//! continuous-control RL: a small reverse-mode autodiff core, analytic
//! environments with bounded disturbances, a Gaussian policy with PPO, a
//! family of smoothness regularizers, and spectrum-based smoothness metrics.

pub mod env;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod scalar;
pub mod smoothing;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete aliases for the precision used by the RL stack.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape64 = tape::Tape<f64>;
