//! Finite-difference gradient oracle.
//!
//! Deliberately uses only the forward pass ([`Tape::forward`] after rebinding
//! leaf elements), so it stays independent of the reverse sweep it is used to
//! check.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tape::{Tape, VarId};
use crate::tensor::Tensor;

/// Central-difference gradient of the scalar `root` w.r.t. the leaf `wrt`,
/// with step `h`. Restores the leaf before returning.
pub fn finite_diff_grad<S: Real>(
    tape: &mut Tape<S>,
    root: VarId,
    wrt: VarId,
    h: S,
) -> Result<Tensor<S>> {
    if !tape.value(root).is_scalar() {
        return Err(Error::contract("finite_diff_grad root must be scalar"));
    }
    let base = tape.value(wrt).clone();
    let n = base.numel();
    let two_h = h + h;
    let mut grad = vec![S::zero(); n];
    for k in 0..n {
        let x0 = base.data()[k];
        tape.poke_leaf(wrt, k, x0 + h)?;
        tape.forward()?;
        let plus = tape.value(root).item()?;
        tape.poke_leaf(wrt, k, x0 - h)?;
        tape.forward()?;
        let minus = tape.value(root).item()?;
        tape.poke_leaf(wrt, k, x0)?;
        grad[k] = (plus - minus) / two_h;
    }
    tape.forward()?;
    Tensor::new(base.shape().to_vec(), grad)
}

/// Largest elementwise discrepancy between `analytic` and `numeric`, relative
/// to `max(|analytic|, |numeric|, floor)`.
pub fn max_rel_err<S: Real>(analytic: &Tensor<S>, numeric: &Tensor<S>, floor: S) -> S {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    let mut worst = S::zero();
    for (&a, &b) in analytic.data().iter().zip(numeric.data()) {
        let scale = a.abs().max(b.abs()).max(floor);
        let err = (a - b).abs() / scale;
        if err > worst {
            worst = err;
        }
    }
    worst
}
