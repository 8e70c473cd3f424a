//! Adam with bias correction and global gradient-norm clipping.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Adam state for one parameter group. Moments are kept per tensor and the
/// step counter is shared, so one `Adam` instance must always be fed the same
/// parameter list in the same order.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    step: u64,
}

impl<S: Real> Adam<S> {
    pub fn new(shapes: &[Vec<usize>], lr: S) -> Self {
        let zero = |shape: &Vec<usize>| Tensor::zeros(shape);
        Adam {
            lr,
            beta1: S::from_f64_lit(0.9),
            beta2: S::from_f64_lit(0.999),
            eps: S::from_f64_lit(1e-8),
            m: shapes.iter().map(zero).collect(),
            v: shapes.iter().map(zero).collect(),
            step: 0,
        }
    }

    pub fn for_params(params: &[&Tensor<S>], lr: S) -> Self {
        let shapes: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
        Self::new(&shapes, lr)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)` per element.
    pub fn step(&mut self, params: &mut [&mut Tensor<S>], grads: &[&Tensor<S>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "optimizer built for {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = S::from_f64_lit(self.step as f64);
        let bc1 = S::one() - self.beta1.powf(t);
        let bc2 = S::one() - self.beta2.powf(t);
        let one = S::one();
        for i in 0..params.len() {
            if params[i].shape() != grads[i].shape() || params[i].shape() != self.m[i].shape() {
                return Err(Error::shape(format!(
                    "param {} shape {:?} vs grad {:?} vs moment {:?}",
                    i,
                    params[i].shape(),
                    grads[i].shape(),
                    self.m[i].shape()
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = grads[i].data();
            let p = params[i].data_mut();
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (one - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (one - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] = p[k] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// L2 norm over a whole gradient list, treated as one flat vector.
pub fn global_grad_norm<S: Real>(grads: &[&Tensor<S>]) -> S {
    let mut acc = S::zero();
    for g in grads {
        for &x in g.data() {
            acc += x * x;
        }
    }
    acc.sqrt()
}

/// Scales every gradient by `max_norm / norm` when the global norm exceeds
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm<S: Real>(grads: &mut [Tensor<S>], max_norm: S) -> S {
    let refs: Vec<&Tensor<S>> = grads.iter().collect();
    let norm = global_grad_norm(&refs);
    if norm > max_norm && norm > S::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-rolled recurrence for two steps with constant gradient 1.0,
    /// lr = 1e-3, default betas and eps.
    ///
    /// step 1: m=0.1, v=0.001, m_hat=1, v_hat=1, dx = 1e-3/(1+1e-8)
    /// step 2: m=0.19, v=0.001999, m_hat=1, v_hat≈1, dx ≈ 1e-3
    /// total ≈ 1.9999…e-3 below the start.
    #[test]
    fn adam_two_steps_constant_gradient() {
        let mut p = Tensor::vector(vec![0.0f64]);
        let g = Tensor::vector(vec![1.0f64]);
        let mut opt = Adam::for_params(&[&p], 1e-3);
        opt.step(&mut [&mut p], &[&g]).unwrap();
        let after_one = p.data()[0];
        assert!((after_one - (-1e-3 / (1.0 + 1e-8))).abs() < 1e-15);
        opt.step(&mut [&mut p], &[&g]).unwrap();
        // Exact recurrence, independently evaluated:
        let m2: f64 = 0.9 * 0.1 + 0.1; // 0.19
        let v2: f64 = 0.999 * 0.001 + 0.001; // 0.001999
        let m_hat = m2 / (1.0 - 0.9f64.powi(2));
        let v_hat = v2 / (1.0 - 0.999f64.powi(2));
        let expected = after_one - 1e-3 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert!((p.data()[0] + 2e-3).abs() < 1e-6);
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let mut grads = vec![Tensor::vector(vec![3.0f64, 4.0])];
        let norm = clip_global_norm(&mut grads, 10.0);
        assert_eq!(norm, 5.0);
        assert_eq!(grads[0].data(), &[3.0, 4.0]);
        let norm = clip_global_norm(&mut grads, 1.0);
        assert_eq!(norm, 5.0);
        assert!((grads[0].data()[0] - 0.6).abs() < 1e-12);
        assert!((grads[0].data()[1] - 0.8).abs() < 1e-12);
        let refs: Vec<&Tensor<f64>> = grads.iter().collect();
        assert!((global_grad_norm(&refs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_param_count_is_rejected() {
        let mut p = Tensor::vector(vec![0.0f64]);
        let g = Tensor::vector(vec![1.0f64]);
        let mut opt = Adam::for_params(&[&p], 1e-3);
        assert!(opt.step(&mut [&mut p], &[&g, &g]).is_err());
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // min (x - 3)^2; gradient 2(x-3).
        let mut p = Tensor::vector(vec![0.0f64]);
        let mut opt = Adam::for_params(&[&p], 0.1);
        for _ in 0..500 {
            let g = Tensor::vector(vec![2.0 * (p.data()[0] - 3.0)]);
            opt.step(&mut [&mut p], &[&g]).unwrap();
        }
        assert!((p.data()[0] - 3.0).abs() < 0.05, "got {}", p.data()[0]);
    }
}
