//! Adam optimizer over a flat parameter slice.

use crate::real::{real, Real};

/// Adam with bias correction. One instance owns the moment buffers for one
/// flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    step: u32,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T, beta1: T, beta2: T, len: usize) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon: real(1e-8),
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Computes the update `-lr * m_hat / (sqrt(v_hat) + eps)` for `grads`
    /// and writes it into `update`, advancing the moment buffers.
    pub fn update_into(&mut self, grads: &[T], update: &mut [T]) {
        assert_eq!(grads.len(), self.m.len(), "gradient length mismatch");
        assert_eq!(update.len(), self.m.len(), "update length mismatch");
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let correction1 = T::one() - b1.powi(self.step as i32);
        let correction2 = T::one() - b2.powi(self.step as i32);
        let scale = self.lr * correction2.sqrt() / correction1;
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            update[i] = -scale * self.m[i] / (self.v[i].sqrt() + self.epsilon);
        }
    }

    /// In-place descent step on `params`.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        let mut update = vec![T::zero(); grads.len()];
        self.update_into(grads, &mut update);
        for (p, u) in params.iter_mut().zip(&update) {
            *p = *p + *u;
        }
    }
}
