//! Adam with bias correction, applied in place to a [`Network`].

use super::{Layers, Network};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl<T: Scalar> Network<T> {
    pub fn adam_step(&mut self, grads: &Layers<T>, lr: f64) {
        self.step_count += 1;
        let b1 = T::lit(ADAM_BETA1);
        let b2 = T::lit(ADAM_BETA2);
        let eps = T::lit(ADAM_EPS);
        let lr = T::lit(lr);
        let t = self.step_count as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let params = self.params.tensors_mut();
        let ms = self.adam_m.tensors_mut();
        let vs = self.adam_v.tensors_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (T::one() - b1) * gi;
                v.data[i] = b2 * v.data[i] + (T::one() - b2) * gi * gi;
                let m_hat = m.data[i] / c1;
                let v_hat = v.data[i] / c2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
