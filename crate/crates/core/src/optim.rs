//! Adam optimiser over 2D parameter vectors.

use crate::Vec2;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec2>,
    v: Vec<Vec2>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![Vec2::zeros(); n_params],
            v: vec![Vec2::zeros(); n_params],
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// In-place bias-corrected update of `params` along `grads`.
    pub fn step(&mut self, params: &mut [Vec2], grads: &[Vec2]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.m[i] * self.beta1 + g * (1.0 - self.beta1);
            self.v[i] = self.v[i] * self.beta2 + g.component_mul(&g) * (1.0 - self.beta2);
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            for k in 0..2 {
                params[i][k] -= self.lr * m_hat[k] / (v_hat[k].sqrt() + self.eps);
            }
        }
    }
}
