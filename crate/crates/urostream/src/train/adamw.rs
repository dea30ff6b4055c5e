//! AdamW: Adam moments with decoupled weight decay.
//!
//! ```text
//! m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
//! m̂ = m/(1−β1ᵗ)              v̂ = v/(1−β2ᵗ)
//! w ← w − lr·m̂/(√v̂ + ε) − lr·λ·w
//! ```
//!
//! The decay term multiplies the parameter directly instead of being folded
//! into the gradient, so with zero gradient the parameters shrink by exactly
//! `(1 − lr·λ)` per step.

use crate::model::{GradientSet, ModelWeights};

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Hyperparameters used throughout: β1 0.9, β2 0.999, ε 1e-8, λ 0.01.
    pub fn default_params(lr: f64) -> Self {
        Self::new(lr, 0.9, 0.999, 1e-8, 0.01)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update. Gradient tensors must mirror the weight layout.
    pub fn step(&mut self, weights: &mut ModelWeights, grads: &GradientSet) {
        let grad_flat: Vec<&[f64]> = grads.tensors().into_iter().map(|(_, _, d)| d).collect();
        let mut weight_flat = weights.tensors_mut();
        assert_eq!(grad_flat.len(), weight_flat.len(), "weight/grad layout mismatch");

        if self.m.is_empty() {
            self.m = grad_flat.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = grad_flat.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);

        for ((g, (_, w)), (m, v)) in grad_flat
            .iter()
            .zip(weight_flat.iter_mut())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps) + self.lr * self.weight_decay * w[i];
            }
        }
    }
}
