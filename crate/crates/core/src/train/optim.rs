use alloc::vec;
use alloc::vec::Vec;

use crate::nn::ParamStore;
use crate::real::Real;

/// Adam with decoupled weight decay over the parameters selected by a mask.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    /// Applies one update. `grads[i]` is `None` for parameters without a
    /// gradient this step; masked-out parameters are never written.
    pub fn update<R: Real>(&mut self, store: &mut ParamStore<R>, mask: &[bool], grads: &[Option<Vec<f64>>]) {
        if self.m.is_empty() {
            self.m = store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - num_traits::Float::powi(self.beta1, t);
        let c2 = 1.0 - num_traits::Float::powi(self.beta2, t);
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        for id in ids {
            let i = id.0;
            if !mask[i] {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let value = store.value_mut(id).data_mut();
            for j in 0..value.len() {
                let g = grads[i].as_ref().map_or(0.0, |g| g[j]);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                let p = value[j].as_f64();
                let next = p - self.learning_rate * (mhat / (num_traits::Float::sqrt(vhat) + self.eps) + self.weight_decay * p);
                value[j] = R::of(next);
            }
        }
    }
}
