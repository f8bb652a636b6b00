//! Parameter updates.
//!
//! Adam with the weight-decay term folded into the raw gradient before
//! the moment estimates (classic L2 coupling, not the decoupled variant).
//! Moment state is keyed by parameter name, so an optimizer survives the
//! model being rebuilt as long as names and shapes are stable.

use std::collections::HashMap;

use ndarray::ArrayD;

use crate::nn::ParamVisit;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: HashMap<String, ArrayD<f64>>,
    v: HashMap<String, ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update over every trainable parameter the model exposes.
    /// Frozen parameters are skipped entirely and accumulate no moments.
    pub fn step<M: ParamVisit + ?Sized>(&mut self, model: &mut M) {
        self.t += 1;
        let (lr, wd, b1, b2, eps) = (self.lr, self.weight_decay, self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let m_map = &mut self.m;
        let v_map = &mut self.v;
        model.visit_params(&mut |p| {
            if !p.trainable {
                return;
            }
            let m = m_map
                .entry(p.name.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            let v = v_map
                .entry(p.name.clone())
                .or_insert_with(|| ArrayD::zeros(p.value.raw_dim()));
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    let g = g + wd * *w;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        });
    }
}
