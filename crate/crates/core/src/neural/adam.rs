use serde::{Deserialize, Serialize};

use super::{cst, Float, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.0007,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place; `t` is the 1-based step.
pub fn adam_step<A: Float>(
    params: &mut [A],
    grads: &[A],
    m: &mut [A],
    v: &mut [A],
    cfg: &AdamConfig,
    t: u64,
) {
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1: A = cst(1.0 - b1.powf(t as f64));
    let c2: A = cst(1.0 - b2.powf(t as f64));
    let (b1, b2, lr, eps): (A, A, A, A) = (cst(b1), cst(b2), cst(cfg.lr), cst(cfg.eps));
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (A::one() - b1) * g;
        v[i] = b2 * v[i] + (A::one() - b2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam state for every learnable tensor of a model, in visit order.
#[derive(Debug, Clone)]
pub struct Adam<A> {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(Vec<A>, Vec<A>)>,
}

impl<A: Float> Adam<A> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients accumulated in `model`.
    pub fn step<M: Parameterized<A> + ?Sized>(&mut self, model: &mut M) {
        self.step += 1;
        let t = self.step;
        let cfg = self.config;
        let moments = &mut self.moments;
        let mut k = 0;
        model.visit("", &mut |_, tensor| {
            let Some(grad) = tensor.grad else { return };
            if moments.len() == k {
                moments.push((vec![A::zero(); grad.len()], vec![A::zero(); grad.len()]));
            }
            let (m, v) = &mut moments[k];
            adam_step(tensor.value, grad, m, v, &cfg, t);
            k += 1;
        });
    }
}
