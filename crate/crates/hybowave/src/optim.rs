//! Adam optimizer over named flat parameter slices.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam state: per-tensor first/second moment buffers keyed by name, plus the
/// shared step counter used for bias correction.
#[derive(Debug)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    slots: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            step: 0,
            slots: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update to every `(name, param, grad)`
    /// triple. Errors on a non-finite gradient, naming the parameter.
    pub fn step<'a, I>(&mut self, tensors: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, &'a mut [f64], &'a [f64])>,
    {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for (name, param, grad) in tensors {
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
            if param.len() != grad.len() {
                return Err(Error::Contract(format!(
                    "gradient of {name} has length {} but the parameter has {}",
                    grad.len(),
                    param.len()
                )));
            }
            let (m, v) = self
                .slots
                .entry(name)
                .or_insert_with(|| (vec![0.0; param.len()], vec![0.0; param.len()]));
            for i in 0..param.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * grad[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
        Ok(())
    }
}
