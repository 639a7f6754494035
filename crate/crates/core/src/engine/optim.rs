//! Adam and plain SGD over named parameter tensors.

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

/// Per-parameter optimizer state. Moment buffers exist only for Adam and are
/// created lazily the first time a parameter is seen.
pub struct OptimizerState<E: Scalar> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    moments: HashMap<String, (Vec<E>, Vec<E>)>,
}

impl<E: Scalar> OptimizerState<E> {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 },
            learning_rate,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerState {
            kind: OptimizerKind::Sgd,
            learning_rate,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    /// Start a new optimizer step (bumps the bias-correction counter).
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Update a single parameter within the current step.
    pub fn update_param(&mut self, name: &str, param: &mut Tensor<E>, grad: &[E]) -> Result<()> {
        if param.numel() != grad.len() {
            return Err(Error::Dimension(format!(
                "gradient for {name} has {} elements, parameter has {}",
                grad.len(),
                param.numel()
            )));
        }
        let t = self.step.max(1);
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.learning_rate;
                for (p, &g) in param.data_mut().iter_mut().zip(grad.iter()) {
                    *p = E::from_f64(p.to_f64() - lr * g.to_f64());
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let entry = self
                    .moments
                    .entry(name.to_string())
                    .or_insert_with(|| (vec![E::zero(); grad.len()], vec![E::zero(); grad.len()]));
                if entry.0.len() != grad.len() {
                    return Err(Error::Dimension(format!(
                        "moment buffers for {name} have {} elements, gradient has {}",
                        entry.0.len(),
                        grad.len()
                    )));
                }
                let bc1 = 1.0 - beta1.powi(t as i32);
                let bc2 = 1.0 - beta2.powi(t as i32);
                let lr = self.learning_rate;
                for ((p, &g), (m, v)) in param
                    .data_mut()
                    .iter_mut()
                    .zip(grad.iter())
                    .zip(entry.0.iter_mut().zip(entry.1.iter_mut()))
                {
                    let gf = g.to_f64();
                    let mf = beta1 * m.to_f64() + (1.0 - beta1) * gf;
                    let vf = beta2 * v.to_f64() + (1.0 - beta2) * gf * gf;
                    *m = E::from_f64(mf);
                    *v = E::from_f64(vf);
                    let mhat = mf / bc1;
                    let vhat = vf / bc2;
                    *p = E::from_f64(p.to_f64() - lr * mhat / (vhat.sqrt() + epsilon));
                }
            }
        }
        Ok(())
    }

    /// Apply one optimizer step over `(name, param, grad)` triples. The step
    /// counter increments once per call.
    pub fn apply_step(&mut self, updates: &mut [(&str, &mut Tensor<E>, &[E])]) -> Result<()> {
        self.step += 1;
        let t = self.step;
        for (name, param, grad) in updates.iter_mut() {
            if param.numel() != grad.len() {
                return Err(Error::Dimension(format!(
                    "gradient for {name} has {} elements, parameter has {}",
                    grad.len(),
                    param.numel()
                )));
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    let lr = self.learning_rate;
                    for (p, &g) in param.data_mut().iter_mut().zip(grad.iter()) {
                        *p = E::from_f64(p.to_f64() - lr * g.to_f64());
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let entry = self
                        .moments
                        .entry(name.to_string())
                        .or_insert_with(|| (vec![E::zero(); grad.len()], vec![E::zero(); grad.len()]));
                    if entry.0.len() != grad.len() {
                        return Err(Error::Dimension(format!(
                            "moment buffers for {name} have {} elements, gradient has {}",
                            entry.0.len(),
                            grad.len()
                        )));
                    }
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    let lr = self.learning_rate;
                    for ((p, &g), (m, v)) in param
                        .data_mut()
                        .iter_mut()
                        .zip(grad.iter())
                        .zip(entry.0.iter_mut().zip(entry.1.iter_mut()))
                    {
                        let gf = g.to_f64();
                        let mf = beta1 * m.to_f64() + (1.0 - beta1) * gf;
                        let vf = beta2 * v.to_f64() + (1.0 - beta2) * gf * gf;
                        *m = E::from_f64(mf);
                        *v = E::from_f64(vf);
                        let mhat = mf / bc1;
                        let vhat = vf / bc2;
                        *p = E::from_f64(p.to_f64() - lr * mhat / (vhat.sqrt() + epsilon));
                    }
                }
            }
        }
        Ok(())
    }

    /// Moment buffers for checkpointing, in sorted name order.
    pub fn export_moments(&self) -> Vec<(String, Vec<E>, Vec<E>)> {
        let mut names: Vec<&String> = self.moments.keys().collect();
        names.sort();
        names
            .into_iter()
            .map(|n| {
                let (m, v) = &self.moments[n];
                (n.clone(), m.clone(), v.clone())
            })
            .collect()
    }

    pub fn import_moments(&mut self, entries: Vec<(String, Vec<E>, Vec<E>)>) {
        self.moments = entries.into_iter().map(|(n, m, v)| (n, (m, v))).collect();
    }

    pub fn has_moments(&self) -> bool {
        !self.moments.is_empty()
    }
}
