use serde::{Deserialize, Serialize};

use crate::engine::{Gradients, Tensor};
use crate::model::{ModelParams, ParamKind};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive moment estimation with bias correction, one moment pair per
/// parameter tensor. Tensors without a gradient in a step are left alone.
#[derive(Debug, Clone)]
pub struct Adam<T: Real> {
    config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &ModelParams<T>) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect()
        };
        Adam {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &Gradients<T>, lr: f64) {
        self.step += 1;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let eps = T::from_f64(self.config.epsilon);
        let t = self.step as i32;
        let c1 = T::one() - T::from_f64(self.config.beta1.powi(t));
        let c2 = T::one() - T::from_f64(self.config.beta2.powi(t));
        let lr = T::from_f64(lr);
        for kind in ParamKind::ALL {
            let Some(g) = grads.get(kind.id()) else {
                continue;
            };
            let id = kind.id();
            let m = self.first[id].data_mut();
            let v = self.second[id].data_mut();
            let p = params[kind].data_mut();
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
