use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    Adam,
}

/// Optimizer hyperparameters plus moment buffers aligned with the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub method: Method,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::with_method(Method::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::with_method(Method::Adam, learning_rate)
    }

    pub fn with_method(method: Method, learning_rate: f64) -> Self {
        Self {
            method,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// Applies one update using the gradients stored in each parameter's grad slot.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        for (i, p) in params.iter().enumerate() {
            match p.grad() {
                Some(_) => {}
                None => {
                    return Err(Error::InvalidConfig(format!(
                        "parameter {i} has no gradient"
                    )))
                }
            }
        }
        if self.method == Method::Adam {
            self.ensure_buffers(params)?;
        }
        self.step_count += 1;
        let lr = self.learning_rate;
        match self.method {
            Method::Sgd => {
                for p in params.iter_mut() {
                    let g = p.grad().unwrap().to_vec();
                    for (w, gv) in p.data_mut().iter_mut().zip(g) {
                        *w -= lr * gv;
                    }
                }
            }
            Method::Adam => {
                let t = self.step_count as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for ((p, m), v) in params
                    .iter_mut()
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    let g = p.grad().unwrap().to_vec();
                    for (((w, gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g)
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                        *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
        Ok(())
    }

    fn ensure_buffers(&mut self, params: &[Tensor]) -> Result<()> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
            return Ok(());
        }
        if self.first_moment.len() != params.len() {
            return Err(Error::length(
                "optimizer moment buffers",
                self.first_moment.len(),
                params.len(),
            ));
        }
        for (m, p) in self.first_moment.iter().zip(params) {
            if m.len() != p.len() {
                return Err(Error::length("optimizer moment buffer", m.len(), p.len()));
            }
        }
        Ok(())
    }
}
