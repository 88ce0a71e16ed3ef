//! Adam optimizer over registered parameter tensors.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

struct Slot {
    name: String,
    param: Tensor,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

/// Optimizer state: per-parameter moment buffers plus the shared step count
/// and hyperparameters.
pub struct AdamState {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    slots: Vec<Slot>,
}

impl AdamState {
    pub fn new(params: Vec<(String, Tensor)>, learning_rate: f64) -> Self {
        let slots = params
            .into_iter()
            .map(|(name, param)| {
                let len = param.len();
                Slot {
                    name,
                    param,
                    first_moment: vec![0.0; len],
                    second_moment: vec![0.0; len],
                }
            })
            .collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            slots,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one bias-corrected Adam update to every registered parameter
    /// and clears their gradients. Fails without touching any parameter if a
    /// gradient is missing.
    pub fn step(&mut self) -> Result<()> {
        for slot in &self.slots {
            if slot.param.grad().is_none() {
                return Err(Error::MissingGrad {
                    param: slot.name.clone(),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for slot in &mut self.slots {
            let grad = slot.param.grad().expect("validated above");
            slot.param.update_values(|values| {
                for i in 0..values.len() {
                    let g = grad[i];
                    slot.first_moment[i] = self.beta1 * slot.first_moment[i] + (1.0 - self.beta1) * g;
                    slot.second_moment[i] =
                        self.beta2 * slot.second_moment[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = slot.first_moment[i] / bias1;
                    let v_hat = slot.second_moment[i] / bias2;
                    values[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            });
            slot.param.clear_grad();
        }
        Ok(())
    }
}
