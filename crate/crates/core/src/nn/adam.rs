//! Bias-corrected Adam.

use super::{Real, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Real> AdamState<T> {
    /// Zeroed moments shaped like `param`, default betas and epsilon.
    pub fn new(param: &Tensor<T>, lr: f64) -> Self {
        Self {
            first_moment: Tensor::zeros(param.shape().to_vec()),
            second_moment: Tensor::zeros(param.shape().to_vec()),
            step_count: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

pub fn adam_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState<T>,
) -> Result<()> {
    param.check_same_shape(grad)?;
    if state.first_moment.shape() != param.shape() || state.second_moment.shape() != param.shape() {
        return Err(Error::shape("adam state does not match parameter shape"));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = T::from_f64_lossy(state.beta1);
    let b2 = T::from_f64_lossy(state.beta2);
    let one = T::one();
    let c1 = T::from_f64_lossy(1.0 - state.beta1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - state.beta2.powi(t));
    let lr = T::from_f64_lossy(state.lr);
    let eps = T::from_f64_lossy(state.epsilon);
    let m = state.first_moment.data_mut();
    let v = state.second_moment.data_mut();
    for (((p, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
