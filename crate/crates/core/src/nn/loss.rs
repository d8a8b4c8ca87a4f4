use super::{Real, Tensor};
use crate::error::Result;

/// Mean squared error over all elements, with its gradient w.r.t. `pred`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    pred.check_same_shape(target)?;
    let n = pred.len().max(1);
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t).as_f64();
            d * d
        })
        .sum();
    let scale = T::from_f64_lossy(2.0 / n as f64);
    let grad = pred.zip_map(target, |p, t| (p - t) * scale)?;
    Ok((T::from_f64_lossy(sum / n as f64), grad))
}
