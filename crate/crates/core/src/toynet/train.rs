//! Plain gradient descent over trainable parameters only.

use serde::Serialize;

use super::gradcheck::Objective;
use super::model::{Batch, ToyModel, ToyProblem};
use super::ToyError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamDelta {
    pub name: String,
    pub trainable: bool,
    /// Any bit of the tensor differs from its starting value.
    pub changed: bool,
    pub max_abs_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub steps: usize,
    pub learning_rate: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss before the first step and after each step (`steps + 1` values).
    pub losses: Vec<f64>,
    pub deltas: Vec<ParamDelta>,
    /// Every frozen parameter is bit-identical to its starting value.
    pub frozen_unchanged: bool,
}

impl FitReport {
    /// Fraction of steps whose loss is strictly below the previous one.
    pub fn decreasing_fraction(&self) -> f64 {
        let steps = self.losses.len().saturating_sub(1);
        if steps == 0 {
            return 0.0;
        }
        let down = self.losses.windows(2).filter(|w| w[1] < w[0]).count();
        down as f64 / steps as f64
    }
}

fn check_loss(loss: f64) -> Result<f64, ToyError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(ToyError::NonFiniteLoss(loss))
    }
}

/// Runs `steps` updates `θ ← θ − lr·∇θ` on trainable parameters.
pub fn fit(obj: &mut impl Objective, steps: usize, lr: f64) -> Result<FitReport, ToyError> {
    if steps == 0 {
        return Err(ToyError::InvalidParam("steps must be at least 1".into()));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(ToyError::InvalidParam(format!("learning rate must be a non-negative number, got {lr}")));
    }
    let before: Vec<(String, bool, Vec<f64>)> = obj
        .params()
        .into_iter()
        .map(|p| (p.name, p.trainable, p.value.data().to_vec()))
        .collect();

    let mut losses = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (loss, grads) = obj.loss_and_grad()?;
        losses.push(check_loss(loss)?);
        for (index, grad) in grads.into_iter().enumerate() {
            let (Some(grad), true) = (grad, before[index].1) else {
                continue;
            };
            for (p, g) in obj.param_mut(index).data_mut().iter_mut().zip(grad.data()) {
                *p -= lr * g;
            }
        }
    }
    losses.push(check_loss(obj.loss()?)?);

    let after = obj.params();
    let deltas: Vec<ParamDelta> = before
        .iter()
        .zip(&after)
        .map(|((name, trainable, old), now)| ParamDelta {
            name: name.clone(),
            trainable: *trainable,
            changed: old.iter().zip(now.value.data()).any(|(a, b)| a.to_bits() != b.to_bits()),
            max_abs_change: old
                .iter()
                .zip(now.value.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        })
        .collect();
    let frozen_unchanged = deltas.iter().all(|d| d.trainable || !d.changed);
    Ok(FitReport {
        steps,
        learning_rate: lr,
        initial_loss: losses[0],
        final_loss: losses[steps],
        losses,
        deltas,
        frozen_unchanged,
    })
}

/// [`fit`] for a toy model on one batch.
pub fn fit_toy(model: &mut ToyModel, batch: &Batch, steps: usize, lr: f64) -> Result<FitReport, ToyError> {
    fit(&mut ToyProblem { model, batch }, steps, lr)
}
