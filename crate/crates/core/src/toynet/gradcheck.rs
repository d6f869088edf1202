//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use super::tensor::Tensor;
use super::ToyError;

/// Smallest denominator used for relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

pub struct ParamView<'a> {
    pub name: String,
    pub value: &'a Tensor,
    pub trainable: bool,
}

impl<'a> ParamView<'a> {
    pub fn new(name: impl Into<String>, value: &'a Tensor, trainable: bool) -> Self {
        Self {
            name: name.into(),
            value,
            trainable,
        }
    }
}

/// A scalar loss over a list of parameter tensors.
pub trait Objective {
    fn params(&self) -> Vec<ParamView<'_>>;
    /// Mutable access to the parameter at `index` in [`Objective::params`].
    fn param_mut(&mut self, index: usize) -> &mut Tensor;
    fn loss(&self) -> Result<f64, ToyError>;
    /// Loss plus one gradient per parameter; `None` for frozen parameters.
    fn loss_and_grad(&self) -> Result<(f64, Vec<Option<Tensor>>), ToyError>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    /// `None` for frozen parameters, which are not checked.
    pub max_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub loss: f64,
    pub max_relative_error: f64,
    pub checked_entries: usize,
    pub params: Vec<ParamCheck>,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn finite_loss(obj: &impl Objective) -> Result<f64, ToyError> {
    let loss = obj.loss()?;
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(ToyError::NonFiniteLoss(loss))
    }
}

/// Compares every trainable gradient entry against
/// `(f(θ + ε) − f(θ − ε)) / 2ε` and returns the worst relative error, with
/// denominator `max(|analytic|, |numeric|, 1e-8)`. Parameters are restored
/// bit-exactly after each probe.
pub fn grad_check(obj: &mut impl Objective, epsilon: f64) -> Result<GradCheckReport, ToyError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(ToyError::InvalidParam(format!("epsilon must be positive, got {epsilon}")));
    }
    let (loss, grads) = obj.loss_and_grad()?;
    if !loss.is_finite() {
        return Err(ToyError::NonFiniteLoss(loss));
    }
    let meta: Vec<(String, bool)> = obj.params().into_iter().map(|p| (p.name, p.trainable)).collect();
    if grads.len() != meta.len() {
        return Err(ToyError::ShapeMismatch(format!(
            "{} gradients for {} parameters",
            grads.len(),
            meta.len()
        )));
    }

    let mut params = Vec::with_capacity(meta.len());
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (index, ((name, trainable), grad)) in meta.into_iter().zip(grads).enumerate() {
        let grad = match (trainable, grad) {
            (true, Some(g)) => g,
            (true, None) => {
                return Err(ToyError::ShapeMismatch(format!("missing gradient for trainable {name}")));
            }
            (false, _) => {
                params.push(ParamCheck {
                    name,
                    max_relative_error: None,
                });
                continue;
            }
        };
        let len = obj.param_mut(index).len();
        if grad.len() != len {
            return Err(ToyError::ShapeMismatch(format!("gradient for {name} has {} entries, expected {len}", grad.len())));
        }
        let mut param_worst = 0.0f64;
        for (j, &analytic) in grad.data().iter().enumerate() {
            let original = obj.param_mut(index).data()[j];
            obj.param_mut(index).data_mut()[j] = original + epsilon;
            let plus = finite_loss(obj);
            obj.param_mut(index).data_mut()[j] = original - epsilon;
            let minus = finite_loss(obj);
            obj.param_mut(index).data_mut()[j] = original;
            let numeric = (plus? - minus?) / (2.0 * epsilon);
            param_worst = param_worst.max(relative_error(analytic, numeric));
            checked += 1;
        }
        worst = worst.max(param_worst);
        params.push(ParamCheck {
            name,
            max_relative_error: Some(param_worst),
        });
    }
    Ok(GradCheckReport {
        epsilon,
        loss,
        max_relative_error: worst,
        checked_entries: checked,
        params,
    })
}
