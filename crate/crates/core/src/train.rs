//! Mini-batch Adam training with early stopping on validation MAE.
//!
//! Any model that can record its raw prediction on a [`Tape`] implements
//! [`TapeModel`]; [`batch_loss`] adds the squared-error and L2 terms and
//! [`fit`] runs the epoch loop, keeping the parameters with the best
//! validation MAE.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamConfig, AdamState, ParamId, ParamSet, Tape, Var};

/// A model trained by squared error on a [`Tape`].
pub trait TapeModel {
    type Input;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn l2_coeff(&self) -> f64;

    /// Records the raw 1×1 prediction for `input`. `bound[i]` is the tape
    /// leaf of parameter `i`. Dropout is active iff `rng` is given.
    fn record(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        input: &Self::Input,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var>;

    fn target(input: &Self::Input) -> f64;

    /// Bias of the final affine map, seeded with the mean training target.
    fn output_bias(&self) -> Option<ParamId> {
        None
    }

    /// Inference prediction clamped into [0, 4].
    fn predict_value(&self, input: &Self::Input) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = bind_all(&mut tape, self.params());
        let out = self.record(&mut tape, &bound, input, None)?;
        Ok(tape.value(out).item().clamp(0.0, 4.0))
    }
}

pub fn bind_all(tape: &mut Tape, params: &ParamSet) -> Vec<Var> {
    params.ids().map(|id| tape.param(params, id)).collect()
}

/// Mean squared error over `batch` plus `l2 · Σ‖W‖²` over weight tensors.
pub fn batch_loss<M: TapeModel>(
    model: &M,
    tape: &mut Tape,
    bound: &[Var],
    batch: &[&M::Input],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Usage("loss over an empty batch".into()));
    }
    let mut total: Option<Var> = None;
    for input in batch {
        let out = model.record(tape, bound, input, rng.as_deref_mut())?;
        let target = tape.constant(crate::numerics::Matrix::scalar(M::target(input)));
        let diff = tape.sub(out, target)?;
        let sq = tape.square(diff);
        total = Some(match total {
            Some(acc) => tape.add(acc, sq)?,
            None => sq,
        });
    }
    let mut loss = tape.scale(total.expect("nonempty batch"), 1.0 / batch.len() as f64);
    let l2 = model.l2_coeff();
    if l2 > 0.0 {
        for (id, var) in model.params().ids().zip(bound) {
            if model.params().get(id).decay {
                let sq = tape.square(*var);
                let s = tape.sum(sq);
                let term = tape.scale(s, l2);
                loss = tape.add(loss, term)?;
            }
        }
    }
    Ok(loss)
}

/// Loss value with dropout off; no gradients touched.
pub fn loss_value<M: TapeModel>(model: &M, batch: &[&M::Input]) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = bind_all(&mut tape, model.params());
    let loss = batch_loss(model, &mut tape, &bound, batch, None)?;
    Ok(tape.value(loss).item())
}

/// Accumulates d(loss)/d(params) into the model's gradients and returns the loss.
pub fn accumulate_gradient<M: TapeModel>(
    model: &mut M,
    batch: &[&M::Input],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = bind_all(&mut tape, model.params());
    let loss = batch_loss(model, &mut tape, &bound, batch, rng)?;
    let value = tape.value(loss).item();
    tape.backward(loss, model.params_mut())?;
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            adam: AdamConfig {
                learning_rate: 5e-3,
                ..AdamConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitOutcome {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_validation_mae: f64,
    pub log: String,
}

pub fn mean_abs_error<M: TapeModel>(model: &M, inputs: &[M::Input]) -> Result<f64> {
    if inputs.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for input in inputs {
        total += (model.predict_value(input)? - M::target(input)).abs();
    }
    Ok(total / inputs.len() as f64)
}

/// Trains `model` in place and leaves it at its best-on-validation state.
/// Without validation data the final epoch is kept.
pub fn fit<M: TapeModel>(
    model: &mut M,
    train: &[M::Input],
    validation: &[M::Input],
    options: &TrainOptions,
    rng: &mut ChaCha8Rng,
) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(Error::Usage("no training instances".into()));
    }
    if let Some(bias) = model.output_bias() {
        let mean = train.iter().map(M::target).sum::<f64>() / train.len() as f64;
        let b = &mut model.params_mut().get_mut(bias).value;
        for v in b.data_mut() {
            *v = mean;
        }
    }
    let mut adam = AdamState::new(model.params(), options.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut outcome = FitOutcome {
        best_validation_mae: f64::INFINITY,
        ..FitOutcome::default()
    };
    let mut best = model.params().clone();
    let mut since_best = 0;

    for epoch in 1..=options.max_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(options.batch_size.max(1)) {
            let batch: Vec<&M::Input> = chunk.iter().map(|&i| &train[i]).collect();
            model.params_mut().zero_grad();
            epoch_loss += accumulate_gradient(model, &batch, Some(rng))?;
            batches += 1;
            adam_step(model.params_mut(), &mut adam);
            if !model.params().all_finite() {
                return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
            }
        }
        outcome.epochs_run = epoch;
        let train_loss = epoch_loss / batches as f64;
        if validation.is_empty() {
            let _ = writeln!(outcome.log, "epoch {epoch} train_loss {train_loss:.6}");
            outcome.best_epoch = epoch;
            continue;
        }
        let val_mae = mean_abs_error(model, validation)?;
        let _ = writeln!(
            outcome.log,
            "epoch {epoch} train_loss {train_loss:.6} val_mae {val_mae:.6}"
        );
        if val_mae < outcome.best_validation_mae {
            outcome.best_validation_mae = val_mae;
            outcome.best_epoch = epoch;
            best = model.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= options.patience {
                break;
            }
        }
    }
    if !validation.is_empty() {
        *model.params_mut() = best;
    }
    model.params_mut().zero_grad();
    Ok(outcome)
}
