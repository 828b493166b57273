//! Supervised pretraining of the representation and the state-skip action head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expert::ExpertSample;
use super::TrainError;
use crate::autodiff::{AdamConfig, AdamState, ParamSet, Tape};
use crate::policy::AgentModel;
use crate::repr::Hooks;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImitationConfig {
    pub enabled: bool,
    /// Expert episodes per training layout.
    pub episodes_per_layout: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Fraction of samples held out for the accuracy check.
    pub holdout: f64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        ImitationConfig { enabled: true, episodes_per_layout: 200, epochs: 10, batch: 32, lr: 1e-3, holdout: 0.1 }
    }
}

impl ImitationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch == 0 || !(self.lr > 0.0) || !(0.0..1.0).contains(&self.holdout) {
            return Err("imitation needs batch > 0, lr > 0 and holdout in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImitationReport {
    /// Mean loss over the training samples before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub holdout_accuracy: Option<f64>,
    pub train_samples: usize,
    pub holdout_samples: usize,
}

/// Seeded split into `(train, holdout)` with `round(holdout · n)` held out.
pub fn split_samples(samples: &[ExpertSample], holdout: f64, seed: u64) -> (Vec<&ExpertSample>, Vec<&ExpertSample>) {
    let mut refs: Vec<&ExpertSample> = samples.iter().collect();
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = (holdout * samples.len() as f64).round() as usize;
    let train = refs.split_off(held);
    (train, refs)
}

/// Mean cross-entropy of the imitation head over `batch`, recorded on `tape`.
fn batch_loss(
    model: &AgentModel,
    tape: &mut Tape<'_>,
    batch: &[&ExpertSample],
) -> Result<crate::autodiff::Var, TrainError> {
    let mut total = None;
    for s in batch {
        let inputs = model.repr.inputs(&s.observation, s.target);
        let r = model.repr.forward(tape, &inputs, &Hooks::default())?;
        let logits = model.policy.imitation_logits(tape, r.state)?;
        let ce = tape.cross_entropy(logits, s.action.index())?;
        total = Some(match total {
            None => ce,
            Some(t) => tape.add(t, ce)?,
        });
    }
    let total = total.ok_or(TrainError::EmptyDataset)?;
    Ok(tape.scale(total, 1.0 / batch.len() as f64))
}

/// Mean imitation loss over `samples` without updating anything.
pub fn imitation_loss(model: &AgentModel, params: &ParamSet, samples: &[&ExpertSample]) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    for chunk in samples.chunks(64) {
        let mut tape = Tape::with_params(params);
        let l = batch_loss(model, &mut tape, chunk)?;
        sum += tape.value(l).item() * chunk.len() as f64;
    }
    Ok(sum / samples.len().max(1) as f64)
}

/// Fraction of samples whose greedy imitation-head action equals the expert's.
pub fn imitation_accuracy(model: &AgentModel, params: &ParamSet, samples: &[&ExpertSample]) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut hits = 0usize;
    for s in samples {
        let mut tape = Tape::with_params(params);
        let inputs = model.repr.inputs(&s.observation, s.target);
        let r = model.repr.forward(&mut tape, &inputs, &Hooks::default())?;
        let logits = model.policy.imitation_logits(&mut tape, r.state)?;
        hits += (tape.value(logits).argmax_row(0) == s.action.index()) as usize;
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Minimizes the imitation cross-entropy with Adam over seeded minibatches.
/// `on_epoch` sees the epoch index and its mean loss.
pub fn pretrain_imitation(
    model: &AgentModel,
    params: &mut ParamSet,
    samples: &[ExpertSample],
    cfg: &ImitationConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<ImitationReport, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    let (train, holdout) = split_samples(samples, cfg.holdout, seed);
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut report = ImitationReport {
        initial_loss: imitation_loss(model, params, &train)?,
        train_samples: train.len(),
        holdout_samples: holdout.len(),
        ..ImitationReport::default()
    };
    let mut adam = AdamState::new(params, AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut order = train.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut n) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch) {
            let grads = {
                let mut tape = Tape::with_params(params);
                let loss = batch_loss(model, &mut tape, batch)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(TrainError::Diverged(format!("imitation loss {value} in epoch {epoch}")));
                }
                sum += value * batch.len() as f64;
                n += batch.len();
                tape.backward(loss)?.into_param_grads(params)
            };
            adam.step(params, &grads)?;
        }
        let mean = sum / n as f64;
        on_epoch(epoch, mean);
        report.epoch_losses.push(mean);
    }
    report.train_accuracy = imitation_accuracy(model, params, &train)?;
    report.holdout_accuracy =
        if holdout.is_empty() { None } else { Some(imitation_accuracy(model, params, &holdout)?) };
    Ok(report)
}
