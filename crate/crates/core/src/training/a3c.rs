//! One actor-critic worker: n-step rollouts, the loss, and local gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::returns::compute_returns;
use super::TrainError;
use crate::autodiff::{softmax_rows, ParamSet, Tape, Tensor, Var};
use crate::policy::{select_action, AgentModel, LstmState, SelectMode, ACTIONS};
use crate::sim::{Action, Episode, EpisodeTrace, ObservationBundle, RoomLayout, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct A3cConfig {
    pub workers: usize,
    /// Total training episodes across all workers.
    pub episodes: u64,
    pub n_step: usize,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub lr: f64,
    /// Workers take turns in one thread instead of running concurrently.
    pub sync: bool,
}

impl Default for A3cConfig {
    fn default() -> Self {
        A3cConfig {
            workers: 4,
            episodes: 20_000,
            n_step: 5,
            gamma: 0.99,
            entropy_coef: 0.01,
            value_coef: 0.5,
            clip_norm: 40.0,
            lr: 1e-4,
            sync: false,
        }
    }
}

impl A3cConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.workers == 0 || self.n_step == 0 {
            return Err("a3c needs at least one worker and n_step > 0".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) || self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err("a3c needs lr > 0, clip_norm > 0 and nonnegative loss weights".into());
        }
        Ok(())
    }
}

/// Loss terms of one segment, summed over its steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentLoss {
    pub policy: f64,
    pub value: f64,
    /// Summed policy entropy (the loss subtracts `entropy_coef` times this).
    pub entropy: f64,
    pub total: f64,
    pub steps: usize,
}

/// Result of one rollout: clipped gradients plus whatever episodes ended in it.
#[derive(Clone, Debug)]
pub struct Segment {
    pub grads: Vec<Tensor>,
    pub loss: SegmentLoss,
    pub finished: Vec<EpisodeTrace>,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Records the actor-critic loss of one segment on `tape`.
///
/// `logits` and `values` are the per-step tape handles, `actions` the sampled
/// indices, `returns` the n-step targets. Advantages enter as constants.
pub fn actor_critic_loss(
    tape: &mut Tape<'_>,
    logits: &[Var],
    values: &[Var],
    actions: &[usize],
    returns: &[f64],
    cfg: &A3cConfig,
) -> Result<(Var, SegmentLoss), TrainError> {
    let mut terms = SegmentLoss { steps: logits.len(), ..SegmentLoss::default() };
    let mut total: Option<Var> = None;
    for i in 0..logits.len() {
        let v = tape.value(values[i]).item();
        let advantage = returns[i] - v;
        let logp = tape.log_softmax_rows(logits[i]);
        let p = tape.softmax_rows(logits[i]);
        // −log π(a)·A with A held constant
        let pick = tape.constant(Tensor::one_hot(ACTIONS, actions[i]).map(|x| -x * advantage));
        let pg = tape.mul(logp, pick)?;
        let pg = tape.sum(pg);
        // entropy −Σ p log p, subtracted with its weight
        let plogp = tape.mul(p, logp)?;
        let neg_entropy = tape.sum(plogp);
        // value_coef · (R − V)²
        let target = tape.constant(Tensor::scalar(returns[i]));
        let err = tape.sub(values[i], target)?;
        let sq = tape.mul(err, err)?;
        let value_term = tape.scale(sq, cfg.value_coef);
        let ent_term = tape.scale(neg_entropy, cfg.entropy_coef);
        let step = tape.add(pg, value_term)?;
        let step = tape.add(step, ent_term)?;
        terms.policy += tape.value(pg).item();
        terms.value += tape.value(sq).item();
        terms.entropy -= tape.value(neg_entropy).item();
        total = Some(match total {
            None => step,
            Some(t) => tape.add(t, step)?,
        });
    }
    let total = total.ok_or(TrainError::EmptyDataset)?;
    terms.total = tape.value(total).item();
    Ok((total, terms))
}

/// Scales `grads` so their global L2 norm is at most `max_norm`; returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale_in_place(s));
    }
    norm
}

struct Live<'a> {
    episode: Episode<'a>,
    obs: ObservationBundle,
    lstm: LstmState,
    prev: Option<Action>,
}

/// A worker with its own environment stream and recurrent state.
pub struct Worker<'a> {
    pub id: usize,
    layouts: &'a [RoomLayout],
    sim: &'a SimConfig,
    cfg: A3cConfig,
    rng: ChaCha8Rng,
    live: Option<Live<'a>>,
    hidden: usize,
}

impl<'a> Worker<'a> {
    pub fn new(
        id: usize,
        layouts: &'a [RoomLayout],
        sim: &'a SimConfig,
        cfg: &A3cConfig,
        hidden: usize,
        seed: u64,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(id as u64));
        Worker { id, layouts, sim, cfg: cfg.clone(), rng, live: None, hidden }
    }

    fn start_episode(&mut self) -> Result<Live<'a>, TrainError> {
        let layout = self.layouts.choose(&mut self.rng).ok_or(TrainError::EmptyDataset)?;
        let target = *layout.targets().choose(&mut self.rng).ok_or(TrainError::EmptyDataset)?;
        let (episode, obs) = Episode::reset(layout, self.sim, target, self.rng.gen())?;
        Ok(Live { episode, obs, lstm: LstmState::zeros(self.hidden), prev: None })
    }

    /// Drops the current episode so the next segment starts a fresh one.
    pub fn abandon_episode(&mut self) {
        self.live = None;
    }

    /// Rolls out up to `n_step` transitions against `params` and returns the
    /// clipped gradient of the segment loss. Segments never cross episode ends.
    pub fn run_segment(&mut self, model: &AgentModel, params: &ParamSet) -> Result<Segment, TrainError> {
        let mut live = match self.live.take() {
            Some(l) => l,
            None => self.start_episode()?,
        };
        let mut tape = Tape::with_params(params);
        let mut h = tape.constant(live.lstm.h.clone());
        let mut c = tape.constant(live.lstm.c.clone());
        let (mut logits, mut values, mut actions, mut rewards) = (vec![], vec![], vec![], vec![]);
        let mut finished = Vec::new();
        let mut terminal = false;
        for _ in 0..self.cfg.n_step {
            let target = live.episode.target();
            let inputs = model.repr.inputs(&live.obs, target);
            let vars = model.forward(&mut tape, &inputs, live.prev, h, c)?;
            let probs = softmax_rows(tape.value(vars.policy.logits));
            if !probs.is_finite() {
                return Err(TrainError::Diverged(format!("worker {}: non-finite policy", self.id)));
            }
            let a = select_action(tape.value(vars.policy.logits), SelectMode::Stochastic, &mut self.rng);
            let action = Action::from_index(a).expect("policy has one logit per action");
            let step = live.episode.step(action)?;
            logits.push(vars.policy.logits);
            values.push(vars.policy.value);
            actions.push(a);
            rewards.push(step.reward.value());
            h = vars.policy.h;
            c = vars.policy.c;
            live.obs = step.observation;
            live.prev = Some(action);
            if step.terminated {
                terminal = true;
                break;
            }
        }
        let bootstrap = if terminal {
            0.0
        } else {
            // value of the next state under the same snapshot, as a constant
            let inputs = model.repr.inputs(&live.obs, live.episode.target());
            let mut probe = Tape::with_params(params);
            let (hh, cc) = (probe.constant(tape.value(h).clone()), probe.constant(tape.value(c).clone()));
            let v = model.forward(&mut probe, &inputs, live.prev, hh, cc)?;
            probe.value(v.policy.value).item()
        };
        let vals: Vec<f64> = values.iter().map(|&v| tape.value(v).item()).collect();
        let (returns, _) = compute_returns(&rewards, &vals, self.cfg.gamma, bootstrap);
        let (loss, terms) = actor_critic_loss(&mut tape, &logits, &values, &actions, &returns, &self.cfg)?;
        if !terms.total.is_finite() {
            return Err(TrainError::Diverged(format!("worker {}: segment loss {}", self.id, terms.total)));
        }
        let next_lstm = LstmState { h: tape.value(h).clone(), c: tape.value(c).clone() };
        let mut grads = tape.backward(loss)?.into_param_grads(params);
        let grad_norm = clip_global_norm(&mut grads, self.cfg.clip_norm);
        if terminal {
            finished.push(live.episode.into_trace());
        } else {
            live.lstm = next_lstm;
            self.live = Some(live);
        }
        Ok(Segment { grads, loss: terms, finished, grad_norm })
    }
}
