//! Episode runner, Success / SPL metrics and the baselines.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, ParamSet};
use crate::policy::{select_action, AgentModel, LstmState, SelectMode, ACTIONS};
use crate::sim::{
    Action, AgentPose, DistanceField, Episode, EpisodeTrace, ObservationBundle, RoomLayout, SimConfig, SimError,
    StepRecord,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no traces to aggregate")]
    Empty,
    #[error("successful trace without an optimal length (layout {layout_id}, target {target})")]
    MissingOptimal { layout_id: u32, target: usize },
    #[error("trace refers to unknown layout {0}")]
    UnknownLayout(u32),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Anything that picks actions in an episode.
pub trait Navigator {
    fn name(&self) -> &str;
    /// Called at the start of every episode.
    fn begin(&mut self, layout: &RoomLayout, sim: &SimConfig, target: usize, seed: u64) -> Result<(), EvalError>;
    fn act(&mut self, obs: &ObservationBundle, pose: &AgentPose) -> Result<Action, EvalError>;
}

/// The learned agent, greedy unless told otherwise.
pub struct TrainedNavigator<'a> {
    model: &'a AgentModel,
    params: &'a ParamSet,
    mode: SelectMode,
    target: usize,
    lstm: LstmState,
    prev: Option<Action>,
    rng: ChaCha8Rng,
}

impl<'a> TrainedNavigator<'a> {
    pub fn new(model: &'a AgentModel, params: &'a ParamSet, mode: SelectMode) -> Self {
        TrainedNavigator {
            model,
            params,
            mode,
            target: 0,
            lstm: LstmState::zeros(model.hidden()),
            prev: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Navigator for TrainedNavigator<'_> {
    fn name(&self) -> &str {
        "trained"
    }

    fn begin(&mut self, _: &RoomLayout, _: &SimConfig, target: usize, seed: u64) -> Result<(), EvalError> {
        self.target = target;
        self.lstm = LstmState::zeros(self.model.hidden());
        self.prev = None;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn act(&mut self, obs: &ObservationBundle, _: &AgentPose) -> Result<Action, EvalError> {
        let (out, next) = self.model.act(self.params, obs, self.target, self.prev, &self.lstm)?;
        self.lstm = next;
        let a = Action::from_index(select_action(&out.logits, self.mode, &mut self.rng)).expect("one logit per action");
        self.prev = Some(a);
        Ok(a)
    }
}

/// Uniform choice over the six actions at every step.
pub struct RandomNavigator {
    rng: ChaCha8Rng,
}

impl RandomNavigator {
    pub fn new() -> Self {
        RandomNavigator { rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

impl Default for RandomNavigator {
    fn default() -> Self {
        Self::new()
    }
}

impl Navigator for RandomNavigator {
    fn name(&self) -> &str {
        "random"
    }

    fn begin(&mut self, _: &RoomLayout, _: &SimConfig, _: usize, seed: u64) -> Result<(), EvalError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(())
    }

    fn act(&mut self, _: &ObservationBundle, _: &AgentPose) -> Result<Action, EvalError> {
        Ok(Action::ALL[self.rng.gen_range(0..ACTIONS)])
    }
}

/// Replays shortest plans from the true state.
#[derive(Default)]
pub struct ExpertNavigator {
    fields: HashMap<(u32, usize), DistanceField>,
    current: Option<((u32, usize), RoomLayout)>,
}

impl ExpertNavigator {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Navigator for ExpertNavigator {
    fn name(&self) -> &str {
        "expert"
    }

    fn begin(&mut self, layout: &RoomLayout, sim: &SimConfig, target: usize, _: u64) -> Result<(), EvalError> {
        let key = (layout.id, target);
        if let std::collections::hash_map::Entry::Vacant(e) = self.fields.entry(key) {
            e.insert(DistanceField::new(layout, sim, target)?);
        }
        self.current = Some((key, layout.clone()));
        Ok(())
    }

    fn act(&mut self, _: &ObservationBundle, pose: &AgentPose) -> Result<Action, EvalError> {
        let (key, layout) = self.current.as_ref().expect("begin before act");
        let target = key.1;
        self.fields[key].expert_action(layout, pose).ok_or(EvalError::Sim(SimError::Unreachable(target)))
    }
}

/// Traces of one evaluation plus the episodes left out because the target was unreachable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub traces: Vec<EpisodeTrace>,
    pub excluded_unreachable: usize,
}

/// Per-episode reset seed.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ (episode as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Runs `episodes` episodes cycling through `layouts` and their targets. Every
/// trace carries the optimal action count from its start state.
pub fn run_episodes(
    nav: &mut dyn Navigator,
    layouts: &[RoomLayout],
    sim: &SimConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalRun, EvalError> {
    let mut fields: HashMap<(u32, usize), DistanceField> = HashMap::new();
    let mut run = EvalRun { traces: Vec::with_capacity(episodes), excluded_unreachable: 0 };
    if layouts.is_empty() {
        return Ok(run);
    }
    for e in 0..episodes {
        let layout = &layouts[e % layouts.len()];
        let targets = layout.targets();
        let target = targets[(e / layouts.len()) % targets.len()];
        let s = episode_seed(seed, e);
        let (mut ep, mut obs) = Episode::reset(layout, sim, target, s)?;
        let key = (layout.id, target);
        if let std::collections::hash_map::Entry::Vacant(e) = fields.entry(key) {
            e.insert(DistanceField::new(layout, sim, target)?);
        }
        let Some(l_opt) = fields[&key].distance(&ep.pose()) else {
            run.excluded_unreachable += 1;
            continue;
        };
        nav.begin(layout, sim, target, s)?;
        while !ep.is_terminated() {
            let a = nav.act(&obs, &ep.pose())?;
            obs = ep.step(a)?.observation;
        }
        let mut trace = ep.into_trace();
        trace.l_opt = Some(l_opt);
        run.traces.push(trace);
    }
    Ok(run)
}

/// Replays traces into per-step log records. Episode numbers are trace indices.
pub fn step_records(
    layouts: &[RoomLayout],
    sim: &SimConfig,
    traces: &[EpisodeTrace],
) -> Result<Vec<StepRecord>, EvalError> {
    let mut out = Vec::new();
    for (e, t) in traces.iter().enumerate() {
        let layout = layouts.iter().find(|l| l.id == t.layout_id).ok_or(EvalError::UnknownLayout(t.layout_id))?;
        let (mut ep, _) = Episode::reset_at(layout, sim, t.target, t.start, 0)?;
        for (i, &action) in t.actions.iter().enumerate() {
            let step = ep.step(action)?;
            out.push(StepRecord {
                layout_id: t.layout_id,
                target: t.target,
                episode: e as u64,
                step: i,
                pose: ep.pose(),
                action,
                reward: step.reward,
                terminated: step.terminated,
                success: step.success,
            });
        }
    }
    Ok(out)
}

pub fn success_rate(traces: &[EpisodeTrace]) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(traces.iter().filter(|t| t.success).count() as f64 / traces.len() as f64)
}

/// `S · L_opt / max(L, L_opt)` for one episode.
pub fn spl_term(trace: &EpisodeTrace) -> Result<f64, EvalError> {
    if !trace.success {
        return Ok(0.0);
    }
    match trace.l_opt {
        Some(l_opt) if l_opt >= 1 => Ok(l_opt as f64 / trace.length.max(l_opt) as f64),
        _ => Err(EvalError::MissingOptimal { layout_id: trace.layout_id, target: trace.target }),
    }
}

pub fn spl(traces: &[EpisodeTrace]) -> Result<f64, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for t in traces {
        sum += spl_term(t)?;
    }
    Ok(sum / traces.len() as f64)
}

/// Episodes whose optimal plan needs at least five actions.
pub fn filter_l5(traces: &[EpisodeTrace]) -> Vec<EpisodeTrace> {
    traces.iter().filter(|t| t.l_opt.is_some_and(|l| l >= 5)).cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub success: f64,
    pub spl: f64,
}

impl Metrics {
    pub fn of(traces: &[EpisodeTrace]) -> Result<Metrics, EvalError> {
        Ok(Metrics { episodes: traces.len(), success: success_rate(traces)?, spl: spl(traces)? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub seed: u64,
    pub fingerprint: String,
    pub all: Metrics,
    /// `None` when no episode has `L_opt ≥ 5`.
    pub l5: Option<Metrics>,
    pub excluded_unreachable: usize,
    pub traces: Vec<EpisodeTrace>,
}

impl EvalReport {
    pub fn new(policy: &str, seed: u64, fingerprint: String, run: EvalRun) -> Result<EvalReport, EvalError> {
        let all = Metrics::of(&run.traces)?;
        let subset = filter_l5(&run.traces);
        let l5 = if subset.is_empty() { None } else { Some(Metrics::of(&subset)?) };
        Ok(EvalReport {
            policy: policy.to_string(),
            seed,
            fingerprint,
            all,
            l5,
            excluded_unreachable: run.excluded_unreachable,
            traces: run.traces,
        })
    }

    /// Recomputes the aggregates from the stored traces.
    pub fn recompute(&self) -> Result<(Metrics, Option<Metrics>), EvalError> {
        let subset = filter_l5(&self.traces);
        let l5 = if subset.is_empty() { None } else { Some(Metrics::of(&subset)?) };
        Ok((Metrics::of(&self.traces)?, l5))
    }

    pub fn table(&self) -> String {
        format_table(&[(self.policy.clone(), self.all, self.l5)])
    }
}

/// Fixed-width table with Success and SPL over all episodes and the `L ≥ 5` subset.
pub fn format_table(rows: &[(String, Metrics, Option<Metrics>)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>8} {:>8} {:>10} {:>10} {:>6} {:>6}",
        "policy", "Success", "SPL", "Success≥5", "SPL≥5", "N", "N≥5"
    );
    for (name, all, l5) in rows {
        let (s5, p5, n5) = match l5 {
            Some(m) => (format!("{:.3}", m.success), format!("{:.3}", m.spl), m.episodes),
            None => ("-".into(), "-".into(), 0),
        };
        let _ = writeln!(
            out,
            "{:<14} {:>8.3} {:>8.3} {:>10} {:>10} {:>6} {:>6}",
            name, all.success, all.spl, s5, p5, all.episodes, n5
        );
    }
    out
}
