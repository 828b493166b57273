use std::iter::Sum;
use std::ops::Add;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::sight;
use super::{observe, Action, AgentPose, Heading, ObservationBundle, Pitch, RoomLayout, SimConfig, SimError};

/// Reward in hundredths, so per-episode accounting is exact integer arithmetic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reward(pub i32);

impl Reward {
    /// Charged for every action, Done included.
    pub const STEP: Reward = Reward(-1);
    pub const SUCCESS: Reward = Reward(500);

    pub fn value(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl Add for Reward {
    type Output = Reward;
    fn add(self, rhs: Reward) -> Reward {
        Reward(self.0 + rhs.0)
    }
}

impl Sum for Reward {
    fn sum<I: Iterator<Item = Reward>>(iter: I) -> Reward {
        iter.fold(Reward(0), Add::add)
    }
}

/// Whether the nearest instance of `target` is visible and strictly closer than
/// the success distance. Ties for nearest count as visible if any tied
/// instance is.
pub fn success_predicate(layout: &RoomLayout, cfg: &SimConfig, pose: &AgentPose, target: usize) -> bool {
    let mut best: Option<(i32, bool)> = None;
    for (i, o) in layout.objects().iter().enumerate() {
        if o.category != target {
            continue;
        }
        let d2 = (o.x - pose.x).pow(2) + (o.y - pose.y).pow(2);
        let nearest = match best {
            Some((b, _)) => d2 <= b,
            None => true,
        };
        if !nearest {
            continue;
        }
        let visible = sight(layout, cfg, pose, i).visible;
        best = match best {
            Some((b, v)) if b == d2 => Some((b, v || visible)),
            _ => Some((d2, visible)),
        };
    }
    match best {
        // compare squared metres so the boundary case is exact
        Some((d2, visible)) => visible && (d2 as f64) * cfg.cell_size * cfg.cell_size < cfg.success_distance.powi(2),
        None => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub layout_id: u32,
    pub target: usize,
    pub start: AgentPose,
    pub actions: Vec<Action>,
    pub rewards: Vec<Reward>,
    pub success: bool,
    /// Number of actions taken.
    pub length: usize,
    /// Shortest successful action count from `start`; `None` when unknown or unreachable.
    pub l_opt: Option<usize>,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> Reward {
        self.rewards.iter().copied().sum()
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: ObservationBundle,
    pub reward: Reward,
    pub terminated: bool,
    pub success: bool,
}

/// One navigation episode on a shared, immutable layout.
#[derive(Clone, Debug)]
pub struct Episode<'a> {
    layout: &'a RoomLayout,
    cfg: &'a SimConfig,
    pose: AgentPose,
    terminated: bool,
    trace: EpisodeTrace,
    rng: ChaCha8Rng,
}

impl<'a> Episode<'a> {
    /// Starts an episode at a pose drawn uniformly from the valid states that do
    /// not already satisfy the success predicate.
    pub fn reset(
        layout: &'a RoomLayout,
        cfg: &'a SimConfig,
        target: usize,
        seed: u64,
    ) -> Result<(Episode<'a>, ObservationBundle), SimError> {
        if target >= layout.categories() || layout.instances(target).next().is_none() {
            return Err(SimError::MissingTarget(target));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let starts = start_states(layout, cfg, target);
        if starts.is_empty() {
            return Err(SimError::NoStartState(target));
        }
        let pose = starts[rng.gen_range(0..starts.len())];
        Ok(Self::start_at(layout, cfg, target, pose, rng))
    }

    /// Starts at a caller-chosen pose. The pose must be valid; it may already
    /// satisfy the success predicate.
    pub fn reset_at(
        layout: &'a RoomLayout,
        cfg: &'a SimConfig,
        target: usize,
        pose: AgentPose,
        seed: u64,
    ) -> Result<(Episode<'a>, ObservationBundle), SimError> {
        if target >= layout.categories() || layout.instances(target).next().is_none() {
            return Err(SimError::MissingTarget(target));
        }
        if !layout.is_valid_pose(&pose) {
            return Err(SimError::InvalidLayout(format!("start pose {pose:?} is blocked")));
        }
        Ok(Self::start_at(layout, cfg, target, pose, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn start_at(
        layout: &'a RoomLayout,
        cfg: &'a SimConfig,
        target: usize,
        pose: AgentPose,
        mut rng: ChaCha8Rng,
    ) -> (Episode<'a>, ObservationBundle) {
        let obs = observe(layout, cfg, &pose, &mut rng);
        let trace = EpisodeTrace {
            layout_id: layout.id,
            target,
            start: pose,
            actions: Vec::new(),
            rewards: Vec::new(),
            success: false,
            length: 0,
            l_opt: None,
        };
        (Episode { layout, cfg, pose, terminated: false, trace, rng }, obs)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, SimError> {
        if self.terminated {
            return Err(SimError::Terminated);
        }
        let mut reward = Reward::STEP;
        let mut success = false;
        if action == Action::Done {
            success = success_predicate(self.layout, self.cfg, &self.pose, self.trace.target);
            if success {
                reward = reward + Reward::SUCCESS;
            }
            self.terminated = true;
        } else {
            self.pose = self.layout.apply(self.pose, action);
        }
        self.trace.actions.push(action);
        self.trace.rewards.push(reward);
        self.trace.length += 1;
        if self.trace.length >= self.cfg.max_steps {
            self.terminated = true;
        }
        self.trace.success = success;
        let observation = observe(self.layout, self.cfg, &self.pose, &mut self.rng);
        Ok(StepResult { observation, reward, terminated: self.terminated, success })
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn target(&self) -> usize {
        self.trace.target
    }

    pub fn layout(&self) -> &'a RoomLayout {
        self.layout
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn into_trace(self) -> EpisodeTrace {
        self.trace
    }
}

/// Every valid `(cell, heading, pitch)` state in a fixed enumeration order.
pub fn all_states(layout: &RoomLayout) -> Vec<AgentPose> {
    let mut out = Vec::new();
    for (x, y) in layout.free_cells() {
        for h in 0..Heading::COUNT as u8 {
            for p in Pitch::ALL {
                out.push(AgentPose::new(x, y, h, p));
            }
        }
    }
    out
}

pub fn start_states(layout: &RoomLayout, cfg: &SimConfig, target: usize) -> Vec<AgentPose> {
    all_states(layout).into_iter().filter(|p| !success_predicate(layout, cfg, p, target)).collect()
}
