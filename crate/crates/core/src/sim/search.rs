//! Shortest successful action counts over the full `(cell, heading, pitch)` state graph.

use std::collections::VecDeque;

use super::env::success_predicate;
use super::{Action, AgentPose, Heading, Pitch, RoomLayout, SimConfig, SimError};

/// Order in which the expert breaks ties between equally short continuations.
pub const EXPERT_PREFERENCE: [Action; 6] =
    [Action::Done, Action::RotateLeft, Action::RotateRight, Action::MoveAhead, Action::LookUp, Action::LookDown];

const UNREACHED: u32 = u32::MAX;
const STATES_PER_CELL: usize = Heading::COUNT * Pitch::COUNT;

/// Remaining actions (Done included) to a successful termination, for every state.
///
/// Every action costs one, so the search is a multi-source breadth-first sweep
/// backwards from the success states over the reversed transition graph.
#[derive(Clone, Debug)]
pub struct DistanceField {
    width: usize,
    height: usize,
    target: usize,
    dist: Vec<u32>,
    success: Vec<bool>,
}

impl DistanceField {
    pub fn new(layout: &RoomLayout, cfg: &SimConfig, target: usize) -> Result<Self, SimError> {
        if target >= layout.categories() || layout.instances(target).next().is_none() {
            return Err(SimError::MissingTarget(target));
        }
        let (w, h) = (layout.width(), layout.height());
        let n = w * h * STATES_PER_CELL;
        let mut success = vec![false; n];
        let mut dist = vec![UNREACHED; n];

        // reversed edges in CSR form: preds[offsets[t]..offsets[t+1]] lead into t
        let mut edges: Vec<(u32, u32)> = Vec::new();
        for (x, y) in layout.free_cells() {
            for hd in 0..Heading::COUNT as u8 {
                for p in Pitch::ALL {
                    let pose = AgentPose::new(x, y, hd, p);
                    let s = index(w, &pose);
                    success[s] = success_predicate(layout, cfg, &pose, target);
                    for a in Action::ALL {
                        if a == Action::Done {
                            continue;
                        }
                        let t = index(w, &layout.apply(pose, a));
                        if t != s {
                            edges.push((t as u32, s as u32));
                        }
                    }
                }
            }
        }
        let mut offsets = vec![0u32; n + 1];
        for &(t, _) in &edges {
            offsets[t as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut preds = vec![0u32; edges.len()];
        for &(t, s) in &edges {
            preds[fill[t as usize] as usize] = s;
            fill[t as usize] += 1;
        }

        let mut queue = VecDeque::new();
        for (s, &ok) in success.iter().enumerate() {
            if ok {
                dist[s] = 1;
                queue.push_back(s);
            }
        }
        while let Some(t) = queue.pop_front() {
            let next = dist[t] + 1;
            for &s in &preds[offsets[t] as usize..offsets[t + 1] as usize] {
                if dist[s as usize] == UNREACHED {
                    dist[s as usize] = next;
                    queue.push_back(s as usize);
                }
            }
        }
        Ok(DistanceField { width: w, height: h, target, dist, success })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    fn slot(&self, pose: &AgentPose) -> Option<usize> {
        let inside = pose.x >= 0 && pose.y >= 0 && (pose.x as usize) < self.width && (pose.y as usize) < self.height;
        inside.then(|| index(self.width, pose))
    }

    /// Minimum number of actions from `pose` to a successful Done, or `None` if unreachable.
    pub fn distance(&self, pose: &AgentPose) -> Option<usize> {
        self.slot(pose).and_then(|i| (self.dist[i] != UNREACHED).then_some(self.dist[i] as usize))
    }

    pub fn is_success(&self, pose: &AgentPose) -> bool {
        self.slot(pose).is_some_and(|i| self.success[i])
    }

    /// First action of a minimal plan, tie-broken by [`EXPERT_PREFERENCE`].
    pub fn expert_action(&self, layout: &RoomLayout, pose: &AgentPose) -> Option<Action> {
        let d = self.distance(pose)?;
        if self.is_success(pose) {
            return Some(Action::Done);
        }
        EXPERT_PREFERENCE
            .iter()
            .copied()
            .filter(|&a| a != Action::Done)
            .find(|&a| self.distance(&layout.apply(*pose, a)) == Some(d - 1))
    }

    /// Every action that starts some minimal plan from `pose`.
    pub fn optimal_actions(&self, layout: &RoomLayout, pose: &AgentPose) -> Vec<Action> {
        let Some(d) = self.distance(pose) else { return Vec::new() };
        let mut out = Vec::new();
        if self.is_success(pose) {
            out.push(Action::Done);
        }
        for a in Action::ALL {
            if a != Action::Done && self.distance(&layout.apply(*pose, a)) == Some(d - 1) {
                out.push(a);
            }
        }
        out
    }

    /// Full expert action sequence, ending with Done.
    pub fn plan(&self, layout: &RoomLayout, start: &AgentPose) -> Option<Vec<Action>> {
        let mut pose = *start;
        let mut out = Vec::with_capacity(self.distance(start)?);
        loop {
            let a = self.expert_action(layout, &pose)?;
            out.push(a);
            if a == Action::Done {
                return Some(out);
            }
            pose = layout.apply(pose, a);
        }
    }
}

fn index(width: usize, pose: &AgentPose) -> usize {
    (pose.y as usize * width + pose.x as usize) * STATES_PER_CELL
        + pose.heading.index() * Pitch::COUNT
        + pose.pitch.index()
}

pub fn optimal_action_count(
    layout: &RoomLayout,
    cfg: &SimConfig,
    start: &AgentPose,
    target: usize,
) -> Result<usize, SimError> {
    DistanceField::new(layout, cfg, target)?.distance(start).ok_or(SimError::Unreachable(target))
}
