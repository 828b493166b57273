//! Expert demonstrations from the shortest-path search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim::{Action, AgentPose, DistanceField, Episode, ObservationBundle, RoomLayout, SimConfig};

#[derive(Clone, Debug)]
pub struct ExpertSample {
    pub observation: ObservationBundle,
    pub target: usize,
    pub action: Action,
    pub layout_id: u32,
    pub pose: AgentPose,
}

/// Follows the expert plan from `episodes_per_layout` random starts in every
/// layout, cycling through the layout's targets, and records each
/// `(observation, expert action)` pair including the final Done.
pub fn generate_expert_dataset(
    layouts: &[RoomLayout],
    cfg: &SimConfig,
    episodes_per_layout: usize,
    seed: u64,
) -> Vec<ExpertSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for layout in layouts {
        let fields: Vec<Option<DistanceField>> =
            layout.targets().iter().map(|&t| DistanceField::new(layout, cfg, t).ok()).collect();
        for e in 0..episodes_per_layout {
            let slot = e % layout.targets().len();
            let target = layout.targets()[slot];
            let Some(field) = &fields[slot] else {
                log::warn!("layout {} target {target}: no distance field, skipped", layout.id);
                continue;
            };
            let (mut ep, mut obs) = match Episode::reset(layout, cfg, target, rng.gen()) {
                Ok(v) => v,
                Err(err) => {
                    log::warn!("layout {} target {target}: {err}, skipped", layout.id);
                    continue;
                }
            };
            if field.distance(&ep.pose()).is_none() {
                log::warn!("layout {} target {target}: start {:?} unreachable, skipped", layout.id, ep.pose());
                continue;
            }
            loop {
                let pose = ep.pose();
                let action = field.expert_action(layout, &pose).expect("reachable states keep an expert action");
                out.push(ExpertSample { observation: obs, target, action, layout_id: layout.id, pose });
                let step = ep.step(action).expect("expert episodes end with Done");
                if step.terminated {
                    break;
                }
                obs = step.observation;
            }
        }
    }
    out
}
