//! Discrete gridworld with oracle detections, depth and an egocentric semantic grid.
//!
//! Coordinates: cell `(x, y)` spans `[x, x+1] × [y, y+1]`, x to the right, y down
//! the rows. Headings are clockwise from +x in 45° steps; bearings are positive to
//! the agent's right. Metric distances are cell-centre distances times `cell_size`.

mod env;
mod generate;
mod layout;
mod pose;
mod render;
mod search;
mod trajectory;

pub use env::{all_states, start_states, success_predicate, Episode, EpisodeTrace, Reward, StepResult};
pub use generate::{category_level, generate_layout, generate_suite, GeneratorConfig};
pub use layout::{HeightLevel, PlacedObject, RoomLayout, LAYOUT_MAGIC, LAYOUT_VERSION, MIN_GRID};
pub use pose::{Action, AgentPose, Heading, Pitch};
pub use render::{
    line_of_sight, observe, render_depth, render_detections, render_ego_grid, sight, DepthMap, Detection, EgoGrid,
    ObservationBundle, Sighting,
};
pub use search::{optimal_action_count, DistanceField, EXPERT_PREFERENCE};
pub use trajectory::{StepRecord, TrajectoryLog};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("layout parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("target category {0} has no instance in the layout")]
    MissingTarget(usize),
    #[error("no valid start state for target {0}")]
    NoStartState(usize),
    #[error("target {0} cannot be reached from the start pose")]
    Unreachable(usize),
    #[error("episode already terminated")]
    Terminated,
    #[error("io: {0}")]
    Io(String),
}

/// Sensor and episode parameters shared by every layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Metres per cell, which is also the MoveAhead step.
    pub cell_size: f64,
    pub max_range: f64,
    /// Horizontal field of view in degrees.
    pub fov: f64,
    pub depth_res: usize,
    pub ego_k: usize,
    /// Std-dev of Gaussian noise on detection confidence; 0 disables it.
    pub conf_noise: f64,
    pub max_steps: usize,
    pub success_distance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cell_size: 0.25,
            max_range: 5.0,
            fov: 90.0,
            depth_res: 16,
            ego_k: 7,
            conf_noise: 0.0,
            max_steps: 50,
            success_distance: 1.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.cell_size > 0.0 && self.max_range > 0.0) {
            return Err("cell_size and max_range must be positive".into());
        }
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return Err(format!("fov must lie in (0, 180), got {}", self.fov));
        }
        if self.depth_res == 0 {
            return Err("depth_res must be positive".into());
        }
        if self.ego_k == 0 || self.ego_k.is_multiple_of(2) {
            return Err(format!("ego_k must be odd, got {}", self.ego_k));
        }
        if self.conf_noise < 0.0 || !self.conf_noise.is_finite() {
            return Err("conf_noise must be a finite non-negative number".into());
        }
        if self.max_steps == 0 {
            return Err("max_steps must be positive".into());
        }
        if !(self.success_distance > 0.0) {
            return Err("success_distance must be positive".into());
        }
        Ok(())
    }
}
