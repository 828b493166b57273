//! Imitation pretraining on expert actions followed by asynchronous
//! advantage actor-critic fine-tuning.

mod a3c;
mod expert;
mod imitation;
mod returns;
mod store;

pub use a3c::{actor_critic_loss, clip_global_norm, A3cConfig, Segment, SegmentLoss, Worker};
pub use expert::{generate_expert_dataset, ExpertSample};
pub use imitation::{
    imitation_accuracy, imitation_loss, pretrain_imitation, split_samples, ImitationConfig, ImitationReport,
};
pub use returns::compute_returns;
pub use store::{params_digest, SharedParamStore, UpdateRecord};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(String),
}
