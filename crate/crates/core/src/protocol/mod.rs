//! Ring training protocol, baselines and communication metering.

mod baselines;
mod li;
mod meter;
mod node;
mod setup;
mod train;

use thiserror::Error;

use crate::data::DataError;
use crate::nn::NnError;
use crate::ring::RingError;

pub use baselines::{run_fedavg, run_isolated, run_per_batch_ring, train_centralized};
pub use li::run_li;
pub use meter::{CommMeter, Message, RoundComm};
pub use node::{
    ClientModel, NoObserver, NodeState, Phase, PhaseEvent, PhaseStats, RunResult, Schedule, SharedBackbone, TopologyRecord,
    VisitObserver, VisitRecord,
};
pub use setup::{build_nodes, init_params, Initialization, NodeTargets};
pub(crate) use train::epoch_batches;
pub use train::{
    evaluate_accuracy, fine_tune_heads, mean_accuracy, train_backbone_step, train_full_step, train_head_step, visit_node,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("no nodes to train")]
    NoNodes,
    #[error("node {0} has no evaluation data")]
    EmptyEvaluation(usize),
    #[error("{0}")]
    Invalid(String),
}
