use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LocalData;
use crate::nn::{LrPolicy, OptimizerConfig, OptimizerState, ParamSet};
use crate::ring::NodeId;

use super::{CommMeter, ProtocolError};

/// Per-node training schedule. Learning-rate policies are indexed by the
/// 0-based round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub rounds: u32,
    pub head_epochs: u32,
    pub backbone_epochs: u32,
    /// Joint epochs after the two frozen phases; 0 disables them.
    pub full_epochs: u32,
    pub batch_size: usize,
    pub head_lr: LrPolicy,
    pub backbone_lr: LrPolicy,
    /// Rate for whole-model training in the baselines.
    pub model_lr: LrPolicy,
    /// Epochs per round for the baselines.
    pub local_epochs: u32,
    pub fine_tune_epochs: u32,
    pub optimizer: OptimizerConfig,
    /// Start every visit with fresh backbone optimizer state instead of
    /// the state that travelled with the backbone.
    pub reset_backbone_optimizer: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            rounds: 30,
            head_epochs: 2,
            backbone_epochs: 2,
            full_epochs: 2,
            batch_size: 10,
            head_lr: LrPolicy::step_decay(1e-4, 0.5, 10),
            backbone_lr: LrPolicy::step_decay(4e-4, 0.5, 10),
            model_lr: LrPolicy::step_decay(5e-4, 0.5, 10),
            local_epochs: 2,
            fine_tune_epochs: 6,
            optimizer: OptimizerConfig::default(),
            reset_backbone_optimizer: false,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::Schedule(m.into()));
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        for p in [&self.head_lr, &self.backbone_lr, &self.model_lr] {
            p.validate()?;
        }
        self.optimizer.validate()?;
        Ok(())
    }

    pub(crate) fn validate_li(&self) -> Result<(), ProtocolError> {
        self.validate()?;
        if self.backbone_epochs == 0 {
            return Err(ProtocolError::Schedule("backbone_epochs must be at least 1 for ring training".into()));
        }
        Ok(())
    }
}

/// A client: private head, its optimizer state, local data and the
/// generator that orders its batches.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub head: ParamSet,
    pub head_optimizer: OptimizerState,
    pub train: LocalData,
    pub test: LocalData,
    pub(crate) rng: ChaCha8Rng,
}

impl NodeState {
    pub fn new(id: NodeId, head: ParamSet, optimizer: OptimizerConfig, train: LocalData, test: LocalData, batch_seed: u64) -> Self {
        let head_optimizer = OptimizerState::new(optimizer, &head);
        Self { id, head, head_optimizer, train, test, rng: ChaCha8Rng::seed_from_u64(batch_seed) }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// The circulating token.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedBackbone {
    pub params: ParamSet,
    pub optimizer: OptimizerState,
    /// Last round in which the backbone was trained (1-based, 0 before).
    pub round_stamp: u32,
    pub hop_count: u64,
}

impl SharedBackbone {
    pub fn new(params: ParamSet, optimizer: OptimizerConfig) -> Self {
        let optimizer = OptimizerState::new(optimizer, &params);
        Self { params, optimizer, round_stamp: 0, hop_count: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Head,
    Backbone,
    Full,
    /// Whole-model local training in a baseline.
    Local,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Head => "head",
            Phase::Backbone => "backbone",
            Phase::Full => "full",
            Phase::Local => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseStats {
    pub phase: Phase,
    pub epochs: u32,
    /// Mean pre-update batch loss over the phase.
    pub mean_loss: f64,
    pub lr_head: f64,
    pub lr_backbone: f64,
    /// Local test accuracy when the phase ended.
    pub accuracy: f64,
}

/// Snapshot handed to observers at phase boundaries.
#[derive(Debug, Clone, Copy)]
pub struct PhaseEvent<'a> {
    pub round: u32,
    pub node: NodeId,
    pub phase: Phase,
    pub backbone: &'a ParamSet,
    pub head: &'a ParamSet,
}

pub trait VisitObserver {
    fn phase_started(&mut self, _event: PhaseEvent<'_>) {}
    fn phase_finished(&mut self, _event: PhaseEvent<'_>) {}
}

pub struct NoObserver;

impl VisitObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitRecord {
    pub round: u32,
    /// Transfer step within the round.
    pub step: u32,
    pub node: NodeId,
    pub phases: Vec<PhaseStats>,
    pub accuracy: f64,
    /// Cumulative parameters sent once this visit's transfer is done.
    pub parameters_sent: u64,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyRecord {
    pub round: u32,
    pub hop: u32,
    pub partitions: usize,
    pub components: Vec<Vec<NodeId>>,
    pub wrap_points: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientModel {
    pub backbone: ParamSet,
    pub head: ParamSet,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// `[round][client]` local test accuracy after the client's visit;
    /// `None` when the client was not visited that round.
    pub accuracies: Vec<Vec<Option<f64>>>,
    /// Accuracy of each client's final model on its test split.
    pub final_accuracies: Vec<f64>,
    /// The surviving ring backbone (ring strategies only).
    pub backbone: Option<SharedBackbone>,
    pub client_models: Vec<ClientModel>,
    pub meter: CommMeter,
    pub visits: Vec<VisitRecord>,
    pub topology_events: Vec<TopologyRecord>,
    /// Nodes outside every component when the run ended.
    pub unreachable: Vec<NodeId>,
    /// Transfer steps executed over the whole run.
    pub logical_steps: u64,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn mean_final_accuracy(&self) -> f64 {
        self.final_accuracies.iter().sum::<f64>() / self.final_accuracies.len() as f64
    }

    pub fn clients(&self) -> usize {
        self.final_accuracies.len()
    }
}
