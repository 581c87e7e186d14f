//! Global models built from a trained backbone and the clients' heads:
//! a stacked ensemble with a small integrating network, a gated mixture of
//! the heads, and a pooled-data linear probe of the backbone.
//!
//! Nothing here updates the backbone or the heads; each model keeps its own
//! copies and trains only its new parameters.

mod cache;
mod gating;
mod net;
mod probe;
mod stacked;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LocalData;
use crate::nn::{NnError, OptimizerConfig, Targets};
use crate::protocol::ProtocolError;

pub use cache::{collect_head_outputs, head_logits, FeatureCache};
pub use net::SmallNet;
pub use gating::{gating_spec, mixture_nll, predict_moe, train_gating, GatingEnsemble};
pub use probe::{probe_backbone, ProbeResult};
pub use stacked::{integrator_spec, predict_stacked, train_integrator, StackedEnsemble};

#[derive(Debug, Error)]
pub enum GlobalError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("global models need class labels")]
    NotClassification,
    #[error("no samples")]
    Empty,
    #[error("no heads")]
    NoHeads,
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Training settings for the parameters a global model adds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, lr: 1e-3, optimizer: OptimizerConfig::adamw(0.01) }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), GlobalError> {
        if self.batch_size == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GlobalError::Mismatch(format!("invalid fit settings {self:?}")));
        }
        Ok(self.optimizer.validate()?)
    }
}

pub(crate) fn class_labels(data: &LocalData) -> Result<&[usize], GlobalError> {
    match &data.targets {
        Targets::Classes(l) => Ok(l),
        Targets::Binary(_) => Err(GlobalError::NotClassification),
    }
}

pub(crate) fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    let correct = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    correct as f64 / labels.len() as f64
}
