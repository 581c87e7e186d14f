use ringfl::protocol::{CommMeter, RunResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// `summary.json`: everything needed to compare runs without re-reading
/// the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub seed: u64,
    pub clients: Vec<ClientSummary>,
    pub mean_accuracy: f64,
    /// Mean over the clients visited in each round, from round 1.
    pub round_mean_accuracy: Vec<f64>,
    pub comm: CommMeter,
    pub topology: TopologySummary,
    pub logical_steps: u64,
    #[serde(default, skip_serializing_if = "GlobalSummary::is_empty")]
    pub global: GlobalSummary,
    /// Only filled when wall time is recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSummary {
    pub id: usize,
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Hex sha256 over the client's test indices into the source dataset.
    pub test_fingerprint: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    /// Set when any reconfiguration wrapped a loop onto its secondary.
    pub wrapped: bool,
    pub wrap_events: Vec<WrapEvent>,
    pub max_partitions: usize,
    /// Nodes outside every component when the run ended.
    pub unreachable: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrapEvent {
    pub round: u32,
    pub hop: u32,
    pub partitions: usize,
    pub wrap_points: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stacked: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moe: Option<f64>,
}

impl GlobalSummary {
    pub fn is_empty(&self) -> bool {
        self.probe.is_none() && self.stacked.is_none() && self.moe.is_none()
    }
}

pub fn fingerprint(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn topology_summary(result: &RunResult) -> TopologySummary {
    let wrap_events: Vec<WrapEvent> = result
        .topology_events
        .iter()
        .filter(|t| !t.wrap_points.is_empty())
        .map(|t| WrapEvent { round: t.round, hop: t.hop, partitions: t.partitions, wrap_points: t.wrap_points.clone() })
        .collect();
    TopologySummary {
        wrapped: !wrap_events.is_empty(),
        wrap_events,
        max_partitions: result.topology_events.iter().map(|t| t.partitions).max().unwrap_or(1),
        unreachable: result.unreachable.clone(),
    }
}

pub(crate) fn round_means(result: &RunResult) -> Vec<f64> {
    result
        .accuracies
        .iter()
        .map(|row| {
            let seen: Vec<f64> = row.iter().flatten().copied().collect();
            if seen.is_empty() {
                0.0
            } else {
                seen.iter().sum::<f64>() / seen.len() as f64
            }
        })
        .collect()
}
