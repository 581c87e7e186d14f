//! Config-driven experiment harness for ringfl: strict JSON configs,
//! end-to-end runs with CSV/JSON artifacts, per-client delta reports, the
//! optional-step ablation and a pipeline makespan estimator.

pub mod ablation;
pub mod config;
pub mod deltas;
pub mod metrics;
pub mod pipeline;
pub mod runner;
pub mod summary;

use std::path::PathBuf;

use thiserror::Error;

pub use ablation::{run_optional_step_ablation, AblationReport};
pub use config::{parse_config, parse_config_str, DatasetSource, ExperimentConfig, GlobalFlags, ModelConfig, Strategy, OUTPUT_ROOT_ENV};
pub use deltas::{report_client_deltas, ClientDelta, DeltaTable};
pub use metrics::{emit_metrics, format_sig6, read_metrics, records_from_visits, MetricsRecord, METRICS_HEADER};
pub use pipeline::{estimate_pipeline_makespan, simulate_tokens, simulate_tokens_recurrence, PipelineEstimate, PipelineModel};
pub use runner::{prepare, run_experiment, run_in_memory, Experiment, Prepared};
pub use summary::{ClientSummary, GlobalSummary, Summary, TopologySummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] ringfl::data::DataError),
    #[error(transparent)]
    Ring(#[from] ringfl::ring::RingError),
    #[error("strategy {strategy}: {source}")]
    Run { strategy: &'static str, source: ringfl::protocol::ProtocolError },
    #[error(transparent)]
    Protocol(#[from] ringfl::protocol::ProtocolError),
    #[error("global model: {0}")]
    Global(#[from] ringfl::global::GlobalError),
    #[error("{0}")]
    Mismatch(String),
    #[error("no metrics records to write")]
    NoRecords,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
