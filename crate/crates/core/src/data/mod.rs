//! Datasets and heterogeneous client partitioning.

mod dataset;
pub mod idx;
mod partition;
mod split;
mod synthetic;

use thiserror::Error;

pub use dataset::{Dataset, Labels, LocalData};
pub use idx::{load_idx, load_idx_limited, IdxError};
pub use partition::{
    label_entropy, largest_remainder, mean_label_entropy, partition, partition_dirichlet, partition_iid,
    partition_pathological, Heterogeneity, HeterogeneityConfig, LocalSplit, PartitionPlan,
};
pub use split::{split_local_train_test, test_count};
pub use synthetic::{blob_means, gen_attributes_from_vectors, gen_blobs, gen_multi_attribute, MultiAttributeSpec, SyntheticSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("{requested} classes per client requested but the dataset has {available}")]
    TooManyClasses { requested: usize, available: usize },
    #[error("dirichlet concentration must be positive, got {0}")]
    InvalidBeta(f64),
    #[error("client {client} received no samples")]
    EmptyClient { client: usize },
    #[error("client {client} has {count} samples; at least 2 are needed for a local split")]
    TooFewSamples { client: usize, count: usize },
    #[error("operation needs class labels")]
    NotClassification,
    #[error("empty sample subset")]
    EmptySubset,
    #[error(transparent)]
    Idx(#[from] IdxError),
}
