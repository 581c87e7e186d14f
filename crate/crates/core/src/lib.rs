//! Server-free ring federated learning.
//!
//! A shared backbone circulates around a ring of nodes; each node keeps a
//! private head. At every visit the node first trains its head against the
//! frozen backbone, then trains the backbone through its frozen head, and
//! optionally trains both together before forwarding the backbone.
//!
//! Modules:
//! - [`nn`]: the dense-network engine.
//! - [`data`]: synthetic and IDX datasets, non-IID partitioning, local splits.
//! - [`ring`]: dual-loop ring topology, fault scripts and wrap reconfiguration.
//! - [`protocol`]: the ring training protocol and its FedAvg/isolated baselines.
//! - [`global`]: stacked-head and gating global models, backbone probe.

pub mod data;
pub mod global;
pub mod nn;
pub mod protocol;
pub mod ring;
pub mod seed;
