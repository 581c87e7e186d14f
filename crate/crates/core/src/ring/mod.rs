//! Dual-loop ring transport: topology state, scripted faults and wrap
//! reconfiguration.

mod script;
mod topology;

use thiserror::Error;

pub use script::{FaultEvent, FaultKind, FaultScript, FaultTarget, LinkRef, LinkSpec, LogicalTime};
pub use topology::{apply_fault_event, detect_partitions, next_hop, reconfigure, NodeId, RingTopology, RouteView};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("node {0} is not part of the ring")]
    UnknownNode(NodeId),
    #[error("{from}-{to} is not a link of the ring")]
    UnknownLink { from: NodeId, to: NodeId },
    #[error("node {0} is down or unreachable")]
    NodeDown(NodeId),
    #[error("fault script line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("a ring needs at least one node")]
    Empty,
}
