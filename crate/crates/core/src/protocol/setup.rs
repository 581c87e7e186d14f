use crate::data::{Dataset, PartitionPlan};
use crate::nn::{ModelSpec, OptimizerConfig, ParamSet, Segment};
use crate::seed::{derive_seed, rng_for};

use super::{NodeState, ProtocolError};

/// Initial parameters for one experiment, each drawn from its own labelled
/// child seed of `master`.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub backbone: ParamSet,
    /// One personal head per client.
    pub heads: Vec<ParamSet>,
    /// Head used by strategies that share a single head.
    pub shared_head: ParamSet,
}

pub fn init_params(spec: &ModelSpec, clients: usize, master: u64) -> Initialization {
    Initialization {
        backbone: ParamSet::init(spec, Segment::Backbone, &mut rng_for(master, "init/backbone")),
        heads: (0..clients).map(|c| ParamSet::init(spec, Segment::Head, &mut rng_for(master, &format!("init/head/{c}")))).collect(),
        shared_head: ParamSet::init(spec, Segment::Head, &mut rng_for(master, "init/head/shared")),
    }
}

/// How a node's targets are taken from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTargets {
    /// The dataset's class labels.
    Classes,
    /// Node `c` learns attribute column `c`.
    TaskPerNode,
}

/// Nodes for every client of a plan that already carries local splits.
pub fn build_nodes(
    ds: &Dataset,
    plan: &PartitionPlan,
    heads: &[ParamSet],
    optimizer: OptimizerConfig,
    targets: NodeTargets,
    master: u64,
) -> Result<Vec<NodeState>, ProtocolError> {
    let splits = plan.splits.as_ref().ok_or_else(|| ProtocolError::Invalid("partition plan has no local splits".into()))?;
    if heads.len() != splits.len() {
        return Err(ProtocolError::Invalid(format!("{} heads for {} clients", heads.len(), splits.len())));
    }
    splits
        .iter()
        .zip(heads)
        .enumerate()
        .map(|(c, (split, head))| {
            let (train, test) = match targets {
                NodeTargets::Classes => (ds.local(&split.train)?, ds.local(&split.test)?),
                NodeTargets::TaskPerNode => (ds.local_task(&split.train, c)?, ds.local_task(&split.test, c)?),
            };
            Ok(NodeState::new(c, head.clone(), optimizer, train, test, derive_seed(master, &format!("batch/{c}"))))
        })
        .collect()
}
