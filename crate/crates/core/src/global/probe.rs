use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LocalData;
use crate::nn::{backward_head, forward_features, forward_head, ModelSpec, OptimizerState, ParamSet, Segment};
use crate::protocol::{epoch_batches, evaluate_accuracy};

use super::{class_labels, FitConfig, GlobalError};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// Accuracy of the probe head on the pooled test set.
    pub accuracy: f64,
    pub head: ParamSet,
}

/// Trains a fresh head on the frozen backbone's features of the pooled
/// training data and scores it on the pooled test data.
pub fn probe_backbone(
    spec: &ModelSpec,
    backbone: &ParamSet,
    train: &LocalData,
    test: &LocalData,
    cfg: &FitConfig,
    seed: u64,
) -> Result<ProbeResult, GlobalError> {
    cfg.validate()?;
    class_labels(train)?;
    class_labels(test)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = ParamSet::init(spec, Segment::Head, &mut rng);
    let mut opt = OptimizerState::new(cfg.optimizer, &head);
    let features = forward_features(spec, backbone, &train.inputs)?;
    for _ in 0..cfg.epochs {
        for rows in epoch_batches(train.len(), cfg.batch_size, &mut rng) {
            let f = features.select_rows(&rows);
            let out = train.targets.select(&rows).loss(&forward_head(spec, &head, &f)?)?;
            let g = backward_head(spec, &head, &f, &out.dlogits)?;
            opt.apply(&mut head, &g, cfg.lr)?;
        }
    }
    let accuracy = evaluate_accuracy(spec, backbone, &head, test)?;
    Ok(ProbeResult { accuracy, head })
}
