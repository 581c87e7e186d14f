use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LocalData;
use crate::nn::{argmax, softmax_cross_entropy, ModelSpec, ParamSet, Tensor};

use super::{accuracy, class_labels, head_logits, FeatureCache, FitConfig, GlobalError, SmallNet};

/// One hidden ReLU layer of width `4 · classes` from the stacked logits
/// to the class scores.
pub fn integrator_spec(inputs: usize, classes: usize) -> Result<ModelSpec, GlobalError> {
    Ok(ModelSpec::mlp(&[inputs, 4 * classes, classes], 1)?)
}

/// Frozen backbone and heads followed by an integrating network over the
/// concatenated head logits.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedEnsemble {
    pub spec: ModelSpec,
    pub backbone: ParamSet,
    pub heads: Vec<ParamSet>,
    pub integrator: SmallNet,
}

impl StackedEnsemble {
    pub fn new(spec: ModelSpec, backbone: ParamSet, heads: Vec<ParamSet>, integrator: SmallNet) -> Result<Self, GlobalError> {
        let want = heads.len() * spec.output_width();
        if integrator.spec.input_width() != want {
            return Err(GlobalError::Mismatch(format!(
                "integrator takes {} inputs but the heads emit {want}",
                integrator.spec.input_width()
            )));
        }
        Ok(Self { spec, backbone, heads, integrator })
    }

    /// Integrator outputs for a batch of raw inputs.
    pub fn scores(&self, x: &Tensor) -> Result<Tensor, GlobalError> {
        self.integrator.forward(&head_logits(&self.spec, &self.backbone, &self.heads, x)?)
    }

    pub fn accuracy(&self, data: &LocalData) -> Result<f64, GlobalError> {
        let labels = class_labels(data)?;
        Ok(accuracy(&predict_stacked(self, &data.inputs)?, labels))
    }
}

/// Trains only the integrator, with softmax cross-entropy on shuffled
/// cache rows.
pub fn train_integrator(
    spec: &ModelSpec,
    backbone: &ParamSet,
    heads: &[ParamSet],
    cache: &FeatureCache,
    integrator: ModelSpec,
    cfg: &FitConfig,
    seed: u64,
) -> Result<StackedEnsemble, GlobalError> {
    if cache.is_empty() {
        return Err(GlobalError::Empty);
    }
    if cache.clients() != heads.len() || cache.head_width() != spec.output_width() {
        return Err(GlobalError::Mismatch("cache was built from different heads".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = SmallNet::init(integrator, &mut rng);
    let labels = cache.labels();
    net.fit(cache.rows(), cfg, &mut rng, |out, rows| {
        let y: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
        Ok(softmax_cross_entropy(out, &y)?)
    })?;
    StackedEnsemble::new(spec.clone(), backbone.clone(), heads.to_vec(), net)
}

/// Argmax of the integrator output per row, lowest index on ties.
pub fn predict_stacked(ensemble: &StackedEnsemble, x: &Tensor) -> Result<Vec<usize>, GlobalError> {
    let s = ensemble.scores(x)?;
    Ok((0..s.rows()).map(|i| argmax(s.row(i))).collect())
}
