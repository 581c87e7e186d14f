use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::LocalData;
use crate::nn::{argmax, forward_features, forward_head, softmax_in_place, softmax_rows, LossOutput, ModelSpec, ParamSet, Tensor};

use super::{accuracy, class_labels, FitConfig, GlobalError, SmallNet};

/// Gate from backbone features to one weight per expert, with a hidden
/// ReLU layer as wide as the larger of the feature width and twice the
/// expert count.
pub fn gating_spec(features: usize, experts: usize) -> Result<ModelSpec, GlobalError> {
    Ok(ModelSpec::mlp(&[features, features.max(2 * experts), experts], 1)?)
}

/// Mixture of the heads' class probabilities, weighted per sample by a
/// softmax gate over the backbone features.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingEnsemble {
    pub spec: ModelSpec,
    pub backbone: ParamSet,
    pub heads: Vec<ParamSet>,
    pub gate: SmallNet,
}

struct Experts {
    features: Tensor,
    /// One `N × K` probability matrix per head.
    probs: Vec<Tensor>,
}

fn experts(spec: &ModelSpec, backbone: &ParamSet, heads: &[ParamSet], x: &Tensor) -> Result<Experts, GlobalError> {
    let features = forward_features(spec, backbone, x)?;
    let probs = heads.iter().map(|h| Ok(softmax_rows(&forward_head(spec, h, &features)?))).collect::<Result<_, GlobalError>>()?;
    Ok(Experts { features, probs })
}

fn mix(weights: &Tensor, probs: &[Tensor]) -> Tensor {
    let (n, k) = (weights.rows(), probs[0].cols());
    let mut out = vec![0.0; n * k];
    for (i, row) in out.chunks_mut(k).enumerate() {
        for (c, p) in probs.iter().enumerate() {
            let w = weights.row(i)[c];
            for (o, q) in row.iter_mut().zip(p.row(i)) {
                *o += w * q;
            }
        }
    }
    Tensor::matrix(n, k, out).expect("mixture shape")
}

impl GatingEnsemble {
    pub fn new(spec: ModelSpec, backbone: ParamSet, heads: Vec<ParamSet>, gate: SmallNet) -> Result<Self, GlobalError> {
        if heads.is_empty() {
            return Err(GlobalError::NoHeads);
        }
        if gate.spec.input_width() != spec.feature_width() || gate.spec.output_width() != heads.len() {
            return Err(GlobalError::Mismatch(format!(
                "gate maps {} → {} but the model has {} features and {} heads",
                gate.spec.input_width(),
                gate.spec.output_width(),
                spec.feature_width(),
                heads.len()
            )));
        }
        for (c, h) in heads.iter().enumerate() {
            h.validate(&spec).map_err(|e| GlobalError::Mismatch(format!("head {c}: {e}")))?;
        }
        Ok(Self { spec, backbone, heads, gate })
    }

    /// `N × C` gate weights; each row is a probability vector.
    pub fn weights(&self, x: &Tensor) -> Result<Tensor, GlobalError> {
        let features = forward_features(&self.spec, &self.backbone, x)?;
        Ok(softmax_rows(&self.gate.forward(&features)?))
    }

    /// `N × K` mixture class probabilities.
    pub fn mixture(&self, x: &Tensor) -> Result<Tensor, GlobalError> {
        let e = experts(&self.spec, &self.backbone, &self.heads, x)?;
        let w = softmax_rows(&self.gate.forward(&e.features)?);
        Ok(mix(&w, &e.probs))
    }

    pub fn accuracy(&self, data: &LocalData) -> Result<f64, GlobalError> {
        let labels = class_labels(data)?;
        Ok(accuracy(&predict_moe(self, &data.inputs)?, labels))
    }
}

/// Negative log of the mixture probability of the true class, and its
/// gradient with respect to the gate logits. `label_probs[c]` is expert
/// `c`'s probability for that class.
///
/// With `p = Σ_c w_c q_c` and responsibilities `r_c = w_c q_c / p`, the
/// gradient for logit `c` is `w_c − r_c`.
pub fn mixture_nll(gate_logits: &[f64], label_probs: &[f64]) -> (f64, Vec<f64>) {
    let mut w = gate_logits.to_vec();
    softmax_in_place(&mut w);
    let joint: Vec<f64> = w.iter().zip(label_probs).map(|(a, q)| a * q).collect();
    let p = joint.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    (-p.ln(), w.iter().zip(&joint).map(|(a, j)| a - j / p).collect())
}

/// Trains only the gate to minimize the cross-entropy of the mixture.
pub fn train_gating(
    spec: &ModelSpec,
    backbone: &ParamSet,
    heads: &[ParamSet],
    pooled: &LocalData,
    cfg: &FitConfig,
    seed: u64,
) -> Result<GatingEnsemble, GlobalError> {
    let labels = class_labels(pooled)?;
    if labels.is_empty() {
        return Err(GlobalError::Empty);
    }
    if heads.is_empty() {
        return Err(GlobalError::NoHeads);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gate = SmallNet::init(gating_spec(spec.feature_width(), heads.len())?, &mut rng);
    // the gate is the only trainable part, so expert outputs are fixed
    let e = experts(spec, backbone, heads, &pooled.inputs)?;
    let c = heads.len();
    gate.fit(&e.features, cfg, &mut rng, |out, rows| {
        let scale = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(rows.len() * c);
        for (b, &i) in rows.iter().enumerate() {
            let q: Vec<f64> = e.probs.iter().map(|p| p.row(i)[labels[i]]).collect();
            let (l, g) = mixture_nll(out.row(b), &q);
            loss += l;
            grad.extend(g.into_iter().map(|v| v * scale));
        }
        Ok(LossOutput { loss: loss * scale, dlogits: Tensor::matrix(rows.len(), c, grad)? })
    })?;
    GatingEnsemble::new(spec.clone(), backbone.clone(), heads.to_vec(), gate)
}

/// Argmax of the mixture probabilities, lowest index on ties.
pub fn predict_moe(ensemble: &GatingEnsemble, x: &Tensor) -> Result<Vec<usize>, GlobalError> {
    let m = ensemble.mixture(x)?;
    Ok((0..m.rows()).map(|i| argmax(m.row(i))).collect())
}
