use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, activation }
    }

    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Layer stack with a backbone/head split.
///
/// Layers `0..split_index` form the backbone, `split_index..` the head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    layers: Vec<LayerSpec>,
    split_index: usize,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>, split_index: usize) -> Result<Self, NnError> {
        if split_index == 0 || split_index >= layers.len() {
            return Err(NnError::InvalidSpec(format!(
                "split index {split_index} must lie in 1..{}",
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(NnError::InvalidSpec(format!("layer {i} has a zero width")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(NnError::InvalidSpec(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(Self { layers, split_index })
    }

    /// Dense ReLU stack over `widths` with an identity output layer.
    ///
    /// `widths = [20, 64, 32, 10]` gives three layers; `split_index = 2`
    /// makes the last layer the head.
    pub fn mlp(widths: &[usize], split_index: usize) -> Result<Self, NnError> {
        if widths.len() < 3 {
            return Err(NnError::InvalidSpec("an MLP with a split needs at least two layers".into()));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { Activation::Relu };
                LayerSpec::dense(w[0], w[1], act)
            })
            .collect();
        Self::new(layers, split_index)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn feature_width(&self) -> usize {
        self.layers[self.split_index - 1].outputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn segment_layers(&self, segment: Segment) -> Range<usize> {
        match segment {
            Segment::Backbone => 0..self.split_index,
            Segment::Head => self.split_index..self.layers.len(),
        }
    }

    pub fn segment_of(&self, layer: usize) -> Segment {
        if layer < self.split_index {
            Segment::Backbone
        } else {
            Segment::Head
        }
    }

    pub fn param_count(&self, segment: Segment) -> usize {
        self.layers[self.segment_layers(segment)].iter().map(LayerSpec::param_count).sum()
    }

    pub fn total_param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Backbone,
    Head,
}

/// Weight (`inputs × outputs`) and bias (`outputs`) of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weight: Tensor::zeros(vec![spec.inputs, spec.outputs]),
            bias: Tensor::zeros(vec![spec.outputs]),
        }
    }
}

/// Parameters of one segment, keyed by global layer index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    segment: Segment,
    entries: BTreeMap<usize, LayerParams>,
}

impl ParamSet {
    /// Fan-in scaled uniform initialization: `sqrt(6/fan_in)` for ReLU
    /// layers, `sqrt(3/fan_in)` for identity layers, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, segment: Segment, rng: &mut R) -> Self {
        let mut entries = BTreeMap::new();
        for idx in spec.segment_layers(segment) {
            let l = &spec.layers()[idx];
            let gain = match l.activation {
                Activation::Relu => 6.0,
                Activation::Identity => 3.0,
            };
            let limit = (gain / l.inputs as f64).sqrt();
            let w = (0..l.inputs * l.outputs).map(|_| rng.random_range(-limit..limit)).collect();
            entries.insert(
                idx,
                LayerParams {
                    weight: Tensor::from_parts(vec![l.inputs, l.outputs], w),
                    bias: Tensor::zeros(vec![l.outputs]),
                },
            );
        }
        Self { segment, entries }
    }

    pub fn zeros(spec: &ModelSpec, segment: Segment) -> Self {
        let entries = spec
            .segment_layers(segment)
            .map(|idx| (idx, LayerParams::zeros(&spec.layers()[idx])))
            .collect();
        Self { segment, entries }
    }

    pub fn from_entries(
        spec: &ModelSpec,
        segment: Segment,
        entries: BTreeMap<usize, LayerParams>,
    ) -> Result<Self, NnError> {
        let set = Self { segment, entries };
        set.validate(spec)?;
        Ok(set)
    }

    pub fn zeros_like(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(&k, p)| {
                (
                    k,
                    LayerParams {
                        weight: Tensor::zeros(p.weight.shape().to_vec()),
                        bias: Tensor::zeros(p.bias.shape().to_vec()),
                    },
                )
            })
            .collect();
        Self { segment: self.segment, entries }
    }

    pub fn segment(&self) -> Segment {
        self.segment
    }

    pub fn layer(&self, idx: usize) -> Option<&LayerParams> {
        self.entries.get(&idx)
    }

    pub fn layer_mut(&mut self, idx: usize) -> Option<&mut LayerParams> {
        self.entries.get_mut(&idx)
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &LayerParams)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    /// All scalars in a fixed order (layer, weight then bias).
    pub fn scalars(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries
            .values()
            .flat_map(|p| p.weight.values().iter().chain(p.bias.values()).copied())
    }

    pub fn scalars_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.entries
            .values_mut()
            .flat_map(|p| p.weight.values_mut().iter_mut().chain(p.bias.values_mut().iter_mut()))
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.segment.hash(&mut h);
        for (k, p) in &self.entries {
            k.hash(&mut h);
            p.weight.hash_bits(&mut h);
            p.bias.hash_bits(&mut h);
        }
        h.finish()
    }

    pub fn bitwise_eq(&self, other: &ParamSet) -> bool {
        self.segment == other.segment
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((ka, a), (kb, b))| {
                ka == kb && a.weight.bitwise_eq(&b.weight) && a.bias.bitwise_eq(&b.bias)
            })
    }

    /// Same layer ids and shapes.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<(), NnError> {
        if self.segment != other.segment || self.entries.len() != other.entries.len() {
            return Err(NnError::Mismatch("parameter sets hold different entries".into()));
        }
        for ((ka, a), (kb, b)) in self.entries.iter().zip(&other.entries) {
            if ka != kb || a.weight.shape() != b.weight.shape() || a.bias.shape() != b.bias.shape() {
                return Err(NnError::Mismatch(format!("entry {ka} differs from entry {kb}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<(), NnError> {
        let expected = spec.segment_layers(self.segment);
        if self.entries.len() != expected.len() || !self.entries.keys().copied().eq(expected) {
            return Err(NnError::Mismatch(format!(
                "{:?} parameter set has layers {:?}",
                self.segment,
                self.entries.keys().collect::<Vec<_>>()
            )));
        }
        for (&idx, p) in &self.entries {
            let l = &spec.layers()[idx];
            if p.weight.shape() != [l.inputs, l.outputs] || p.bias.shape() != [l.outputs] {
                return Err(NnError::Mismatch(format!("layer {idx} parameters have the wrong shape")));
            }
        }
        Ok(())
    }

    /// Sample-weighted average of compatible parameter sets, reduced in
    /// slice order. Weights are normalized by their sum.
    pub fn weighted_average(sets: &[(&ParamSet, f64)]) -> Result<ParamSet, NnError> {
        let (first, _) = sets.first().ok_or_else(|| NnError::Mismatch("nothing to average".into()))?;
        let total: f64 = sets.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(NnError::Mismatch("average weights must sum to a positive value".into()));
        }
        let mut out = (*first).clone();
        let first_share = sets[0].1 / total;
        out.scalars_mut().for_each(|v| *v *= first_share);
        for (set, w) in &sets[1..] {
            out.check_compatible(set)?;
            let share = w / total;
            for (o, v) in out.scalars_mut().zip(set.scalars()) {
                *o += share * v;
            }
        }
        Ok(out)
    }
}
