use super::model::{Activation, LayerParams, LayerSpec, ModelSpec, ParamSet, Segment};
use super::tensor::{matmul, matmul_a_bt, matmul_at_b};
use super::{NnError, Tensor};

/// Which segments receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    HeadOnly,
    BackboneOnly,
    Both,
}

impl Trainable {
    pub fn includes(self, segment: Segment) -> bool {
        matches!(
            (self, segment),
            (Trainable::Both, _) | (Trainable::HeadOnly, Segment::Head) | (Trainable::BackboneOnly, Segment::Backbone)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// Output of the last backbone layer.
    pub features: Tensor,
    pub logits: Tensor,
}

/// Gradients for the trainable segments only. A frozen segment is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub backbone: Option<ParamSet>,
    pub head: Option<ParamSet>,
}

fn dense_forward(layer: &LayerSpec, params: &LayerParams, x: &Tensor) -> Result<Tensor, NnError> {
    let mut z = matmul(x, &params.weight)?;
    let bias = params.bias.values();
    let relu = layer.activation == Activation::Relu;
    for row in z.values_mut().chunks_mut(layer.outputs) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
            if relu && *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok(z)
}

fn check_batch(spec: &ModelSpec, width: usize, batch: &Tensor) -> Result<(), NnError> {
    if batch.shape().len() != 2 || batch.cols() != width {
        return Err(NnError::Shape(format!(
            "batch shape {:?} does not match input width {width}",
            batch.shape()
        )));
    }
    let _ = spec;
    Ok(())
}

fn check_segment(spec: &ModelSpec, params: &ParamSet, segment: Segment) -> Result<(), NnError> {
    if params.segment() != segment {
        return Err(NnError::Mismatch(format!(
            "expected {segment:?} parameters, got {:?}",
            params.segment()
        )));
    }
    params.validate(spec)
}

fn params_for<'a>(spec: &ModelSpec, backbone: Option<&'a ParamSet>, head: &'a ParamSet, idx: usize) -> &'a LayerParams {
    let set = match spec.segment_of(idx) {
        Segment::Backbone => backbone.expect("backbone layer requested without backbone parameters"),
        Segment::Head => head,
    };
    set.layer(idx).expect("validated parameter set")
}

/// Activations of layers `from..` given the input to layer `from`;
/// element 0 is that input, element `i + 1` is the output of layer `from + i`.
fn trace(
    spec: &ModelSpec,
    backbone: Option<&ParamSet>,
    head: &ParamSet,
    input: &Tensor,
    from: usize,
) -> Result<Vec<Tensor>, NnError> {
    let mut acts = Vec::with_capacity(spec.layers().len() - from + 1);
    acts.push(input.clone());
    for idx in from..spec.layers().len() {
        let next = dense_forward(&spec.layers()[idx], params_for(spec, backbone, head, idx), acts.last().unwrap())?;
        acts.push(next);
    }
    Ok(acts)
}

/// `g(f(x; backbone); head)`, returning both the backbone features and the logits.
pub fn forward_split(
    spec: &ModelSpec,
    backbone: &ParamSet,
    head: &ParamSet,
    batch: &Tensor,
) -> Result<ForwardPass, NnError> {
    let features = forward_features(spec, backbone, batch)?;
    let logits = forward_head(spec, head, &features)?;
    Ok(ForwardPass { features, logits })
}

pub fn forward_features(spec: &ModelSpec, backbone: &ParamSet, batch: &Tensor) -> Result<Tensor, NnError> {
    check_segment(spec, backbone, Segment::Backbone)?;
    check_batch(spec, spec.input_width(), batch)?;
    let mut x = batch.clone();
    for idx in spec.segment_layers(Segment::Backbone) {
        x = dense_forward(&spec.layers()[idx], backbone.layer(idx).unwrap(), &x)?;
    }
    Ok(x)
}

pub fn forward_head(spec: &ModelSpec, head: &ParamSet, features: &Tensor) -> Result<Tensor, NnError> {
    check_segment(spec, head, Segment::Head)?;
    check_batch(spec, spec.feature_width(), features)?;
    let mut x = features.clone();
    for idx in spec.segment_layers(Segment::Head) {
        x = dense_forward(&spec.layers()[idx], head.layer(idx).unwrap(), &x)?;
    }
    Ok(x)
}

/// Reverse pass over layers `from..`, emitting gradients for layers at or
/// above `lowest`. `acts` comes from [`trace`] started at `from`.
#[allow(clippy::too_many_arguments)]
fn reverse(
    spec: &ModelSpec,
    backbone: Option<&ParamSet>,
    head: &ParamSet,
    acts: &[Tensor],
    from: usize,
    lowest: usize,
    dlogits: &Tensor,
    grads_b: &mut Option<ParamSet>,
    grads_h: &mut Option<ParamSet>,
) -> Result<(), NnError> {
    let n_layers = spec.layers().len();
    let out = acts.last().unwrap();
    if dlogits.shape() != out.shape() {
        return Err(NnError::Shape(format!(
            "dlogits shape {:?} does not match logits {:?}",
            dlogits.shape(),
            out.shape()
        )));
    }
    let mut delta = dlogits.clone();
    for idx in (lowest..n_layers).rev() {
        let layer = &spec.layers()[idx];
        let post = &acts[idx - from + 1];
        let input = &acts[idx - from];
        if layer.activation == Activation::Relu {
            for (d, &a) in delta.values_mut().iter_mut().zip(post.values()) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let dw = matmul_at_b(input, &delta)?;
        let mut db = vec![0.0; layer.outputs];
        for row in delta.values().chunks(layer.outputs) {
            for (b, d) in db.iter_mut().zip(row) {
                *b += d;
            }
        }
        let target = match spec.segment_of(idx) {
            Segment::Backbone => grads_b.as_mut(),
            Segment::Head => grads_h.as_mut(),
        };
        if let Some(set) = target {
            let entry = set.layer_mut(idx).unwrap();
            entry.weight = dw;
            entry.bias = Tensor::from_parts(vec![layer.outputs], db);
        }
        if idx > lowest {
            delta = matmul_a_bt(&delta, &params_for(spec, backbone, head, idx).weight)?;
        }
    }
    Ok(())
}

/// Gradients of the loss whose logit-gradient is `dlogits`, restricted to
/// the trainable segment(s). Activations are recomputed from `batch`.
pub fn backward_masked(
    spec: &ModelSpec,
    backbone: &ParamSet,
    head: &ParamSet,
    batch: &Tensor,
    dlogits: &Tensor,
    trainable: Trainable,
) -> Result<Gradients, NnError> {
    check_segment(spec, backbone, Segment::Backbone)?;
    check_segment(spec, head, Segment::Head)?;
    if trainable == Trainable::HeadOnly {
        let features = forward_features(spec, backbone, batch)?;
        let head_grads = backward_head(spec, head, &features, dlogits)?;
        return Ok(Gradients { backbone: None, head: Some(head_grads) });
    }
    check_batch(spec, spec.input_width(), batch)?;
    let acts = trace(spec, Some(backbone), head, batch, 0)?;
    let mut gb = Some(ParamSet::zeros(spec, Segment::Backbone));
    let mut gh = trainable.includes(Segment::Head).then(|| ParamSet::zeros(spec, Segment::Head));
    reverse(spec, Some(backbone), head, &acts, 0, 0, dlogits, &mut gb, &mut gh)?;
    Ok(Gradients { backbone: gb, head: gh })
}

/// Head gradients given precomputed backbone features.
pub fn backward_head(spec: &ModelSpec, head: &ParamSet, features: &Tensor, dlogits: &Tensor) -> Result<ParamSet, NnError> {
    check_segment(spec, head, Segment::Head)?;
    check_batch(spec, spec.feature_width(), features)?;
    let split = spec.split_index();
    let acts = trace(spec, None, head, features, split)?;
    let mut gb = None;
    let mut gh = Some(ParamSet::zeros(spec, Segment::Head));
    reverse(spec, None, head, &acts, split, split, dlogits, &mut gb, &mut gh)?;
    Ok(gh.unwrap())
}
