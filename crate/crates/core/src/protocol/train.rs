use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::LocalData;
use crate::nn::{
    argmax, backward_head, backward_masked, forward_features, forward_head, forward_split, ModelSpec, OptimizerState, ParamSet,
    Targets, Trainable,
};

use super::node::{NodeState, Phase, PhaseEvent, PhaseStats, Schedule, SharedBackbone, VisitObserver};
use super::ProtocolError;

/// Runs `epochs` passes over `n` samples in mini-batches, reshuffling with
/// `rng` before each pass. The last partial batch is kept. Returns the
/// mean of the values `step` reports, or 0 when nothing ran.
pub(crate) fn run_epochs(
    n: usize,
    batch_size: usize,
    epochs: u32,
    rng: &mut ChaCha8Rng,
    mut step: impl FnMut(&[usize]) -> Result<f64, ProtocolError>,
) -> Result<f64, ProtocolError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for _ in 0..epochs {
        for rows in epoch_batches(n, batch_size, rng) {
            total += step(&rows)?;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

pub(crate) fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// One update of both segments on `rows` of `data`. Each segment has its
/// own optimizer state and rate.
#[allow(clippy::too_many_arguments)]
pub(crate) fn joint_update(
    spec: &ModelSpec,
    backbone: &mut ParamSet,
    backbone_opt: &mut OptimizerState,
    head: &mut ParamSet,
    head_opt: &mut OptimizerState,
    data: &LocalData,
    rows: &[usize],
    lr_backbone: f64,
    lr_head: f64,
) -> Result<f64, ProtocolError> {
    let (x, y) = data.batch(rows);
    let pass = forward_split(spec, backbone, head, &x)?;
    let out = y.loss(&pass.logits)?;
    let grads = backward_masked(spec, backbone, head, &x, &out.dlogits, Trainable::Both)?;
    backbone_opt.apply(backbone, grads.backbone.as_ref().unwrap(), lr_backbone)?;
    head_opt.apply(head, grads.head.as_ref().unwrap(), lr_head)?;
    Ok(out.loss)
}

fn head_epochs(
    spec: &ModelSpec,
    node: &mut NodeState,
    backbone: &ParamSet,
    epochs: u32,
    batch_size: usize,
    lr: f64,
) -> Result<f64, ProtocolError> {
    if epochs == 0 {
        return Ok(0.0);
    }
    // the backbone is frozen, so features are computed once
    let features = forward_features(spec, backbone, &node.train.inputs)?;
    let NodeState { head, head_optimizer, train, rng, .. } = node;
    run_epochs(train.len(), batch_size, epochs, rng, |rows| {
        let f = features.select_rows(rows);
        let y = train.targets.select(rows);
        let out = y.loss(&forward_head(spec, head, &f)?)?;
        let g = backward_head(spec, head, &f, &out.dlogits)?;
        head_optimizer.apply(head, &g, lr)?;
        Ok(out.loss)
    })
}

/// Head-only epochs at the head rate of `round` (0-based); the backbone is
/// read-only.
pub fn train_head_step(
    spec: &ModelSpec,
    node: &mut NodeState,
    backbone: &SharedBackbone,
    schedule: &Schedule,
    round: u32,
) -> Result<f64, ProtocolError> {
    head_epochs(spec, node, &backbone.params, schedule.head_epochs, schedule.batch_size, schedule.head_lr.at_round(round))
}

/// Backbone-only epochs with supervision through the node's frozen head.
pub fn train_backbone_step(
    spec: &ModelSpec,
    node: &mut NodeState,
    backbone: &mut SharedBackbone,
    schedule: &Schedule,
    round: u32,
) -> Result<f64, ProtocolError> {
    let lr = schedule.backbone_lr.at_round(round);
    let NodeState { head, train, rng, .. } = node;
    let SharedBackbone { params, optimizer, .. } = backbone;
    run_epochs(train.len(), schedule.batch_size, schedule.backbone_epochs, rng, |rows| {
        let (x, y) = train.batch(rows);
        let pass = forward_split(spec, params, head, &x)?;
        let out = y.loss(&pass.logits)?;
        let grads = backward_masked(spec, params, head, &x, &out.dlogits, Trainable::BackboneOnly)?;
        optimizer.apply(params, grads.backbone.as_ref().unwrap(), lr)?;
        Ok(out.loss)
    })
}

/// Joint epochs over both segments.
pub fn train_full_step(
    spec: &ModelSpec,
    node: &mut NodeState,
    backbone: &mut SharedBackbone,
    schedule: &Schedule,
    round: u32,
) -> Result<f64, ProtocolError> {
    let (lr_b, lr_h) = (schedule.backbone_lr.at_round(round), schedule.head_lr.at_round(round));
    let NodeState { head, head_optimizer, train, rng, .. } = node;
    let SharedBackbone { params, optimizer, .. } = backbone;
    run_epochs(train.len(), schedule.batch_size, schedule.full_epochs, rng, |rows| {
        joint_update(spec, params, optimizer, head, head_optimizer, train, rows, lr_b, lr_h)
    })
}

fn phase_event<'a>(round: u32, phase: Phase, backbone: &'a SharedBackbone, node: &'a NodeState) -> PhaseEvent<'a> {
    PhaseEvent { round: round + 1, node: node.id, phase, backbone: &backbone.params, head: &node.head }
}

/// Head phase, then backbone phase, then (when `full_epochs > 0`) the
/// joint phase. Phases with zero epochs are skipped. `round` is 0-based.
pub fn visit_node(
    spec: &ModelSpec,
    node: &mut NodeState,
    backbone: &mut SharedBackbone,
    schedule: &Schedule,
    round: u32,
    observer: &mut dyn VisitObserver,
) -> Result<Vec<PhaseStats>, ProtocolError> {
    if schedule.reset_backbone_optimizer {
        backbone.optimizer = OptimizerState::new(schedule.optimizer, &backbone.params);
    }
    let lr_head = schedule.head_lr.at_round(round);
    let lr_backbone = schedule.backbone_lr.at_round(round);
    let plan = [
        (Phase::Head, schedule.head_epochs),
        (Phase::Backbone, schedule.backbone_epochs),
        (Phase::Full, schedule.full_epochs),
    ];
    let mut stats = Vec::new();
    for (phase, epochs) in plan {
        if epochs == 0 {
            continue;
        }
        observer.phase_started(phase_event(round, phase, backbone, node));
        let mean_loss = match phase {
            Phase::Head => train_head_step(spec, node, backbone, schedule, round)?,
            Phase::Backbone => train_backbone_step(spec, node, backbone, schedule, round)?,
            _ => train_full_step(spec, node, backbone, schedule, round)?,
        };
        observer.phase_finished(phase_event(round, phase, backbone, node));
        let accuracy = evaluate_accuracy(spec, &backbone.params, &node.head, &node.test)?;
        stats.push(PhaseStats { phase, epochs, mean_loss, lr_head, lr_backbone, accuracy });
    }
    Ok(stats)
}

/// Extra head-only epochs for every node at the head rate of the final
/// scheduled round.
pub fn fine_tune_heads(
    spec: &ModelSpec,
    backbone: &ParamSet,
    nodes: &mut [NodeState],
    epochs: u32,
    schedule: &Schedule,
) -> Result<(), ProtocolError> {
    let lr = schedule.head_lr.at_round(schedule.rounds.saturating_sub(1));
    for node in nodes {
        head_epochs(spec, node, backbone, epochs, schedule.batch_size, lr)?;
    }
    Ok(())
}

/// Fraction of correct predictions. Class targets use argmax with ties
/// going to the lowest index; binary targets predict 1 iff the logit is
/// positive, scored per element.
pub fn evaluate_accuracy(spec: &ModelSpec, backbone: &ParamSet, head: &ParamSet, data: &LocalData) -> Result<f64, ProtocolError> {
    let logits = forward_split(spec, backbone, head, &data.inputs)?.logits;
    Ok(accuracy_of(&logits, &data.targets))
}

pub(crate) fn accuracy_of(logits: &crate::nn::Tensor, targets: &Targets) -> f64 {
    match targets {
        Targets::Classes(labels) => {
            let correct = labels.iter().enumerate().filter(|&(i, &y)| argmax(logits.row(i)) == y).count();
            correct as f64 / labels.len() as f64
        }
        Targets::Binary(t) => {
            let correct = logits.values().iter().zip(t.values()).filter(|&(&z, &y)| (z > 0.0) == (y > 0.5)).count();
            correct as f64 / t.len() as f64
        }
    }
}

pub fn mean_accuracy(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
