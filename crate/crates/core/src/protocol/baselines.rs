use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::data::LocalData;
use crate::nn::{ModelSpec, OptimizerState, ParamSet, Segment};
use crate::ring::{reconfigure, RingTopology};

use super::meter::{CommMeter, Message};
use super::node::{ClientModel, NodeState, Phase, PhaseStats, RunResult, Schedule, VisitRecord};
use super::train::{epoch_batches, evaluate_accuracy, joint_update, run_epochs};
use super::ProtocolError;

fn check_nodes(nodes: &[NodeState], schedule: &Schedule) -> Result<(), ProtocolError> {
    schedule.validate()?;
    if nodes.is_empty() {
        return Err(ProtocolError::NoNodes);
    }
    Ok(())
}

fn local_stats(schedule: &Schedule, round: u32, mean_loss: f64, accuracy: f64) -> Vec<PhaseStats> {
    let lr = schedule.model_lr.at_round(round - 1);
    vec![PhaseStats { phase: Phase::Local, epochs: schedule.local_epochs, mean_loss, lr_head: lr, lr_backbone: lr, accuracy }]
}

/// Server-style averaging of full models. Each round every client starts
/// from the global model, trains `local_epochs` whole-model epochs with
/// its own persistent optimizer state, and the server averages the
/// returned models weighted by training-set size in client order.
pub fn run_fedavg(
    spec: &ModelSpec,
    nodes: &mut [NodeState],
    init_backbone: &ParamSet,
    init_head: &ParamSet,
    schedule: &Schedule,
) -> Result<RunResult, ProtocolError> {
    check_nodes(nodes, schedule)?;
    let started = Instant::now();
    let full_len = spec.total_param_count() as u64;
    let head_len = spec.param_count(Segment::Head) as u64;
    let mut global = (init_backbone.clone(), init_head.clone());
    let mut opts: Vec<(OptimizerState, OptimizerState)> = nodes
        .iter()
        .map(|_| (OptimizerState::new(schedule.optimizer, init_backbone), OptimizerState::new(schedule.optimizer, init_head)))
        .collect();
    let mut meter = CommMeter::new();
    let mut accuracies = Vec::new();
    let mut visits = Vec::new();
    let down = Message { parameters: full_len, optimizer_state: 0, head_parameters: head_len, link_traversals: 1 };

    for round in 1..=schedule.rounds {
        meter.begin_round(round);
        let lr = schedule.model_lr.at_round(round - 1);
        let mut returned = Vec::with_capacity(nodes.len());
        let mut losses = Vec::with_capacity(nodes.len());
        for (node, (ob, oh)) in nodes.iter_mut().zip(opts.iter_mut()) {
            meter.record(round, down);
            let (mut b, mut h) = global.clone();
            let NodeState { train, rng, .. } = node;
            let loss = run_epochs(train.len(), schedule.batch_size, schedule.local_epochs, rng, |rows| {
                joint_update(spec, &mut b, ob, &mut h, oh, train, rows, lr, lr)
            })?;
            meter.record(round, down);
            returned.push((b, h, node.train.len() as f64));
            losses.push(loss);
        }
        let bs: Vec<(&ParamSet, f64)> = returned.iter().map(|(b, _, w)| (b, *w)).collect();
        let hs: Vec<(&ParamSet, f64)> = returned.iter().map(|(_, h, w)| (h, *w)).collect();
        global = (ParamSet::weighted_average(&bs)?, ParamSet::weighted_average(&hs)?);
        let mut row = Vec::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            let acc = evaluate_accuracy(spec, &global.0, &global.1, &node.test)?;
            row.push(Some(acc));
            visits.push(VisitRecord {
                round,
                step: i as u32,
                node: node.id,
                phases: local_stats(schedule, round, losses[i], acc),
                accuracy: acc,
                parameters_sent: meter.parameters_sent,
                elapsed: Default::default(),
            });
        }
        accuracies.push(row);
    }
    for node in nodes.iter_mut() {
        node.head = global.1.clone();
    }
    finish(spec, nodes, accuracies, None, nodes.iter().map(|_| global.clone()).collect(), meter, visits, 0, started)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &ModelSpec,
    nodes: &[NodeState],
    accuracies: Vec<Vec<Option<f64>>>,
    backbone: Option<super::SharedBackbone>,
    models: Vec<(ParamSet, ParamSet)>,
    meter: CommMeter,
    visits: Vec<VisitRecord>,
    logical_steps: u64,
    started: Instant,
) -> Result<RunResult, ProtocolError> {
    let mut final_accuracies = Vec::with_capacity(nodes.len());
    let mut client_models = Vec::with_capacity(nodes.len());
    for (node, (b, h)) in nodes.iter().zip(models) {
        final_accuracies.push(evaluate_accuracy(spec, &b, &h, &node.test)?);
        client_models.push(ClientModel { backbone: b, head: h });
    }
    Ok(RunResult {
        accuracies,
        final_accuracies,
        backbone,
        client_models,
        meter,
        visits,
        topology_events: Vec::new(),
        unreachable: Vec::new(),
        logical_steps,
        wall_time: started.elapsed(),
    })
}

/// Every client trains a private full model starting from `init_backbone`
/// and its own head; nothing is communicated.
pub fn run_isolated(
    spec: &ModelSpec,
    nodes: &mut [NodeState],
    init_backbone: &ParamSet,
    schedule: &Schedule,
) -> Result<RunResult, ProtocolError> {
    check_nodes(nodes, schedule)?;
    let started = Instant::now();
    let mut accuracies = vec![Vec::with_capacity(nodes.len()); schedule.rounds as usize];
    let mut visits = Vec::new();
    let mut models = Vec::with_capacity(nodes.len());
    for node in nodes.iter_mut() {
        let mut b = init_backbone.clone();
        let mut ob = OptimizerState::new(schedule.optimizer, &b);
        for round in 1..=schedule.rounds {
            let lr = schedule.model_lr.at_round(round - 1);
            let NodeState { head, head_optimizer, train, rng, .. } = node;
            let loss = run_epochs(train.len(), schedule.batch_size, schedule.local_epochs, rng, |rows| {
                joint_update(spec, &mut b, &mut ob, head, head_optimizer, train, rows, lr, lr)
            })?;
            let acc = evaluate_accuracy(spec, &b, &node.head, &node.test)?;
            accuracies[round as usize - 1].push(Some(acc));
            visits.push(VisitRecord {
                round,
                step: 0,
                node: node.id,
                phases: local_stats(schedule, round, loss, acc),
                accuracy: acc,
                parameters_sent: 0,
                elapsed: Default::default(),
            });
        }
        models.push((b, node.head.clone()));
    }
    visits.sort_by_key(|v| (v.round, v.node));
    finish(spec, nodes, accuracies, None, models, CommMeter::new(), visits, 0, started)
}

/// One whole model (backbone plus a single shared head) hops to the next
/// node after every mini-batch update. Within a round each node's batches
/// are drawn from its own generator and the model cycles through the ring
/// order, skipping nodes whose batches are used up, for `local_epochs`
/// passes.
pub fn run_per_batch_ring(
    spec: &ModelSpec,
    nodes: &mut [NodeState],
    init_backbone: &ParamSet,
    init_head: &ParamSet,
    schedule: &Schedule,
    topology: &RingTopology,
) -> Result<RunResult, ProtocolError> {
    check_nodes(nodes, schedule)?;
    let view = reconfigure(topology);
    let order = match &view.components[..] {
        [only] if only.len() == nodes.len() => only.clone(),
        _ => return Err(ProtocolError::Invalid("per-batch ring training needs one loop over all nodes".into())),
    };
    let started = Instant::now();
    let full_len = spec.total_param_count() as u64;
    let head_len = spec.param_count(Segment::Head) as u64;
    let (mut b, mut h) = (init_backbone.clone(), init_head.clone());
    let mut ob = OptimizerState::new(schedule.optimizer, &b);
    let mut oh = OptimizerState::new(schedule.optimizer, &h);
    let mut meter = CommMeter::new();
    let mut accuracies = Vec::new();
    let mut visits = Vec::new();
    let mut hops = 0u64;

    for round in 1..=schedule.rounds {
        meter.begin_round(round);
        let lr = schedule.model_lr.at_round(round - 1);
        let mut loss_sum = vec![0.0; nodes.len()];
        let mut loss_count = vec![0usize; nodes.len()];
        for _ in 0..schedule.local_epochs {
            let batches: Vec<Vec<Vec<usize>>> =
                order.iter().map(|&n| epoch_batches(nodes[n].train.len(), schedule.batch_size, &mut nodes[n].rng)).collect();
            let longest = batches.iter().map(Vec::len).max().unwrap_or(0);
            for j in 0..longest {
                for (slot, &n) in order.iter().enumerate() {
                    let Some(rows) = batches[slot].get(j) else { continue };
                    let loss = joint_update(spec, &mut b, &mut ob, &mut h, &mut oh, &nodes[n].train, rows, lr, lr)?;
                    loss_sum[n] += loss;
                    loss_count[n] += 1;
                    let optimizer_state = (ob.payload_len() + oh.payload_len()) as u64;
                    meter.record(round, Message { parameters: full_len, optimizer_state, head_parameters: head_len, link_traversals: 1 });
                    hops += 1;
                }
            }
        }
        let mut row = vec![None; nodes.len()];
        for node in nodes.iter() {
            let acc = evaluate_accuracy(spec, &b, &h, &node.test)?;
            row[node.id] = Some(acc);
            let mean_loss = if loss_count[node.id] == 0 { 0.0 } else { loss_sum[node.id] / loss_count[node.id] as f64 };
            visits.push(VisitRecord {
                round,
                step: 0,
                node: node.id,
                phases: local_stats(schedule, round, mean_loss, acc),
                accuracy: acc,
                parameters_sent: meter.parameters_sent,
                elapsed: Default::default(),
            });
        }
        accuracies.push(row);
    }
    for node in nodes.iter_mut() {
        node.head = h.clone();
    }
    finish(spec, nodes, accuracies, None, nodes.iter().map(|_| (b.clone(), h.clone())).collect(), meter, visits, hops, started)
}

/// Plain mini-batch training of one full model on pooled data for
/// `rounds × local_epochs` epochs, with the model rate decayed per round.
pub fn train_centralized(
    spec: &ModelSpec,
    backbone: &mut ParamSet,
    head: &mut ParamSet,
    data: &LocalData,
    schedule: &Schedule,
    rng: &mut ChaCha8Rng,
) -> Result<(), ProtocolError> {
    schedule.validate()?;
    let mut ob = OptimizerState::new(schedule.optimizer, backbone);
    let mut oh = OptimizerState::new(schedule.optimizer, head);
    for round in 0..schedule.rounds {
        let lr = schedule.model_lr.at_round(round);
        run_epochs(data.len(), schedule.batch_size, schedule.local_epochs, rng, |rows| {
            joint_update(spec, backbone, &mut ob, head, &mut oh, data, rows, lr, lr)
        })?;
    }
    Ok(())
}
