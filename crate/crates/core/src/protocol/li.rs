use std::time::Instant;

use crate::nn::{ModelSpec, Segment};
use crate::ring::{apply_fault_event, detect_partitions, next_hop, reconfigure, FaultScript, NodeId, RingTopology, RouteView};

use super::meter::{CommMeter, Message};
use super::node::{ClientModel, NodeState, RunResult, Schedule, SharedBackbone, TopologyRecord, VisitObserver, VisitRecord};
use super::train::{evaluate_accuracy, visit_node};
use super::ProtocolError;

/// A backbone copy travelling inside one component.
#[derive(Debug, Clone)]
struct Token {
    backbone: SharedBackbone,
    /// Node the token will be delivered to next.
    at: NodeId,
    /// Component the token served at the last reconfiguration.
    members: Vec<NodeId>,
}

impl Token {
    fn origin(&self) -> NodeId {
        self.members.iter().copied().min().unwrap_or(usize::MAX)
    }
}

struct Ring<'a> {
    topology: RingTopology,
    view: RouteView,
    faults: &'a FaultScript,
    records: Vec<TopologyRecord>,
}

impl Ring<'_> {
    /// Applies the events scheduled at `(round, hop)`; true if any fired.
    fn apply_events(&mut self, round: u32, events: Vec<crate::ring::FaultEvent>, hop: u32) -> Result<bool, ProtocolError> {
        if events.is_empty() {
            return Ok(false);
        }
        for e in &events {
            self.topology = apply_fault_event(&self.topology, e)?;
        }
        self.view = reconfigure(&self.topology);
        self.records.push(TopologyRecord {
            round,
            hop,
            partitions: detect_partitions(&self.view),
            components: self.view.components.clone(),
            wrap_points: self.view.wrap_points.clone(),
        });
        Ok(true)
    }
}

/// Matches tokens to the components of a new view. A token whose target
/// went down moves on to the next up node in ring order. Components that
/// receive several tokens keep the one from the component with the lowest
/// node id; components that receive none get a copy of the token that
/// previously served their lowest member.
fn reconcile(tokens: Vec<Token>, view: &RouteView, ring_len: usize, visited: &[bool]) -> Vec<Token> {
    if view.components.is_empty() {
        return tokens;
    }
    let mut tokens = tokens;
    for t in &mut tokens {
        if !view.contains(t.at) {
            if let Some(n) = (1..ring_len).map(|k| (t.at + k) % ring_len).find(|&n| view.contains(n)) {
                t.at = n;
            }
        }
    }
    let mut out = Vec::with_capacity(view.components.len());
    for comp in &view.components {
        let winner = tokens.iter().filter(|t| comp.contains(&t.at)).min_by_key(|t| t.origin()).cloned();
        let mut token = match winner {
            Some(t) => t,
            None => {
                let low = *comp.iter().min().unwrap();
                let donor = tokens
                    .iter()
                    .filter(|t| comp.iter().any(|n| t.members.contains(n)))
                    .min_by_key(|t| t.members.iter().filter(|m| comp.contains(m)).min().copied().unwrap_or(low))
                    .or_else(|| tokens.iter().min_by_key(|t| t.origin()))
                    .unwrap();
                let at = comp.iter().copied().find(|&n| !visited[n]).unwrap_or(comp[0]);
                Token { backbone: donor.backbone.clone(), at, members: Vec::new() }
            }
        };
        token.members = comp.clone();
        out.push(token);
    }
    out
}

/// Runs ring training for `schedule.rounds` rounds starting from
/// `backbone` at the first node of the initial route.
///
/// Every round each reachable node is visited once. Each visit ends with
/// a transfer of the backbone (and, unless reset per visit, its optimizer
/// state) to the next node on the route; heads never leave their node.
/// Fault events are applied between transfer steps. Disjoint components
/// train their own copies in lockstep.
pub fn run_li(
    spec: &ModelSpec,
    nodes: &mut [NodeState],
    backbone: SharedBackbone,
    schedule: &Schedule,
    topology: &RingTopology,
    faults: &FaultScript,
    observer: &mut dyn VisitObserver,
) -> Result<RunResult, ProtocolError> {
    schedule.validate_li()?;
    if nodes.is_empty() {
        return Err(ProtocolError::NoNodes);
    }
    if topology.len() != nodes.len() {
        return Err(ProtocolError::Invalid(format!("ring has {} nodes but {} clients were given", topology.len(), nodes.len())));
    }
    if nodes.iter().enumerate().any(|(i, n)| n.id != i) {
        return Err(ProtocolError::Invalid("node ids must equal their ring positions".into()));
    }
    faults.validate(topology)?;
    let started = Instant::now();
    let c = nodes.len();
    let backbone_len = spec.param_count(Segment::Backbone) as u64;

    let view = reconfigure(topology);
    let mut ring = Ring { topology: topology.clone(), view, faults, records: Vec::new() };
    let first = ring.view.components.first().map(|comp| comp[0]).unwrap_or(0);
    let members = ring.view.components.first().cloned().unwrap_or_default();
    let mut tokens = vec![Token { backbone, at: first, members }];
    let mut meter = CommMeter::new();
    let mut accuracies = Vec::with_capacity(schedule.rounds as usize);
    let mut visits = Vec::new();
    let mut logical_steps = 0u64;

    for round in 1..=schedule.rounds {
        meter.begin_round(round);
        let mut visited = vec![false; c];
        let mut row = vec![None; c];
        let mut step = 0u32;
        loop {
            let due: Vec<_> = ring.faults.at(crate::ring::LogicalTime { round, hop: step }).copied().collect();
            if ring.apply_events(round, due, step)? {
                tokens = reconcile(tokens, &ring.view, c, &visited);
            }
            let mut progressed = false;
            for token in &mut tokens {
                let Some(ci) = ring.view.component_of(token.at) else { continue };
                if ring.view.components[ci].iter().all(|&n| visited[n]) {
                    continue;
                }
                // forward past nodes that already trained this round
                while visited[token.at] {
                    let next = next_hop(&ring.view, token.at)?;
                    let traversals = ring.view.transit_len(token.at)? as u64;
                    meter.record(round, transfer(&token.backbone, backbone_len, schedule, traversals));
                    token.at = next;
                }
                let node = &mut nodes[token.at];
                let visit_start = Instant::now();
                let phases = visit_node(spec, node, &mut token.backbone, schedule, round - 1, observer)?;
                let accuracy = match phases.last() {
                    Some(p) => p.accuracy,
                    None => evaluate_accuracy(spec, &token.backbone.params, &node.head, &node.test)?,
                };
                visited[token.at] = true;
                row[token.at] = Some(accuracy);
                token.backbone.round_stamp = round;
                let next = next_hop(&ring.view, token.at)?;
                let traversals = ring.view.transit_len(token.at)? as u64;
                meter.record(round, transfer(&token.backbone, backbone_len, schedule, traversals));
                token.backbone.hop_count += 1;
                visits.push(VisitRecord {
                    round,
                    step,
                    node: token.at,
                    phases,
                    accuracy,
                    parameters_sent: meter.parameters_sent,
                    elapsed: visit_start.elapsed(),
                });
                token.at = next;
                progressed = true;
            }
            if !progressed {
                break;
            }
            step += 1;
            logical_steps += 1;
        }
        let late: Vec<_> = ring.faults.remaining_in_round(round, step + 1).copied().collect();
        let hop = late.first().map(|e| e.time.hop).unwrap_or(step);
        if ring.apply_events(round, late, hop)? {
            tokens = reconcile(tokens, &ring.view, c, &visited);
        }
        accuracies.push(row);
    }

    let owner = |n: NodeId| tokens.iter().find(|t| t.members.contains(&n)).or_else(|| tokens.iter().min_by_key(|t| t.origin()));
    let mut client_models = Vec::with_capacity(c);
    let mut final_accuracies = Vec::with_capacity(c);
    for node in nodes.iter() {
        let b = &owner(node.id).unwrap().backbone.params;
        final_accuracies.push(evaluate_accuracy(spec, b, &node.head, &node.test)?);
        client_models.push(ClientModel { backbone: b.clone(), head: node.head.clone() });
    }
    let unreachable = (0..c).filter(|&n| !ring.view.contains(n)).collect();
    let survivor = tokens.into_iter().min_by_key(Token::origin).map(|t| t.backbone);
    Ok(RunResult {
        accuracies,
        final_accuracies,
        backbone: survivor,
        client_models,
        meter,
        visits,
        topology_events: ring.records,
        unreachable,
        logical_steps,
        wall_time: started.elapsed(),
    })
}

fn transfer(backbone: &SharedBackbone, backbone_len: u64, schedule: &Schedule, traversals: u64) -> Message {
    let optimizer_state = if schedule.reset_backbone_optimizer { 0 } else { backbone.optimizer.payload_len() as u64 };
    Message { parameters: backbone_len, optimizer_state, head_parameters: 0, link_traversals: traversals }
}
