use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Cost model of ring training in logical time units. Stage `c` is node
/// `c`'s visit plus its outgoing hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineModel {
    /// Compute time of one visit, per node in ring order.
    pub compute: Vec<f64>,
    pub hop: HopTime,
    pub rounds: u32,
    /// Backbone copies in flight; when set, the schedule is also simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HopTime {
    Uniform(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineEstimate {
    /// One token: `R · S` with `S` the sum of stage times.
    pub sequential: f64,
    /// `S + (R − 1) · M` with `M` the bottleneck stage time; reached once
    /// at least `R` tokens are in flight.
    pub lower_bound: f64,
    /// `S + (R − 1) · C · M`.
    pub upper_bound: f64,
    pub bottleneck_node: usize,
    pub bottleneck_stage_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
    /// Simulated makespan with `tokens` copies.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulated: Option<f64>,
}

impl PipelineModel {
    pub fn uniform(nodes: usize, compute: f64, hop: f64, rounds: u32) -> Self {
        Self { compute: vec![compute; nodes], hop: HopTime::Uniform(hop), rounds, tokens: None }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.compute.is_empty() {
            return bad("pipeline needs at least one node".into());
        }
        if self.rounds == 0 {
            return bad("pipeline needs at least one round".into());
        }
        if let HopTime::PerNode(h) = &self.hop {
            if h.len() != self.compute.len() {
                return bad(format!("{} hop times for {} nodes", h.len(), self.compute.len()));
            }
        }
        let hops = match &self.hop {
            HopTime::Uniform(h) => vec![*h],
            HopTime::PerNode(h) => h.clone(),
        };
        if self.compute.iter().chain(&hops).any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("all times must be positive".into());
        }
        if self.tokens == Some(0) {
            return bad("tokens must be at least 1".into());
        }
        Ok(())
    }

    pub fn stage_times(&self) -> Vec<f64> {
        self.compute
            .iter()
            .enumerate()
            .map(|(c, t)| {
                t + match &self.hop {
                    HopTime::Uniform(h) => *h,
                    HopTime::PerNode(h) => h[c],
                }
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Read { path: path.to_path_buf(), source })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| HarnessError::Schema { path: e.path().to_string(), message: e.into_inner().to_string() })
    }
}

pub fn estimate_pipeline_makespan(model: &PipelineModel) -> Result<PipelineEstimate, HarnessError> {
    model.validate()?;
    let s = model.stage_times();
    let (c, r) = (s.len() as f64, model.rounds as f64);
    let total: f64 = s.iter().sum();
    // first maximum wins so ties name the lowest node
    let (bottleneck_node, &m) = s.iter().enumerate().fold((0, &s[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
    Ok(PipelineEstimate {
        sequential: r * total,
        lower_bound: total + (r - 1.0) * m,
        upper_bound: total + (r - 1.0) * c * m,
        bottleneck_node,
        bottleneck_stage_time: m,
        tokens: model.tokens,
        simulated: model.tokens.map(|k| simulate_tokens(model, k)),
    })
}

#[derive(PartialEq)]
struct Done {
    time: f64,
    pass: usize,
    stage: usize,
}

impl Eq for Done {}

impl Ord for Done {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.stage.cmp(&other.stage)).then(self.pass.cmp(&other.pass))
    }
}

impl PartialOrd for Done {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Event-driven simulation of `R` ring passes with `K` backbone copies.
/// Each pass visits the stages in order, a stage serves one pass at a
/// time in arrival order, and a new pass can start only when a copy is
/// free. Returns the time the last pass leaves the last stage.
pub fn simulate_tokens(model: &PipelineModel, tokens: usize) -> f64 {
    let s = model.stage_times();
    let (c, r) = (s.len(), model.rounds as usize);
    let mut queues: Vec<VecDeque<usize>> = vec![VecDeque::new(); c];
    let mut busy = vec![false; c];
    let mut events = BinaryHeap::new();
    let mut started = tokens.min(r);
    queues[0].extend(0..started);
    let mut now = 0.0;
    let dispatch = |now: f64, queues: &mut Vec<VecDeque<usize>>, busy: &mut Vec<bool>, events: &mut BinaryHeap<Reverse<Done>>| {
        for stage in 0..c {
            if !busy[stage] {
                if let Some(pass) = queues[stage].pop_front() {
                    busy[stage] = true;
                    events.push(Reverse(Done { time: now + s[stage], pass, stage }));
                }
            }
        }
    };
    dispatch(now, &mut queues, &mut busy, &mut events);
    while let Some(Reverse(done)) = events.pop() {
        now = done.time;
        busy[done.stage] = false;
        if done.stage + 1 < c {
            queues[done.stage + 1].push_back(done.pass);
        } else if started < r {
            queues[0].push_back(started);
            started += 1;
        }
        dispatch(now, &mut queues, &mut busy, &mut events);
    }
    now
}

/// Closed form of the same schedule: pass `p` finishes stage `c` at
/// `max(ready, previous pass at c) + s_c`, where ready is the pass's
/// finish at `c − 1`, or for `c = 0` the finish of pass `p − K`.
pub fn simulate_tokens_recurrence(model: &PipelineModel, tokens: usize) -> f64 {
    let s = model.stage_times();
    let (c, r) = (s.len(), model.rounds as usize);
    let mut finish = vec![vec![0.0f64; c]; r];
    for p in 0..r {
        for k in 0..c {
            let ready = match (k, p >= tokens) {
                (0, true) => finish[p - tokens][c - 1],
                (0, false) => 0.0,
                _ => finish[p][k - 1],
            };
            let free = if p > 0 { finish[p - 1][k] } else { 0.0 };
            finish[p][k] = ready.max(free) + s[k];
        }
    }
    finish[r - 1][c - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_round_has_no_overlap() {
        let m = PipelineModel::uniform(4, 3.0, 1.0, 1);
        let e = estimate_pipeline_makespan(&m).unwrap();
        assert_eq!(e.sequential, 16.0);
        assert_eq!(e.lower_bound, e.sequential);
        assert_eq!(e.upper_bound, e.sequential);
    }

    #[test]
    fn slow_node_sets_the_bottleneck() {
        let mut m = PipelineModel::uniform(5, 2.0, 1.0, 4);
        m.compute[3] = 20.0;
        let e = estimate_pipeline_makespan(&m).unwrap();
        assert_eq!(e.bottleneck_node, 3);
        assert_eq!(e.bottleneck_stage_time, 21.0);
        assert_eq!(e.lower_bound, (4.0 * 3.0 + 21.0) + 3.0 * 21.0);
    }

    #[test]
    fn rejects_non_positive_times() {
        assert!(estimate_pipeline_makespan(&PipelineModel::uniform(3, 0.0, 1.0, 2)).is_err());
        let m = PipelineModel { hop: HopTime::PerNode(vec![1.0, 1.0]), ..PipelineModel::uniform(3, 1.0, 1.0, 2) };
        assert!(estimate_pipeline_makespan(&m).is_err());
        assert!(estimate_pipeline_makespan(&PipelineModel::uniform(0, 1.0, 1.0, 2)).is_err());
    }

    #[test]
    fn hop_time_parses_scalar_or_list() {
        let m: PipelineModel = serde_json::from_str(r#"{"compute":[1,2],"hop":0.5,"rounds":3}"#).unwrap();
        assert_eq!(m.hop, HopTime::Uniform(0.5));
        let m: PipelineModel = serde_json::from_str(r#"{"compute":[1,2],"hop":[1,2],"rounds":3,"tokens":2}"#).unwrap();
        assert_eq!(m.stage_times(), vec![2.0, 4.0]);
    }
}
