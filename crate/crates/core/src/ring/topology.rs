use super::script::{FaultEvent, FaultKind, FaultTarget, LinkRef};
use super::RingError;

pub type NodeId = usize;

/// Nodes `0..n` in cyclic order. Span `i` joins node `i` to node `i+1`
/// (mod n): its primary link carries traffic forward, its secondary link
/// carries traffic back.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RingTopology {
    node_up: Vec<bool>,
    primary_up: Vec<bool>,
    secondary_up: Vec<bool>,
}

impl RingTopology {
    pub fn healthy(nodes: usize) -> Result<Self, RingError> {
        if nodes == 0 {
            return Err(RingError::Empty);
        }
        Ok(Self { node_up: vec![true; nodes], primary_up: vec![true; nodes], secondary_up: vec![true; nodes] })
    }

    pub fn len(&self) -> usize {
        self.node_up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_up.is_empty()
    }

    pub fn node_up(&self, node: NodeId) -> bool {
        self.node_up.get(node).copied().unwrap_or(false)
    }

    pub fn up_nodes(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&n| self.node_up[n]).collect()
    }

    pub fn primary_up(&self, span: usize) -> bool {
        self.primary_up[span]
    }

    pub fn secondary_up(&self, span: usize) -> bool {
        self.secondary_up[span]
    }

    fn succ(&self, node: NodeId) -> NodeId {
        (node + 1) % self.len()
    }

    /// Span index and direction of the directed link `from -> to`.
    /// Forward links resolve to the primary loop first.
    pub fn resolve_link(&self, from: NodeId, to: NodeId) -> Result<LinkRef, RingError> {
        let n = self.len();
        if from >= n || to >= n {
            return Err(RingError::UnknownLink { from, to });
        }
        if self.succ(from) == to {
            Ok(LinkRef::Primary(from))
        } else if self.succ(to) == from {
            Ok(LinkRef::Secondary(to))
        } else {
            Err(RingError::UnknownLink { from, to })
        }
    }

    fn set_link(&mut self, link: LinkRef, up: bool) -> Result<(), RingError> {
        let n = self.len();
        match link {
            LinkRef::Primary(s) if s < n => self.primary_up[s] = up,
            LinkRef::Secondary(s) if s < n => self.secondary_up[s] = up,
            LinkRef::Primary(s) => return Err(RingError::UnknownLink { from: s, to: (s + 1) % n }),
            LinkRef::Secondary(s) => return Err(RingError::UnknownLink { from: (s + 1) % n, to: s }),
        }
        Ok(())
    }

    /// Both ends up and both directions of the span usable.
    fn span_intact(&self, span: usize) -> bool {
        self.node_up[span] && self.node_up[self.succ(span)] && self.primary_up[span] && self.secondary_up[span]
    }

    fn primary_cycle_intact(&self) -> bool {
        self.node_up.iter().all(|&u| u) && self.primary_up.iter().all(|&u| u)
    }
}

/// Reachable components under the current link state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RouteView {
    /// Cyclic visit sequences, ordered by their lowest node id.
    pub components: Vec<Vec<NodeId>>,
    /// `(tail, head)` of every wrapped component: traffic turns from the
    /// primary onto the secondary loop at `tail` and back at `head`.
    pub wrap_points: Vec<(NodeId, NodeId)>,
}

impl RouteView {
    pub fn component_of(&self, node: NodeId) -> Option<usize> {
        self.components.iter().position(|c| c.contains(&node))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.component_of(node).is_some()
    }

    pub fn is_wrapped(&self, component: usize) -> bool {
        let c = &self.components[component];
        self.wrap_points.iter().any(|&(tail, head)| c.first() == Some(&head) && c.last() == Some(&tail))
    }

    /// Physical link crossings needed to move from `from` to its successor.
    pub fn transit_len(&self, from: NodeId) -> Result<usize, RingError> {
        let ci = self.component_of(from).ok_or(RingError::NodeDown(from))?;
        let c = &self.components[ci];
        if c.len() == 1 {
            return Ok(usize::from(!self.is_wrapped(ci)));
        }
        Ok(if self.is_wrapped(ci) && c.last() == Some(&from) { c.len() - 1 } else { 1 })
    }

    pub fn node_count(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }
}

pub fn apply_fault_event(topology: &RingTopology, event: &FaultEvent) -> Result<RingTopology, RingError> {
    let mut next = topology.clone();
    let up = matches!(event.kind, FaultKind::LinkUp | FaultKind::NodeUp);
    match (event.kind, &event.target) {
        (FaultKind::LinkDown | FaultKind::LinkUp, FaultTarget::Link(link)) => {
            let link = link.resolve(topology)?;
            next.set_link(link, up)?;
        }
        (FaultKind::NodeDown | FaultKind::NodeUp, FaultTarget::Node(n)) => {
            if *n >= topology.len() {
                return Err(RingError::UnknownNode(*n));
            }
            next.node_up[*n] = up;
        }
        (kind, target) => {
            return Err(RingError::Parse { line: 0, message: format!("{kind} cannot target {target}") });
        }
    }
    Ok(next)
}

/// Healthy primary loop: one component in ring order. Otherwise every
/// maximal run of up nodes joined by intact spans becomes one wrapped
/// component, starting at the node after its break.
pub fn reconfigure(topology: &RingTopology) -> RouteView {
    let n = topology.len();
    if topology.primary_cycle_intact() {
        return RouteView { components: vec![(0..n).collect()], wrap_points: Vec::new() };
    }
    let mut components = Vec::new();
    for start in 0..n {
        let prev = (start + n - 1) % n;
        if !topology.node_up[start] || topology.span_intact(prev) {
            continue;
        }
        let mut path = vec![start];
        let mut at = start;
        while topology.span_intact(at) {
            at = topology.succ(at);
            path.push(at);
        }
        components.push(path);
    }
    components.sort_by_key(|c| *c.iter().min().unwrap());
    let wrap_points = components.iter().map(|c| (*c.last().unwrap(), c[0])).collect();
    RouteView { components, wrap_points }
}

pub fn next_hop(view: &RouteView, from: NodeId) -> Result<NodeId, RingError> {
    let ci = view.component_of(from).ok_or(RingError::NodeDown(from))?;
    let c = &view.components[ci];
    let pos = c.iter().position(|&x| x == from).unwrap();
    Ok(c[(pos + 1) % c.len()])
}

pub fn detect_partitions(view: &RouteView) -> usize {
    view.components.iter().filter(|c| !c.is_empty()).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn healthy_ring_wraps_around() {
        let view = reconfigure(&RingTopology::healthy(5).unwrap());
        assert_eq!(view.components, vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(next_hop(&view, 4).unwrap(), 0);
        assert_eq!(view.transit_len(4).unwrap(), 1);
    }

    #[test]
    fn two_node_ring_alternates() {
        let view = reconfigure(&RingTopology::healthy(2).unwrap());
        assert_eq!(next_hop(&view, 0).unwrap(), 1);
        assert_eq!(next_hop(&view, 1).unwrap(), 0);
    }

    #[test]
    fn secondary_failure_alone_keeps_primary_order() {
        let mut t = RingTopology::healthy(4).unwrap();
        t.secondary_up[1] = false;
        assert_eq!(reconfigure(&t).components, vec![vec![0, 1, 2, 3]]);
    }
}
