use std::fmt;
use std::str::FromStr;

use super::topology::{NodeId, RingTopology};
use super::RingError;

/// Position in a run: event `(r, h)` takes effect before the `h`-th
/// transfer step of round `r` (rounds count from 1, steps from 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalTime {
    pub round: u32,
    pub hop: u32,
}

impl fmt::Display for LogicalTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.round, self.hop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    LinkDown,
    LinkUp,
    NodeDown,
    NodeUp,
}

impl FaultKind {
    pub fn inverse(self) -> Self {
        match self {
            FaultKind::LinkDown => FaultKind::LinkUp,
            FaultKind::LinkUp => FaultKind::LinkDown,
            FaultKind::NodeDown => FaultKind::NodeUp,
            FaultKind::NodeUp => FaultKind::NodeDown,
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FaultKind::LinkDown => "link_down",
            FaultKind::LinkUp => "link_up",
            FaultKind::NodeDown => "node_down",
            FaultKind::NodeUp => "node_up",
        })
    }
}

impl FromStr for FaultKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "link_down" => Ok(FaultKind::LinkDown),
            "link_up" => Ok(FaultKind::LinkUp),
            "node_down" => Ok(FaultKind::NodeDown),
            "node_up" => Ok(FaultKind::NodeUp),
            other => Err(format!("unknown event kind `{other}`")),
        }
    }
}

/// A resolved link: span index plus loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkRef {
    Primary(usize),
    Secondary(usize),
}

/// Event target as written in a script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultTarget {
    Node(NodeId),
    /// Directed link `from -> to`; `secondary` forces the reverse loop when
    /// the direction alone is ambiguous (two-node rings).
    Link(LinkSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub secondary: bool,
}

impl LinkSpec {
    pub fn resolve(&self, topology: &RingTopology) -> Result<LinkRef, RingError> {
        if self.secondary {
            let n = topology.len();
            if self.from < n && self.to < n && (self.to + 1) % n == self.from {
                return Ok(LinkRef::Secondary(self.to));
            }
            return Err(RingError::UnknownLink { from: self.from, to: self.to });
        }
        topology.resolve_link(self.from, self.to)
    }
}

impl fmt::Display for FaultTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultTarget::Node(n) => write!(f, "{n}"),
            FaultTarget::Link(l) if l.secondary => write!(f, "s:{}-{}", l.from, l.to),
            FaultTarget::Link(l) => write!(f, "{}-{}", l.from, l.to),
        }
    }
}

impl FromStr for FaultTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (secondary, body) = match s.strip_prefix("s:") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        if let Some((a, b)) = body.split_once('-') {
            let from = a.parse().map_err(|_| format!("bad link endpoint `{a}`"))?;
            let to = b.parse().map_err(|_| format!("bad link endpoint `{b}`"))?;
            return Ok(FaultTarget::Link(LinkSpec { from, to, secondary }));
        }
        if secondary {
            return Err(format!("`{s}` is not a link"));
        }
        body.parse().map(FaultTarget::Node).map_err(|_| format!("bad target `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaultEvent {
    pub time: LogicalTime,
    pub kind: FaultKind,
    pub target: FaultTarget,
}

impl FaultEvent {
    pub fn new(round: u32, hop: u32, kind: FaultKind, target: FaultTarget) -> Self {
        Self { time: LogicalTime { round, hop }, kind, target }
    }

    pub fn link(round: u32, hop: u32, kind: FaultKind, from: NodeId, to: NodeId) -> Self {
        Self::new(round, hop, kind, FaultTarget::Link(LinkSpec { from, to, secondary: false }))
    }

    pub fn node(round: u32, hop: u32, kind: FaultKind, node: NodeId) -> Self {
        Self::new(round, hop, kind, FaultTarget::Node(node))
    }

    fn target_matches_kind(&self) -> bool {
        matches!(
            (self.kind, self.target),
            (FaultKind::LinkDown | FaultKind::LinkUp, FaultTarget::Link(_)) | (FaultKind::NodeDown | FaultKind::NodeUp, FaultTarget::Node(_))
        )
    }
}

impl fmt::Display for FaultEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.time, self.kind, self.target)
    }
}

/// Time-ordered fault events. Events sharing a time keep script order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FaultScript {
    events: Vec<FaultEvent>,
}

impl FaultScript {
    pub fn new(mut events: Vec<FaultEvent>) -> Self {
        events.sort_by_key(|e| e.time);
        Self { events }
    }

    pub fn events(&self) -> &[FaultEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Parses `<round>.<hop> <kind> <target>` lines. Blank lines and lines
    /// starting with `#` are skipped. Link targets are `a-b` (directed) or
    /// `s:a-b` (explicitly on the secondary loop); node targets are ids.
    pub fn parse(text: &str) -> Result<Self, RingError> {
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| RingError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [time, kind, target] = fields[..] else {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            };
            let (r, h) = time.split_once('.').ok_or_else(|| err(format!("time `{time}` is not <round>.<hop>")))?;
            let round: u32 = r.parse().map_err(|_| err(format!("bad round `{r}`")))?;
            let hop: u32 = h.parse().map_err(|_| err(format!("bad hop `{h}`")))?;
            if round == 0 {
                return Err(err("rounds start at 1".into()));
            }
            let event = FaultEvent::new(round, hop, kind.parse().map_err(err)?, target.parse().map_err(err)?);
            if !event.target_matches_kind() {
                return Err(err(format!("{} cannot target {}", event.kind, event.target)));
            }
            events.push(event);
        }
        Ok(Self::new(events))
    }

    pub fn to_text(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }

    /// Checks every target against `topology`.
    pub fn validate(&self, topology: &RingTopology) -> Result<(), RingError> {
        for e in &self.events {
            match e.target {
                FaultTarget::Node(n) if n >= topology.len() => return Err(RingError::UnknownNode(n)),
                FaultTarget::Node(_) => {}
                FaultTarget::Link(l) => {
                    l.resolve(topology)?;
                }
            }
        }
        Ok(())
    }

    /// Events with `time == at`.
    pub fn at(&self, at: LogicalTime) -> impl Iterator<Item = &FaultEvent> {
        self.events.iter().filter(move |e| e.time == at)
    }

    /// Events in round `round` whose hop is at least `from_hop`.
    pub fn remaining_in_round(&self, round: u32, from_hop: u32) -> impl Iterator<Item = &FaultEvent> {
        self.events.iter().filter(move |e| e.time.round == round && e.time.hop >= from_hop)
    }
}
