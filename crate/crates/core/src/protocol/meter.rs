use serde::{Deserialize, Serialize};

/// One transfer between nodes (or between a node and the server).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Message {
    pub parameters: u64,
    pub optimizer_state: u64,
    /// Portion of `parameters` that belongs to head segments.
    pub head_parameters: u64,
    pub link_traversals: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundComm {
    pub round: u32,
    pub parameters_sent: u64,
    pub optimizer_state_sent: u64,
    pub head_parameters_sent: u64,
    pub messages_sent: u64,
    pub link_traversals: u64,
}

/// Cumulative scalar counts plus a per-round breakdown (rounds from 1).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommMeter {
    pub parameters_sent: u64,
    pub optimizer_state_sent: u64,
    pub head_parameters_sent: u64,
    pub messages_sent: u64,
    pub link_traversals: u64,
    pub per_round: Vec<RoundComm>,
}

impl CommMeter {
    pub fn new() -> Self {
        Self::default()
    }

    fn round_mut(&mut self, round: u32) -> &mut RoundComm {
        while self.per_round.len() < round as usize {
            let r = self.per_round.len() as u32 + 1;
            self.per_round.push(RoundComm { round: r, ..Default::default() });
        }
        &mut self.per_round[round as usize - 1]
    }

    pub fn begin_round(&mut self, round: u32) {
        self.round_mut(round);
    }

    pub fn record(&mut self, round: u32, msg: Message) {
        self.parameters_sent += msg.parameters;
        self.optimizer_state_sent += msg.optimizer_state;
        self.head_parameters_sent += msg.head_parameters;
        self.messages_sent += 1;
        self.link_traversals += msg.link_traversals;
        let r = self.round_mut(round);
        r.parameters_sent += msg.parameters;
        r.optimizer_state_sent += msg.optimizer_state;
        r.head_parameters_sent += msg.head_parameters;
        r.messages_sent += 1;
        r.link_traversals += msg.link_traversals;
    }

    pub fn is_zero(&self) -> bool {
        self.parameters_sent == 0 && self.optimizer_state_sent == 0 && self.messages_sent == 0 && self.link_traversals == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_match_round_breakdown() {
        let mut m = CommMeter::new();
        m.record(1, Message { parameters: 10, optimizer_state: 21, head_parameters: 0, link_traversals: 1 });
        m.record(3, Message { parameters: 10, optimizer_state: 0, head_parameters: 4, link_traversals: 3 });
        assert_eq!(m.per_round.len(), 3);
        assert_eq!(m.per_round[1], RoundComm { round: 2, ..Default::default() });
        let sum: u64 = m.per_round.iter().map(|r| r.parameters_sent).sum();
        assert_eq!(sum, m.parameters_sent);
        assert_eq!(m.link_traversals, 4);
        assert_eq!(m.messages_sent, 2);
    }
}
