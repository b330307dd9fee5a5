//! The scheduler: picks which player moves next and which in-transit messages
//! it receives, under the partial-synchrony contract.
//!
//! Every message gets a deadline `send_step + delta` and is delivered no later
//! than that. Every player is chosen at least once per `n * delta` steps. The
//! partition policy holds messages crossing between two sides while isolation
//! lasts; released messages get a fresh deadline from the heal step.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::PlayerId;

pub type MsgId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Fifo,
    SeededRandom,
    PartitionAdversarial,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Fifo, PolicyKind::SeededRandom, PolicyKind::PartitionAdversarial];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fifo => "fifo",
            PolicyKind::SeededRandom => "seeded-random",
            PolicyKind::PartitionAdversarial => "partition-adversarial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub a: Vec<PlayerId>,
    pub b: Vec<PlayerId>,
    /// Isolation ends at this step at the latest.
    pub cap: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePolicy {
    pub kind: PolicyKind,
    pub seed: u64,
    pub delta: u64,
    pub partition: Option<PartitionSpec>,
}

impl SchedulePolicy {
    pub fn new(kind: PolicyKind, seed: u64, n: u32) -> Self {
        Self { kind, seed, delta: 4 * n as u64, partition: None }
    }
}

#[derive(Debug, Clone)]
pub struct Envelope<M> {
    pub id: MsgId,
    pub sender: PlayerId,
    pub recipient: PlayerId,
    pub send_step: u64,
    pub deadline: u64,
    pub msg: M,
    ready_at: u64,
    held: bool,
}

pub struct Move<M> {
    pub step: u64,
    pub player: PlayerId,
    pub delivered: Vec<Envelope<M>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
enum Side {
    #[default]
    Neither,
    A,
    B,
}

pub struct Network<M> {
    n: usize,
    kind: PolicyKind,
    delta: u64,
    rng: ChaCha8Rng,
    step: u64,
    next_id: MsgId,
    queues: Vec<Vec<Envelope<M>>>,
    min_deadline: Vec<u64>,
    last_chosen: Vec<u64>,
    sides: Vec<Side>,
    isolated: bool,
    isolation_cap: u64,
    healed_at: Option<u64>,
    late: Vec<MsgId>,
}

impl<M> Network<M> {
    pub fn new(n: u32, policy: &SchedulePolicy) -> Self {
        let n = n as usize;
        let mut sides = vec![Side::Neither; n];
        let mut isolated = false;
        let mut isolation_cap = 0;
        if let (PolicyKind::PartitionAdversarial, Some(p)) = (policy.kind, &policy.partition) {
            for &a in &p.a {
                sides[a as usize] = Side::A;
            }
            for &b in &p.b {
                sides[b as usize] = Side::B;
            }
            isolated = true;
            isolation_cap = p.cap;
        }
        Self {
            n,
            kind: policy.kind,
            delta: policy.delta.max(1),
            rng: ChaCha8Rng::seed_from_u64(policy.seed),
            step: 0,
            next_id: 0,
            queues: (0..n).map(|_| Vec::new()).collect(),
            min_deadline: vec![u64::MAX; n],
            last_chosen: vec![0; n],
            sides,
            isolated,
            isolation_cap,
            healed_at: None,
            late: Vec::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn is_isolated(&self) -> bool {
        self.isolated
    }

    pub fn healed_at(&self) -> Option<u64> {
        self.healed_at
    }

    pub fn in_transit(&self) -> usize {
        self.queues.iter().map(Vec::len).sum()
    }

    /// Messages in transit that isolation is not holding back.
    pub fn deliverable(&self) -> usize {
        self.queues.iter().flatten().filter(|e| !e.held).count()
    }

    /// Ids of messages delivered after their deadline. Empty unless the
    /// scheduler has a bug.
    pub fn late_deliveries(&self) -> &[MsgId] {
        &self.late
    }

    fn crosses(&self, a: PlayerId, b: PlayerId) -> bool {
        matches!(
            (self.sides[a as usize], self.sides[b as usize]),
            (Side::A, Side::B) | (Side::B, Side::A)
        )
    }

    fn latency(&mut self) -> u64 {
        match self.kind {
            PolicyKind::Fifo => 1,
            _ => self.rng.gen_range(1..=self.delta),
        }
    }

    /// Puts a message in transit, stamped with the current step.
    pub fn submit(&mut self, sender: PlayerId, recipient: PlayerId, msg: M) -> MsgId {
        let id = self.next_id;
        self.next_id += 1;
        let held = self.isolated && self.crosses(sender, recipient);
        let (deadline, ready_at) = if held {
            (u64::MAX, u64::MAX)
        } else {
            let lat = self.latency();
            (self.step + self.delta, self.step + lat)
        };
        let r = recipient as usize;
        self.min_deadline[r] = self.min_deadline[r].min(deadline);
        self.queues[r].push(Envelope {
            id,
            sender,
            recipient,
            send_step: self.step,
            deadline,
            msg,
            ready_at,
            held,
        });
        id
    }

    /// Ends isolation. Held messages get deadlines counted from now.
    pub fn heal(&mut self) {
        if !self.isolated {
            return;
        }
        self.isolated = false;
        self.healed_at = Some(self.step);
        let now = self.step;
        for r in 0..self.n {
            for i in 0..self.queues[r].len() {
                if self.queues[r][i].held {
                    let lat = self.latency();
                    let e = &mut self.queues[r][i];
                    e.held = false;
                    e.deadline = now + self.delta;
                    e.ready_at = now + lat;
                }
            }
            self.refresh_min(r);
        }
    }

    fn refresh_min(&mut self, r: usize) {
        self.min_deadline[r] = self.queues[r].iter().map(|e| e.deadline).min().unwrap_or(u64::MAX);
    }

    fn take(&mut self, r: usize, horizon: u64, all: bool) -> Vec<Envelope<M>> {
        let now = self.step;
        let out: Vec<_> = self.queues[r]
            .extract_if(.., |e| !e.held && (all || e.ready_at <= now || e.deadline <= horizon))
            .collect();
        self.refresh_min(r);
        for e in &out {
            if e.deadline < now {
                self.late.push(e.id);
            }
        }
        out
    }

    /// Chooses the next player and its deliveries, then advances the step.
    pub fn next_move(&mut self) -> Move<M> {
        if self.isolated && self.step >= self.isolation_cap {
            self.heal();
        }
        let now = self.step;
        // Earliest-deadline recipient first, with enough slack that every
        // recipient with an imminent deadline can be served in turn.
        let slack = self.n as u64;
        let horizon = now + slack;
        let urgent = (0..self.n).filter(|&r| self.min_deadline[r] <= horizon).min_by_key(|&r| self.min_deadline[r]);
        let window = (self.n as u64 * self.delta).saturating_sub(slack).max(1);
        let starving = (0..self.n)
            .filter(|&p| now.saturating_sub(self.last_chosen[p]) >= window)
            .min_by_key(|&p| self.last_chosen[p]);

        let (player, all) = if let Some(r) = urgent {
            (r, self.kind == PolicyKind::Fifo)
        } else if let Some(p) = starving {
            (p, self.kind == PolicyKind::Fifo)
        } else {
            match self.kind {
                PolicyKind::Fifo => {
                    let oldest = (0..self.n)
                        .filter_map(|r| self.queues[r].iter().find(|e| !e.held).map(|e| (e.id, r)))
                        .min();
                    match oldest {
                        Some((_, r)) => (r, true),
                        None => ((0..self.n).min_by_key(|&p| (self.last_chosen[p], p)).unwrap(), true),
                    }
                }
                _ => (self.rng.gen_range(0..self.n), false),
            }
        };
        let delivered = self.take(player, horizon, all);
        self.last_chosen[player] = now;
        self.step += 1;
        Move { step: now, player: player as PlayerId, delivered }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deadline_stamp() {
        let mut net: Network<u8> = Network::new(4, &SchedulePolicy { delta: 10, ..SchedulePolicy::new(PolicyKind::Fifo, 0, 4) });
        for _ in 0..5 {
            net.next_move();
        }
        let id = net.submit(0, 1, 9);
        assert_eq!(net.queues[1][0].deadline, 15);
        let id2 = net.submit(0, 1, 9);
        assert_ne!(id, id2);
    }

    #[test]
    fn fifo_single_message_goes_to_recipient() {
        let mut net: Network<u8> = Network::new(4, &SchedulePolicy::new(PolicyKind::Fifo, 0, 4));
        net.submit(0, 2, 7);
        let mv = net.next_move();
        assert_eq!(mv.player, 2);
        assert_eq!(mv.delivered.len(), 1);
        assert_eq!(mv.delivered[0].msg, 7);
    }

    #[test]
    fn partition_holds_cross_traffic_until_heal() {
        let policy = SchedulePolicy {
            partition: Some(PartitionSpec { a: vec![0], b: vec![1], cap: 50 }),
            ..SchedulePolicy::new(PolicyKind::PartitionAdversarial, 3, 4)
        };
        let mut net: Network<u8> = Network::new(4, &policy);
        net.submit(0, 1, 1);
        net.submit(0, 2, 2);
        for _ in 0..49 {
            let mv = net.next_move();
            assert!(mv.delivered.iter().all(|e| e.msg != 1));
        }
        assert!(net.is_isolated());
        let mut seen = false;
        for _ in 0..200 {
            seen |= net.next_move().delivered.iter().any(|e| e.msg == 1);
        }
        assert!(seen);
        assert_eq!(net.healed_at(), Some(50));
        assert!(net.late_deliveries().is_empty());
    }

    #[test]
    fn random_policy_is_deterministic() {
        let run = || {
            let mut net: Network<u32> = Network::new(5, &SchedulePolicy::new(PolicyKind::SeededRandom, 42, 5));
            let mut log = Vec::new();
            for i in 0..300u32 {
                net.submit(i % 5, (i * 7) % 5, i);
                let mv = net.next_move();
                log.push((mv.player, mv.delivered.iter().map(|e| e.id).collect::<Vec<_>>()));
            }
            log
        };
        assert_eq!(run(), run());
    }
}
