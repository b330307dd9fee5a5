//! Schedule exploration for reliable broadcast: a single instance driven by
//! scripted Byzantine messages, checked for agreement, totality, validity and
//! at-most-once delivery. Small networks are explored exhaustively, larger
//! ones by random interleavings.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::Digest;
use crate::rb::{RbAction, RbInstance, RbThresholds};
use crate::PlayerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Send,
    Echo,
    Ready,
}

/// Payloads are small tags; value `v` hashes to `[v; 32]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Wire {
    pub from: PlayerId,
    pub to: PlayerId,
    pub kind: Kind,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbScenario {
    pub n: u32,
    pub source: PlayerId,
    pub byzantine: Vec<PlayerId>,
    /// Everything the Byzantine players ever send, in flight from the start.
    pub injected: Vec<Wire>,
    /// Value broadcast by a correct source.
    pub source_value: u8,
    /// Defaults to the standard quorums.
    pub thresholds: Option<RbThresholds>,
}

impl RbScenario {
    fn correct(&self, p: PlayerId) -> bool {
        !self.byzantine.contains(&p)
    }

    fn source_correct(&self) -> bool {
        self.correct(self.source)
    }

    fn initial(&self) -> Vec<Wire> {
        let mut out = self.injected.clone();
        if self.source_correct() {
            for to in (0..self.n).filter(|&p| self.correct(p)) {
                out.push(Wire { from: self.source, to, kind: Kind::Send, value: self.source_value });
            }
        }
        out
    }
}

fn digest_of(v: u8) -> Digest {
    [v; 32]
}

fn validate(v: &u8) -> Option<Digest> {
    Some(digest_of(*v))
}

#[derive(Clone)]
struct World {
    instances: Vec<RbInstance<u8>>,
    delivered: Vec<Vec<u8>>,
    in_flight: Vec<Wire>,
}

impl World {
    fn new(sc: &RbScenario) -> Self {
        let th = sc.thresholds.unwrap_or_else(|| RbThresholds::standard(sc.n));
        Self {
            instances: (0..sc.n).map(|_| RbInstance::new(sc.source, th)).collect(),
            delivered: vec![Vec::new(); sc.n as usize],
            in_flight: sc.initial(),
        }
    }

    fn deliver(&mut self, sc: &RbScenario, idx: usize) {
        let w = self.in_flight.swap_remove(idx);
        let inst = &mut self.instances[w.to as usize];
        let actions = match w.kind {
            Kind::Send => inst.on_send(w.from, w.value, validate),
            Kind::Echo => inst.on_echo(w.from, digest_of(w.value), w.value, validate),
            Kind::Ready => inst.on_ready(w.from, digest_of(w.value)),
        };
        for a in actions {
            let (kind, value) = match a {
                RbAction::Echo(_, v) => (Kind::Echo, v),
                RbAction::Ready(d) => (Kind::Ready, d[0]),
                RbAction::Deliver(v) => {
                    self.delivered[w.to as usize].push(v);
                    continue;
                }
            };
            for to in (0..sc.n).filter(|&p| sc.correct(p)) {
                self.in_flight.push(Wire { from: w.to, to, kind, value });
            }
        }
    }

    /// Checks a quiescent state.
    fn violations(&self, sc: &RbScenario) -> Vec<String> {
        let mut out = Vec::new();
        let correct: Vec<PlayerId> = (0..sc.n).filter(|&p| sc.correct(p)).collect();
        for &p in &correct {
            if self.delivered[p as usize].len() > 1 {
                out.push(format!("player {p} delivered {} times", self.delivered[p as usize].len()));
            }
        }
        let firsts: Vec<Option<u8>> = correct.iter().map(|&p| self.delivered[p as usize].first().copied()).collect();
        let values: HashSet<u8> = firsts.iter().flatten().copied().collect();
        if values.len() > 1 {
            out.push(format!("agreement: delivered {firsts:?}"));
        }
        if !values.is_empty() && firsts.iter().any(Option::is_none) {
            out.push(format!("totality: delivered {firsts:?}"));
        }
        if sc.source_correct() && firsts.iter().any(|f| *f != Some(sc.source_value)) {
            out.push(format!("validity: delivered {firsts:?}"));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub scenarios: usize,
    /// Distinct states visited (exhaustive) or schedules run (random).
    pub explored: u64,
    pub violations: Vec<String>,
}

impl ExploreReport {
    pub fn ok(&self) -> bool {
        self.scenarios > 0 && self.violations.is_empty()
    }
}

fn wire_bit(n: u32, w: &Wire) -> u32 {
    let kind = match w.kind {
        Kind::Send => 0,
        Kind::Echo => 1,
        Kind::Ready => 2,
    };
    (((w.from * n + w.to) * 3 + kind) * 2) + u32::from(w.value == 2)
}

/// Explores every interleaving, merging schedules that reach the same set of
/// delivered messages, and stops at the first violating end state. Values
/// must be 1 or 2, and `n` at most 4.
pub fn explore_exhaustive(sc: &RbScenario) -> ExploreReport {
    assert!(sc.n * sc.n * 6 <= 128, "exhaustive exploration supports n <= 4");
    let mut seen: HashSet<u128> = HashSet::new();
    let mut report = ExploreReport { scenarios: 1, ..Default::default() };
    let mut stack = vec![(World::new(sc), 0u128)];
    while let Some((world, mask)) = stack.pop() {
        if !seen.insert(mask) {
            continue;
        }
        report.explored += 1;
        if world.in_flight.is_empty() {
            report.violations = world.violations(sc);
            if !report.violations.is_empty() {
                break;
            }
            continue;
        }
        for i in 0..world.in_flight.len() {
            let next_mask = mask | 1u128 << wire_bit(sc.n, &world.in_flight[i]);
            if seen.contains(&next_mask) {
                continue;
            }
            let mut next = world.clone();
            next.deliver(sc, i);
            stack.push((next, next_mask));
        }
    }
    report
}

pub fn explore_random(sc: &RbScenario, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut world = World::new(sc);
    while !world.in_flight.is_empty() {
        let i = rng.gen_range(0..world.in_flight.len());
        world.deliver(sc, i);
    }
    world.violations(sc)
}

fn scripted(n: u32, source: PlayerId, byzantine: PlayerId, sends: &[(PlayerId, Kind, u8)], source_value: u8) -> RbScenario {
    let injected = sends.iter().map(|&(to, kind, value)| Wire { from: byzantine, to, kind, value }).collect();
    RbScenario { n, source, byzantine: vec![byzantine], injected, source_value, thresholds: None }
}

/// Scripts at `n = 4` with player 0 Byzantine. As source it sends each
/// correct player a consistent SEND, ECHO and READY for value 1, value 2, or
/// nothing; correct players are interchangeable and so are the two values,
/// so one script per symmetry class suffices. Two mixed scripts push one
/// value in the initial message and the other in echoes and readies, and a
/// last one has a correct source facing an echoer of the other value.
pub fn equivocation_scenarios_n4() -> Vec<RbScenario> {
    let n = 4;
    let all = [Kind::Send, Kind::Echo, Kind::Ready];
    let mut out = Vec::new();
    for choices in [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 2], [1, 1, 1], [1, 1, 2]] {
        let sends: Vec<(PlayerId, Kind, u8)> = choices
            .iter()
            .zip(1..)
            .filter(|(&c, _)| c != 0)
            .flat_map(|(&c, to)| all.map(|kind| (to, kind, c)))
            .collect();
        out.push(scripted(n, 0, 0, &sends, 0));
    }
    let mut mixed: Vec<(PlayerId, Kind, u8)> = Vec::new();
    for to in 1..4 {
        mixed.extend([(to, Kind::Send, 1), (to, Kind::Echo, 2), (to, Kind::Ready, 2)]);
    }
    out.push(scripted(n, 0, 0, &mixed, 0));
    let split = [(1, Kind::Send, 1), (2, Kind::Send, 1), (3, Kind::Send, 2), (1, Kind::Ready, 2), (2, Kind::Ready, 2), (3, Kind::Ready, 1)];
    out.push(scripted(n, 0, 0, &split, 0));
    let echoer: Vec<(PlayerId, Kind, u8)> = (1..4).flat_map(|to| [(to, Kind::Echo, 2), (to, Kind::Ready, 2)]).collect();
    out.push(scripted(n, 1, 0, &echoer, 1));
    out
}

/// A random script for `n` players: the source and the next `t0 - 1`
/// players are Byzantine and send each correct player an arbitrary mix of
/// messages for values 1 and 2.
pub fn random_equivocation_scenario(n: u32, seed: u64) -> RbScenario {
    let t0 = n.div_ceil(3) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7262);
    let mut ids: Vec<PlayerId> = (0..n).collect();
    ids.shuffle(&mut rng);
    let byzantine: Vec<PlayerId> = ids[..t0 as usize].to_vec();
    let source = byzantine[0];
    let mut injected = Vec::new();
    for &from in &byzantine {
        for to in ids[t0 as usize..].iter().copied() {
            for kind in [Kind::Send, Kind::Echo, Kind::Ready] {
                if kind == Kind::Send && from != source {
                    continue;
                }
                for value in [1, 2] {
                    if rng.gen_bool(0.5) {
                        injected.push(Wire { from, to, kind, value });
                    }
                }
            }
        }
    }
    RbScenario { n, source, byzantine, injected, source_value: 0, thresholds: None }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn honest_source_delivers_everywhere() {
        let sc = scripted(4, 2, 0, &[], 1);
        let r = explore_exhaustive(&sc);
        assert!(r.ok(), "{:?}", r.violations);
        assert!(r.explored > 1);
    }

    #[test]
    fn weak_quorums_are_caught() {
        let mut sc = scripted(4, 0, 0, &[(1, Kind::Send, 1), (2, Kind::Send, 2)], 0);
        sc.thresholds = Some(RbThresholds { echo_to_ready: 1, ready_amplify: 1, deliver: 1 });
        let r = explore_exhaustive(&sc);
        assert!(r.violations.iter().any(|v| v.starts_with("agreement")), "{:?}", r.violations);
    }
}
