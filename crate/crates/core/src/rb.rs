//! Bracha-style reliable broadcast, one state machine per (instance, player).
//!
//! The instance only counts; transport, signatures and fan-out belong to the
//! caller. Echo and ready senders are identified by the caller (the simulator
//! authenticates envelope senders), and each sender is counted once per phase
//! no matter how many or how conflicting its messages are.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::Digest;
use crate::PlayerId;

pub const MAX_PLAYERS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbThresholds {
    pub echo_to_ready: usize,
    pub ready_amplify: usize,
    pub deliver: usize,
}

impl RbThresholds {
    pub fn standard(n: u32) -> Self {
        let t0 = n.div_ceil(3).saturating_sub(1) as usize;
        let n = n as usize;
        Self { echo_to_ready: n - t0, ready_amplify: t0 + 1, deliver: n - t0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbPhase {
    Init,
    Echoed,
    Readied,
    Delivered,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RbError {
    #[error("player {0} is not the source of this instance")]
    NotSource(PlayerId),
    #[error("instance already started")]
    AlreadyStarted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RbAction<P> {
    Echo(Digest, P),
    Ready(Digest),
    Deliver(P),
}

#[derive(Debug, Clone, Copy, Default)]
struct SignerSet(u128);

impl SignerSet {
    fn insert(&mut self, id: PlayerId) -> bool {
        let bit = 1u128 << id;
        let fresh = self.0 & bit == 0;
        self.0 |= bit;
        fresh
    }

    fn len(self) -> usize {
        self.0.count_ones() as usize
    }
}

#[derive(Debug, Clone)]
struct Tally<P> {
    digest: Digest,
    echoes: SignerSet,
    readies: SignerSet,
    payload: Option<P>,
}

#[derive(Debug, Clone)]
pub struct RbInstance<P> {
    source: PlayerId,
    thresholds: RbThresholds,
    started: bool,
    echoed: bool,
    readied: bool,
    delivered: Option<P>,
    echo_senders: SignerSet,
    ready_senders: SignerSet,
    tallies: Vec<Tally<P>>,
}

impl<P: Clone> RbInstance<P> {
    pub fn new(source: PlayerId, thresholds: RbThresholds) -> Self {
        assert!((source as usize) < MAX_PLAYERS, "player id {source} out of range");
        Self {
            source,
            thresholds,
            started: false,
            echoed: false,
            readied: false,
            delivered: None,
            echo_senders: SignerSet::default(),
            ready_senders: SignerSet::default(),
            tallies: Vec::new(),
        }
    }

    pub fn source(&self) -> PlayerId {
        self.source
    }

    pub fn phase(&self) -> RbPhase {
        if self.delivered.is_some() {
            RbPhase::Delivered
        } else if self.readied {
            RbPhase::Readied
        } else if self.echoed {
            RbPhase::Echoed
        } else {
            RbPhase::Init
        }
    }

    pub fn delivered(&self) -> Option<&P> {
        self.delivered.as_ref()
    }

    /// Marks the instance started by its source; the caller sends the
    /// initial message to every player.
    pub fn start(&mut self, caller: PlayerId) -> Result<(), RbError> {
        if caller != self.source {
            return Err(RbError::NotSource(caller));
        }
        if self.started {
            return Err(RbError::AlreadyStarted);
        }
        self.started = true;
        Ok(())
    }

    fn tally(&mut self, digest: Digest) -> usize {
        match self.tallies.iter().position(|t| t.digest == digest) {
            Some(i) => i,
            None => {
                self.tallies.push(Tally {
                    digest,
                    echoes: SignerSet::default(),
                    readies: SignerSet::default(),
                    payload: None,
                });
                self.tallies.len() - 1
            }
        }
    }

    /// `validate` returns the payload's digest if it is well formed and
    /// properly signed by the source.
    pub fn on_send(&mut self, from: PlayerId, payload: P, validate: impl Fn(&P) -> Option<Digest>) -> Vec<RbAction<P>> {
        if from != self.source || self.echoed {
            return Vec::new();
        }
        let Some(d) = validate(&payload) else {
            return Vec::new();
        };
        self.echoed = true;
        let i = self.tally(d);
        if self.tallies[i].payload.is_none() {
            self.tallies[i].payload = Some(payload.clone());
        }
        let mut out = vec![RbAction::Echo(d, payload)];
        self.progress(i, &mut out);
        out
    }

    pub fn on_echo(
        &mut self,
        from: PlayerId,
        digest: Digest,
        payload: P,
        validate: impl Fn(&P) -> Option<Digest>,
    ) -> Vec<RbAction<P>> {
        if (from as usize) >= MAX_PLAYERS || !self.echo_senders.insert(from) {
            return Vec::new();
        }
        let i = self.tally(digest);
        self.tallies[i].echoes.insert(from);
        if self.tallies[i].payload.is_none() && validate(&payload) == Some(digest) {
            self.tallies[i].payload = Some(payload);
        }
        let mut out = Vec::new();
        self.progress(i, &mut out);
        out
    }

    pub fn on_ready(&mut self, from: PlayerId, digest: Digest) -> Vec<RbAction<P>> {
        if (from as usize) >= MAX_PLAYERS || !self.ready_senders.insert(from) {
            return Vec::new();
        }
        let i = self.tally(digest);
        self.tallies[i].readies.insert(from);
        let mut out = Vec::new();
        self.progress(i, &mut out);
        out
    }

    fn progress(&mut self, i: usize, out: &mut Vec<RbAction<P>>) {
        let th = self.thresholds;
        let t = &self.tallies[i];
        if !self.readied && (t.echoes.len() >= th.echo_to_ready || t.readies.len() >= th.ready_amplify) {
            self.readied = true;
            out.push(RbAction::Ready(t.digest));
        }
        // A ready quorum may form before the payload arrives; any tally that
        // has both is eligible, so scan them all.
        if self.delivered.is_none() {
            if let Some(t) = self.tallies.iter().find(|t| t.readies.len() >= th.deliver && t.payload.is_some()) {
                let p = t.payload.clone().expect("checked above");
                self.delivered = Some(p.clone());
                out.push(RbAction::Deliver(p));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(b: u8) -> Digest {
        [b; 32]
    }

    fn ok(p: &u8) -> Option<Digest> {
        Some(d(*p))
    }

    #[test]
    fn start_rules() {
        let mut inst: RbInstance<u8> = RbInstance::new(0, RbThresholds::standard(4));
        assert_eq!(inst.start(1), Err(RbError::NotSource(1)));
        assert_eq!(inst.start(0), Ok(()));
        assert_eq!(inst.start(0), Err(RbError::AlreadyStarted));
    }

    #[test]
    fn echo_threshold_emits_ready() {
        let mut inst: RbInstance<u8> = RbInstance::new(0, RbThresholds::standard(4));
        assert_eq!(inst.on_send(0, 7, ok), vec![RbAction::Echo(d(7), 7)]);
        assert!(inst.on_echo(1, d(7), 7, ok).is_empty());
        assert!(inst.on_echo(2, d(7), 7, ok).is_empty());
        assert_eq!(inst.on_echo(3, d(7), 7, ok), vec![RbAction::Ready(d(7))]);
        assert_eq!(inst.phase(), RbPhase::Readied);
    }

    #[test]
    fn ready_amplification_and_delivery() {
        let mut inst: RbInstance<u8> = RbInstance::new(0, RbThresholds::standard(4));
        assert!(inst.on_ready(1, d(7)).is_empty());
        assert_eq!(inst.on_ready(2, d(7)), vec![RbAction::Ready(d(7))]);
        // Ready quorum without payload waits for it.
        assert!(inst.on_ready(3, d(7)).is_empty());
        assert_eq!(inst.on_echo(1, d(7), 7, ok), vec![RbAction::Deliver(7)]);
        assert_eq!(inst.delivered(), Some(&7));
    }

    #[test]
    fn duplicate_senders_count_once() {
        let mut inst: RbInstance<u8> = RbInstance::new(0, RbThresholds::standard(4));
        inst.on_echo(1, d(7), 7, ok);
        inst.on_echo(1, d(8), 8, ok);
        inst.on_echo(1, d(7), 7, ok);
        inst.on_echo(2, d(7), 7, ok);
        assert_eq!(inst.phase(), RbPhase::Init);
    }

    #[test]
    fn mismatched_echo_payload_is_not_stored() {
        let mut inst: RbInstance<u8> = RbInstance::new(0, RbThresholds::standard(4));
        inst.on_echo(1, d(7), 9, ok);
        for p in 1..4 {
            inst.on_ready(p, d(7));
        }
        assert!(inst.delivered().is_none());
        assert_eq!(inst.on_echo(2, d(7), 7, ok), vec![RbAction::Deliver(7)]);
    }
}
