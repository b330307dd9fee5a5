//! Winner consensus: agree on a set of proposals, each listing the baiting
//! candidates its proposer can prove, then draw the winner from the set.
//!
//! Single-shot, leader-based, three phases (pre-prepare, prepare, commit)
//! with view change on timeout. Votes from players the local proof lists
//! name as culprits are ignored; every quorum is `n - k - t`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::bftcr::{CandidateCache, ProofOfBaiting};
use crate::codec::{Reader, Writer};
use crate::crypto::{digest, digest_parts, Digest, ProofOfFraud, SignedMessage, Signer, Verifier};
use crate::PlayerId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub signed: SignedMessage,
    pub evidence: Vec<ProofOfBaiting>,
}

/// Ciphertexts enter by digest and witnesses by signature tag.
fn evidence_digest(evidence: &[ProofOfBaiting], mut ct_digest: impl FnMut(&Arc<Vec<u8>>) -> Digest) -> Digest {
    let mut w = Writer::new().tag(b"EVID").u32(evidence.len() as u32);
    for e in evidence {
        w = w.u32(e.candidate).raw(&e.key.0).raw(&ct_digest(&e.ciphertext)).u32(e.witnesses.len() as u32);
        for s in &e.witnesses {
            w = w.u32(s.signer()).raw(s.tag());
        }
    }
    digest(&w.finish())
}

impl Proposal {
    pub fn new(signer: &Signer, mut evidence: Vec<ProofOfBaiting>) -> Self {
        evidence.sort_by_key(|e| e.candidate);
        let payload = Writer::new().tag(b"WCP").u32(signer.id()).raw(&evidence_digest(&evidence, |ct| digest(ct))).finish();
        Self { signed: signer.sign(payload), evidence }
    }

    pub fn proposer(&self) -> PlayerId {
        self.signed.signer()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalSet {
    pub proposals: Vec<Arc<Proposal>>,
}

impl ProposalSet {
    pub fn new(mut proposals: Vec<Arc<Proposal>>) -> Self {
        proposals.sort_by_key(|p| p.proposer());
        Self { proposals }
    }

    pub fn digest(&self) -> Digest {
        let parts: Vec<Vec<u8>> = self.proposals.iter().map(|p| p.signed.encode()).collect();
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        digest_parts(&refs)
    }
}

/// What a validated set implies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetOutcome {
    pub candidates: BTreeSet<PlayerId>,
    pub culprits: BTreeSet<PlayerId>,
    pub pair: (Vec<u8>, Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewChange {
    pub signed: SignedMessage,
    pub prepared: Option<(Arc<ProposalSet>, Vec<SignedMessage>)>,
}

#[derive(Debug, Clone)]
pub enum WcMsg {
    Propose(Arc<Proposal>),
    PrePrepare { view: u64, set: Arc<ProposalSet>, justification: Arc<Vec<Arc<ViewChange>>> },
    Prepare(SignedMessage),
    Commit(SignedMessage),
    ViewChange(Arc<ViewChange>),
    Decided { set: Arc<ProposalSet>, commits: Arc<Vec<SignedMessage>> },
}

impl WcMsg {
    pub fn tag(&self) -> &'static str {
        match self {
            WcMsg::Propose(_) => "WC.PROPOSE",
            WcMsg::PrePrepare { .. } => "WC.PREPREPARE",
            WcMsg::Prepare(_) => "WC.PREPARE",
            WcMsg::Commit(_) => "WC.COMMIT",
            WcMsg::ViewChange(_) => "WC.VIEWCHANGE",
            WcMsg::Decided { .. } => "WC.DECIDED",
        }
    }
}

fn vote_payload(tag: &[u8], view: u64, d: &Digest) -> Vec<u8> {
    Writer::new().tag(tag).u64(view).raw(d).finish()
}

fn parse_vote(tag: &[u8], payload: &[u8]) -> Option<(u64, Digest)> {
    let mut r = Reader::new(payload);
    r.expect_tag(tag).ok()?;
    let view = r.u64().ok()?;
    let d = r.array32().ok()?;
    r.finish().ok()?;
    Some((view, d))
}

fn vc_payload(view: u64, prepared: Option<(u64, Digest)>) -> Vec<u8> {
    let (has, pv, pd) = match prepared {
        Some((v, d)) => (1, v, d),
        None => (0, 0, [0; 32]),
    };
    Writer::new().tag(b"WCVC").u64(view).u8(has).u64(pv).raw(&pd).finish()
}

fn parse_vc(payload: &[u8]) -> Option<(u64, Option<(u64, Digest)>)> {
    let mut r = Reader::new(payload);
    r.expect_tag(b"WCVC").ok()?;
    let view = r.u64().ok()?;
    let has = r.u8().ok()?;
    let pv = r.u64().ok()?;
    let pd = r.array32().ok()?;
    r.finish().ok()?;
    match has {
        0 => Some((view, None)),
        1 => Some((view, Some((pv, pd)))),
        _ => None,
    }
}

/// Read-only context a player lends to its consensus instance.
pub struct WcEnv<'a> {
    pub verifier: &'a Verifier,
    pub signer: &'a Signer,
    pub culprits: &'a BTreeSet<PlayerId>,
    pub min_witnesses: usize,
    pub min_culprits: usize,
}

struct ProposalInfo {
    candidates: BTreeSet<PlayerId>,
    culprits: BTreeSet<PlayerId>,
    pair: Option<(Vec<u8>, Vec<u8>)>,
}

pub struct WinnerConsensus {
    me: PlayerId,
    n: u64,
    quorum: usize,
    timeout_base: u64,
    started: bool,
    view: u64,
    timer: u64,
    proposals: BTreeMap<PlayerId, Arc<Proposal>>,
    checked: BTreeMap<Digest, Option<Arc<ProposalInfo>>>,
    cache: CandidateCache,
    accepted: BTreeMap<u64, Arc<ProposalSet>>,
    sets: BTreeMap<Digest, Arc<ProposalSet>>,
    prepares: BTreeMap<(u64, Digest), BTreeMap<PlayerId, SignedMessage>>,
    commits: BTreeMap<(u64, Digest), BTreeMap<PlayerId, SignedMessage>>,
    prepared: Option<(u64, Arc<ProposalSet>, Vec<SignedMessage>)>,
    sent_commit: BTreeSet<u64>,
    view_changes: BTreeMap<u64, BTreeMap<PlayerId, Arc<ViewChange>>>,
    led: BTreeSet<u64>,
    decided: Option<(Arc<ProposalSet>, SetOutcome)>,
    announced: bool,
    view_changes_sent: u64,
}

impl WinnerConsensus {
    pub fn new(me: PlayerId, n: u32, quorum: usize, timeout_base: u64) -> Self {
        Self {
            me,
            n: n as u64,
            quorum,
            timeout_base: timeout_base.max(1),
            started: false,
            view: 0,
            timer: 0,
            proposals: BTreeMap::new(),
            checked: BTreeMap::new(),
            cache: CandidateCache::default(),
            accepted: BTreeMap::new(),
            sets: BTreeMap::new(),
            prepares: BTreeMap::new(),
            commits: BTreeMap::new(),
            prepared: None,
            sent_commit: BTreeSet::new(),
            view_changes: BTreeMap::new(),
            led: BTreeSet::new(),
            decided: None,
            announced: false,
            view_changes_sent: 0,
        }
    }

    pub fn started(&self) -> bool {
        self.started
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn view_changes_sent(&self) -> u64 {
        self.view_changes_sent
    }

    pub fn decided(&self) -> Option<&(Arc<ProposalSet>, SetOutcome)> {
        self.decided.as_ref()
    }

    /// True while a running timer may still produce messages.
    pub fn wants_activation(&self) -> bool {
        self.started && self.decided.is_none()
    }

    fn leader(&self, view: u64) -> PlayerId {
        (view % self.n) as PlayerId
    }

    fn timeout(&self) -> u64 {
        self.timeout_base << self.view.min(16)
    }

    pub fn start(&mut self, own: Proposal, env: &WcEnv<'_>) -> Vec<WcMsg> {
        if self.started {
            return Vec::new();
        }
        self.started = true;
        self.timer = 0;
        let mut out = vec![WcMsg::Propose(Arc::new(own))];
        self.evaluate(env, &mut out);
        out
    }

    fn check_proposal(&mut self, p: &Proposal, env: &WcEnv<'_>) -> Option<Arc<ProposalInfo>> {
        let key = *p.signed.tag();
        if let Some(c) = self.checked.get(&key) {
            return c.clone();
        }
        let cache = &mut self.cache;
        let info = (|| {
            if !env.verifier.verify(&p.signed) {
                return None;
            }
            let ev = evidence_digest(&p.evidence, |ct| cache.ciphertext_digest(ct));
            let expected = Writer::new().tag(b"WCP").u32(p.proposer()).raw(&ev).finish();
            if p.signed.payload() != expected {
                return None;
            }
            let mut info = ProposalInfo { candidates: BTreeSet::new(), culprits: BTreeSet::new(), pair: None };
            for e in &p.evidence {
                let list: Vec<ProofOfFraud> = cache.validate(env.verifier, e, env.min_witnesses, env.min_culprits)?;
                info.candidates.insert(e.candidate);
                for pof in &list {
                    info.culprits.insert(pof.culprit());
                    if info.pair.is_none() {
                        info.pair = pof.values();
                    }
                }
            }
            Some(Arc::new(info))
        })();
        self.checked.insert(key, info.clone());
        info
    }

    /// Valid iff every proposal checks out, proposers are distinct and not
    /// named as culprits by the set itself, and there are at least a quorum.
    fn check_set(&mut self, set: &ProposalSet, env: &WcEnv<'_>) -> Option<SetOutcome> {
        let mut out = SetOutcome { candidates: BTreeSet::new(), culprits: BTreeSet::new(), pair: (Vec::new(), Vec::new()) };
        let mut pair = None;
        let mut proposers = BTreeSet::new();
        for p in &set.proposals {
            if !proposers.insert(p.proposer()) {
                return None;
            }
            let info = self.check_proposal(p, env)?;
            out.candidates.extend(info.candidates.iter().copied());
            out.culprits.extend(info.culprits.iter().copied());
            if pair.is_none() {
                pair = info.pair.clone();
            }
        }
        if proposers.iter().filter(|p| !out.culprits.contains(p)).count() < self.quorum || out.candidates.is_empty() {
            return None;
        }
        out.pair = pair?;
        Some(out)
    }

    fn count(&self, votes: Option<&BTreeMap<PlayerId, SignedMessage>>, env: &WcEnv<'_>) -> usize {
        votes.map_or(0, |m| m.keys().filter(|s| !env.culprits.contains(s)).count())
    }

    fn check_view_change(&mut self, vc: &ViewChange, env: &WcEnv<'_>) -> Option<(u64, Option<(u64, Digest)>)> {
        if !env.verifier.verify(&vc.signed) {
            return None;
        }
        let (view, prepared) = parse_vc(vc.signed.payload())?;
        match (prepared, &vc.prepared) {
            (None, None) => {}
            (Some((pv, pd)), Some((set, votes))) => {
                if set.digest() != pd {
                    return None;
                }
                let mut signers = BTreeSet::new();
                for v in votes {
                    if env.verifier.verify(v) && parse_vote(b"WCPR", v.payload()) == Some((pv, pd)) && !env.culprits.contains(&v.signer()) {
                        signers.insert(v.signer());
                    }
                }
                if signers.len() < self.quorum {
                    return None;
                }
                self.check_set(set, env)?;
            }
            _ => return None,
        }
        Some((view, prepared))
    }

    pub fn handle(&mut self, from: PlayerId, msg: &WcMsg, env: &WcEnv<'_>) -> Vec<WcMsg> {
        let mut out = Vec::new();
        if self.decided.is_some() && !matches!(msg, WcMsg::Propose(_)) {
            return out;
        }
        if env.culprits.contains(&from) {
            return out;
        }
        match msg {
            WcMsg::Propose(p) => {
                if p.proposer() == from && self.check_proposal(p, env).is_some() {
                    self.proposals.entry(from).or_insert_with(|| Arc::clone(p));
                }
            }
            WcMsg::PrePrepare { view, set, justification } => {
                self.on_preprepare(from, *view, set, justification, env, &mut out);
            }
            WcMsg::Prepare(s) => {
                if s.signer() == from && env.verifier.verify(s) {
                    if let Some((v, d)) = parse_vote(b"WCPR", s.payload()) {
                        self.prepares.entry((v, d)).or_default().entry(from).or_insert_with(|| s.clone());
                    }
                }
            }
            WcMsg::Commit(s) => {
                if s.signer() == from && env.verifier.verify(s) {
                    if let Some((v, d)) = parse_vote(b"WCCM", s.payload()) {
                        self.commits.entry((v, d)).or_default().entry(from).or_insert_with(|| s.clone());
                    }
                }
            }
            WcMsg::ViewChange(vc) => {
                if vc.signed.signer() == from {
                    if let Some((v, _)) = self.check_view_change(vc, env) {
                        self.view_changes.entry(v).or_default().entry(from).or_insert_with(|| Arc::clone(vc));
                        self.maybe_join(env, &mut out);
                    }
                }
            }
            WcMsg::Decided { set, commits } => {
                let d = set.digest();
                let mut by_view: BTreeMap<u64, BTreeSet<PlayerId>> = BTreeMap::new();
                for c in commits.iter() {
                    if let Some((v, cd)) = parse_vote(b"WCCM", c.payload()) {
                        if cd == d && env.verifier.verify(c) && !env.culprits.contains(&c.signer()) {
                            by_view.entry(v).or_default().insert(c.signer());
                        }
                    }
                }
                if by_view.values().any(|s| s.len() >= self.quorum) {
                    if let Some(outcome) = self.check_set(set, env) {
                        self.decide(Arc::clone(set), outcome, commits.to_vec(), &mut out);
                        return out;
                    }
                }
            }
        }
        self.evaluate(env, &mut out);
        out
    }

    fn on_preprepare(
        &mut self,
        from: PlayerId,
        view: u64,
        set: &Arc<ProposalSet>,
        justification: &[Arc<ViewChange>],
        env: &WcEnv<'_>,
        out: &mut Vec<WcMsg>,
    ) {
        if from != self.leader(view) || view < self.view || self.accepted.contains_key(&view) {
            return;
        }
        let d = set.digest();
        if view > 0 {
            let mut signers = BTreeSet::new();
            let mut highest: Option<(u64, Digest)> = None;
            for vc in justification {
                if let Some((v, prepared)) = self.check_view_change(vc, env) {
                    if v == view && signers.insert(vc.signed.signer()) {
                        if let Some((pv, pd)) = prepared {
                            if highest.is_none_or(|(hv, _)| pv > hv) {
                                highest = Some((pv, pd));
                            }
                        }
                    }
                }
            }
            if signers.len() < self.quorum {
                return;
            }
            if let Some((_, hd)) = highest {
                if hd != d {
                    return;
                }
            }
        }
        if self.check_set(set, env).is_none() {
            return;
        }
        if view > self.view {
            self.enter_view(view, env, out, false);
        }
        self.accepted.insert(view, Arc::clone(set));
        self.sets.insert(d, Arc::clone(set));
        out.push(WcMsg::Prepare(env.signer.sign(vote_payload(b"WCPR", view, &d))));
    }

    fn enter_view(&mut self, view: u64, env: &WcEnv<'_>, out: &mut Vec<WcMsg>, announce: bool) {
        self.view = view;
        self.timer = 0;
        if announce {
            let prepared = self.prepared.as_ref().map(|(v, s, votes)| (*v, Arc::clone(s), votes.clone()));
            let payload = vc_payload(view, prepared.as_ref().map(|(v, s, _)| (*v, s.digest())));
            let vc = ViewChange { signed: env.signer.sign(payload), prepared: prepared.map(|(_, s, votes)| (s, votes)) };
            self.view_changes_sent += 1;
            out.push(WcMsg::ViewChange(Arc::new(vc)));
        }
    }

    /// Move up when enough players already have: more than could all be
    /// faulty among the non-culprits.
    fn maybe_join(&mut self, env: &WcEnv<'_>, out: &mut Vec<WcMsg>) {
        let faulty = (self.n as usize).saturating_sub(self.quorum).saturating_sub(env.culprits.len());
        let mut ahead: BTreeMap<PlayerId, u64> = BTreeMap::new();
        for (&v, senders) in self.view_changes.range(self.view + 1..) {
            for &s in senders.keys() {
                if !env.culprits.contains(&s) {
                    ahead.entry(s).or_insert(v);
                }
            }
        }
        if ahead.len() > faulty {
            let target = *ahead.values().min().expect("non-empty");
            self.enter_view(target, env, out, true);
        }
    }

    fn evaluate(&mut self, env: &WcEnv<'_>, out: &mut Vec<WcMsg>) {
        if self.decided.is_some() {
            return;
        }
        // Commit quorum in any view decides.
        let ready: Vec<(Digest, Vec<SignedMessage>)> = self
            .commits
            .iter()
            .filter(|((_, d), votes)| self.sets.contains_key(d) && self.count(Some(votes), env) >= self.quorum)
            .map(|((_, d), votes)| (*d, votes.values().cloned().collect()))
            .collect();
        if let Some((d, votes)) = ready.into_iter().next() {
            let set = Arc::clone(&self.sets[&d]);
            if let Some(outcome) = self.check_set(&set, env) {
                self.decide(set, outcome, votes, out);
                return;
            }
        }
        let view = self.view;
        if let Some(set) = self.accepted.get(&view).cloned() {
            let d = set.digest();
            if !self.sent_commit.contains(&view) && self.count(self.prepares.get(&(view, d)), env) >= self.quorum {
                let votes: Vec<SignedMessage> = self.prepares[&(view, d)].values().cloned().collect();
                self.prepared = Some((view, set, votes));
                self.sent_commit.insert(view);
                out.push(WcMsg::Commit(env.signer.sign(vote_payload(b"WCCM", view, &d))));
            }
        }
        if self.started && self.leader(view) == self.me && !self.led.contains(&view) {
            self.lead(env, out);
        }
    }

    fn own_set(&mut self, env: &WcEnv<'_>) -> Option<Arc<ProposalSet>> {
        let all: Vec<Arc<Proposal>> = self.proposals.values().cloned().collect();
        let set = ProposalSet::new(all);
        self.check_set(&set, env).map(|_| Arc::new(set))
    }

    fn lead(&mut self, env: &WcEnv<'_>, out: &mut Vec<WcMsg>) {
        let view = self.view;
        let (set, justification) = if view == 0 {
            match self.own_set(env) {
                Some(s) => (s, Vec::new()),
                None => return,
            }
        } else {
            let Some(vcs) = self.view_changes.get(&view) else { return };
            let valid: Vec<Arc<ViewChange>> =
                vcs.iter().filter(|(s, _)| !env.culprits.contains(s)).map(|(_, vc)| Arc::clone(vc)).collect();
            if valid.len() < self.quorum {
                return;
            }
            let highest = valid
                .iter()
                .filter_map(|vc| {
                    let (_, p) = parse_vc(vc.signed.payload())?;
                    let (pv, _) = p?;
                    Some((pv, Arc::clone(&vc.prepared.as_ref()?.0)))
                })
                .max_by_key(|(pv, _)| *pv);
            let set = match highest {
                Some((_, s)) => s,
                None => match self.own_set(env) {
                    Some(s) => s,
                    None => return,
                },
            };
            (set, valid)
        };
        self.led.insert(view);
        out.push(WcMsg::PrePrepare { view, set, justification: Arc::new(justification) });
    }

    fn decide(&mut self, set: Arc<ProposalSet>, outcome: SetOutcome, commits: Vec<SignedMessage>, out: &mut Vec<WcMsg>) {
        self.decided = Some((Arc::clone(&set), outcome));
        if !self.announced {
            self.announced = true;
            out.push(WcMsg::Decided { set, commits: Arc::new(commits) });
        }
    }

    /// Called on every activation of the owning player.
    pub fn tick(&mut self, env: &WcEnv<'_>) -> Vec<WcMsg> {
        let mut out = Vec::new();
        if !self.wants_activation() {
            return out;
        }
        self.timer += 1;
        let leader_exposed = env.culprits.contains(&self.leader(self.view));
        if leader_exposed || self.timer >= self.timeout() {
            let next = self.view + 1;
            self.enter_view(next, env, &mut out, true);
        }
        self.evaluate(env, &mut out);
        out
    }
}
