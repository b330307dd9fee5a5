//! Per-player state machines for every strategy in the library.
//!
//! A player is activated by the scheduler with the messages delivered to it
//! and answers with an outbox. Correct players run the predecision layer,
//! both broadcast groups, key reveal, proof collection and winner consensus.
//! Coalition strategies reuse that machinery and differ only where noted.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::bftcr::{
    beacon_draw, commitment_pad, parse_rb1, parse_rb2, punish_reward_resolve, rb1_payload, rb2_payload,
    verify_pof_list, CandidateCache, BftcrDecision, CommitmentPayload, ProofOfBaiting,
};
use crate::crypto::{
    decrypt, digest, encrypt, pof_build, Digest, Key, Keyring, ProofOfFraud, SignedMessage, Signer, Verifier,
};
use crate::msg::{ColludeBundle, Dest, InstanceId, Msg, RbWire};
use crate::predecision::{extract_pofs, vote, Certificate, VoteCollector, ROUND};
use crate::rb::{RbAction, RbInstance, RbThresholds};
use crate::strategy::{CoalitionPlan, StrategyKind};
use crate::wc::{Proposal, WcEnv, WinnerConsensus};
use crate::PlayerId;

/// Things the simulator watches for: milestones, heal triggers, and
/// measurements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Predecided(Vec<u8>),
    /// First broadcast started; lists the values whose hash was committed
    /// (two for an equivocating source, none for a proof list).
    Committed { hashes: Vec<Vec<u8>>, pofs: bool },
    PofsAssembled(usize),
    Revealed { pofs: bool },
    CandidateValidated(PlayerId),
    WinnerConsensusStarted,
    Decided(BftcrDecision),
}

#[derive(Debug, Clone)]
pub struct PlayerConfig {
    pub id: PlayerId,
    pub n: u32,
    pub t0: u32,
    /// Winner consensus quorum, `n - k - t`.
    pub wc_quorum: usize,
    pub wc_timeout: u64,
    pub strategy: StrategyKind,
    pub rational: bool,
    pub input: Vec<u8>,
    pub key_seed: u64,
    /// Mutation knob: a baiter reveals right after committing.
    pub early_reveal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Mode {
    Agreement(Vec<u8>),
    Disagreement,
}

pub struct Player {
    cfg: PlayerConfig,
    plan: Option<Arc<CoalitionPlan>>,
    verifier: Verifier,
    signer: Signer,
    key: Key,
    pad: usize,
    quorum: usize,
    started: bool,

    collector: VoteCollector,
    votes_by_value: BTreeMap<Vec<u8>, BTreeMap<PlayerId, SignedMessage>>,
    /// A colluder's own conflicting votes, so a baiter can always name itself.
    own_votes: Option<(SignedMessage, SignedMessage)>,
    predecision: Option<Arc<Certificate>>,
    certs: BTreeMap<Vec<u8>, Arc<Certificate>>,
    first_cert: Option<Arc<Certificate>>,
    cert_from: BTreeMap<PlayerId, Vec<u8>>,
    mode: Option<Mode>,

    /// Indexed by [`Player::slot`].
    rb: Vec<Option<RbInstance<Arc<SignedMessage>>>>,
    candidates: CandidateCache,
    /// Broadcast payloads already verified, keyed by signature tag.
    verified: RefCell<BTreeMap<Digest, Arc<SignedMessage>>>,
    honest_sources: BTreeSet<InstanceId>,
    rb1_started: bool,
    rb2_started: bool,
    own_digests: Vec<Digest>,
    own_pofs: bool,
    enc: BTreeMap<PlayerId, Arc<Vec<u8>>>,
    lists: BTreeMap<PlayerId, (Vec<Digest>, Arc<SignedMessage>)>,
    keys: BTreeMap<PlayerId, Vec<Key>>,
    forwarded: BTreeSet<(PlayerId, [u8; 32])>,
    revealed: bool,
    decrypted: BTreeMap<PlayerId, CommitmentPayload>,
    hashes: BTreeMap<Digest, usize>,
    local_hash: Option<Digest>,
    culprits: BTreeSet<PlayerId>,
    pof_received: Option<Vec<ProofOfFraud>>,
    evidence: BTreeMap<PlayerId, ProofOfBaiting>,
    pending_candidates: BTreeSet<PlayerId>,
    wc: WinnerConsensus,
    decision: Option<BftcrDecision>,

    outbox: Vec<(Dest, Msg)>,
    events: Vec<Event>,
}

impl Player {
    pub fn new(cfg: PlayerConfig, plan: Option<Arc<CoalitionPlan>>, keyring: &Arc<Keyring>) -> Self {
        let quorum = (cfg.n - cfg.t0) as usize;
        Self {
            verifier: keyring.verifier(),
            signer: keyring.signer(cfg.id),
            key: Key::derive(cfg.key_seed, cfg.id),
            pad: commitment_pad(cfg.n),
            quorum,
            started: false,
            collector: VoteCollector::new(ROUND, quorum),
            votes_by_value: BTreeMap::new(),
            own_votes: None,
            predecision: None,
            certs: BTreeMap::new(),
            first_cert: None,
            cert_from: BTreeMap::new(),
            mode: None,
            rb: (0..2 * cfg.n).map(|_| None).collect(),
            verified: RefCell::new(BTreeMap::new()),
            candidates: CandidateCache::default(),
            honest_sources: BTreeSet::new(),
            rb1_started: false,
            rb2_started: false,
            own_digests: Vec::new(),
            own_pofs: false,
            enc: BTreeMap::new(),
            lists: BTreeMap::new(),
            keys: BTreeMap::new(),
            forwarded: BTreeSet::new(),
            revealed: false,
            decrypted: BTreeMap::new(),
            hashes: BTreeMap::new(),
            local_hash: None,
            culprits: BTreeSet::new(),
            pof_received: None,
            evidence: BTreeMap::new(),
            pending_candidates: BTreeSet::new(),
            wc: WinnerConsensus::new(cfg.id, cfg.n, cfg.wc_quorum, cfg.wc_timeout),
            decision: None,
            outbox: Vec::new(),
            events: Vec::new(),
            plan,
            cfg,
        }
    }

    pub fn id(&self) -> PlayerId {
        self.cfg.id
    }

    pub fn strategy(&self) -> StrategyKind {
        self.cfg.strategy
    }

    pub fn decision(&self) -> Option<&BftcrDecision> {
        self.decision.as_ref()
    }

    pub fn predecision(&self) -> Option<&[u8]> {
        self.predecision.as_ref().map(|c| c.value())
    }

    pub fn has_revealed(&self) -> bool {
        self.revealed
    }

    pub fn valid_candidates(&self) -> impl Iterator<Item = PlayerId> + '_ {
        self.evidence.keys().copied()
    }

    pub fn culprits(&self) -> &BTreeSet<PlayerId> {
        &self.culprits
    }

    /// True while the player would act even without deliveries.
    pub fn wants_activation(&self) -> bool {
        (!self.started && self.cfg.strategy != StrategyKind::Silent) || self.wc.wants_activation()
    }

    pub fn wc_view_changes(&self) -> u64 {
        self.wc.view_changes_sent()
    }

    fn is_correct(&self) -> bool {
        self.cfg.strategy == StrategyKind::Correct
    }

    fn colluding(&self) -> bool {
        self.cfg.strategy.colludes() && self.plan.is_some()
    }

    fn send(&mut self, dest: Dest, msg: Msg) {
        self.outbox.push((dest, msg));
    }

    /// One scheduler activation. Returns the outbox and the events raised.
    pub fn activate(&mut self, delivered: Vec<(PlayerId, Msg)>) -> (Vec<(Dest, Msg)>, Vec<Event>) {
        if self.cfg.strategy != StrategyKind::Silent {
            if !self.started {
                self.started = true;
                self.on_start();
            }
            for (from, msg) in delivered {
                self.handle(from, msg);
            }
            self.progress();
            if self.is_correct() && self.wc.wants_activation() {
                let env = WcEnv {
                    verifier: &self.verifier,
                    signer: &self.signer,
                    culprits: &self.culprits,
                    min_witnesses: self.cfg.t0 as usize + 1,
                    min_culprits: self.cfg.t0 as usize + 1,
                };
                let out = self.wc.tick(&env);
                for m in out {
                    self.send(Dest::All, Msg::Wc(m));
                }
                self.check_wc_decision();
            }
        }
        (std::mem::take(&mut self.outbox), std::mem::take(&mut self.events))
    }

    fn on_start(&mut self) {
        if self.colluding() {
            let plan = Arc::clone(self.plan.as_ref().expect("colluding implies plan"));
            let va = vote(&self.signer, &plan.value_a);
            let vb = vote(&self.signer, &plan.value_b);
            self.own_votes = Some((va.clone(), vb.clone()));
            let (to_a, to_b): (Vec<PlayerId>, Vec<PlayerId>) = (0..self.cfg.n).partition(|&p| !plan.in_b(p));
            let colluders: Vec<PlayerId> = plan.members.iter().copied().filter(|&p| plan.colludes(p)).collect();
            let to_b: Vec<PlayerId> = to_b.into_iter().chain(colluders).collect();
            self.send(Dest::Many(to_a.into()), Msg::Vote(va));
            self.send(Dest::Many(to_b.into()), Msg::Vote(vb));
        } else {
            let v = vote(&self.signer, &self.cfg.input);
            self.send(Dest::All, Msg::Vote(v));
        }
    }

    fn handle(&mut self, from: PlayerId, msg: Msg) {
        match msg {
            Msg::Vote(v) => self.on_vote(from, v),
            Msg::Cert(c) => self.on_cert(from, c),
            Msg::Rb(inst, wire) => self.on_rb(from, inst, wire),
            Msg::Key { owner, key } => self.on_key(owner, key),
            Msg::Wc(w) => {
                if self.is_correct() {
                    let env = WcEnv {
                        verifier: &self.verifier,
                        signer: &self.signer,
                        culprits: &self.culprits,
                        min_witnesses: self.cfg.t0 as usize + 1,
                        min_culprits: self.cfg.t0 as usize + 1,
                    };
                    let out = self.wc.handle(from, &w, &env);
                    for m in out {
                        self.send(Dest::All, Msg::Wc(m));
                    }
                    self.check_wc_decision();
                }
            }
            Msg::Collude(b) => self.on_collude(from, &b),
        }
    }

    // ---- predecision ----

    fn on_vote(&mut self, from: PlayerId, v: SignedMessage) {
        if v.signer() != from {
            return;
        }
        if self.colluding() {
            let Some((_, value)) = crate::crypto::parse_vote(v.payload()) else { return };
            if value.is_empty() || !self.verifier.verify(&v) {
                return;
            }
            let value = value.to_vec();
            let entry = self.votes_by_value.entry(value.clone()).or_default();
            entry.entry(from).or_insert(v);
            if entry.len() >= self.quorum && !self.certs.contains_key(&value) {
                let votes: Vec<SignedMessage> = entry.values().take(self.quorum).cloned().collect();
                self.certs.insert(value.clone(), Arc::new(Certificate::new(ROUND, value, votes)));
            }
        } else if self.predecision.is_none() {
            if let Some(cert) = self.collector.add(&self.verifier, &v) {
                self.predecide(Arc::new(cert));
            } else {
                self.maybe_adopt();
            }
        }
    }

    /// A foreign certificate is adopted when it matches the own input, or
    /// once more than t0 signers voted otherwise so the input can no longer
    /// be certified.
    fn maybe_adopt(&mut self) {
        if self.predecision.is_some() {
            return;
        }
        let Some(cert) = self.first_cert.clone() else { return };
        let input = &self.cfg.input;
        let matching = self.certs.get(input).cloned();
        if let Some(c) = matching {
            self.predecide(c);
        } else if self.collector.count_other(input) > self.cfg.t0 as usize {
            self.predecide(cert);
        }
    }

    fn on_cert(&mut self, from: PlayerId, cert: Arc<Certificate>) {
        if cert.verify(&self.verifier, self.quorum).is_err() {
            return;
        }
        self.cert_from.entry(from).or_insert_with(|| cert.value().to_vec());
        self.certs.entry(cert.value().to_vec()).or_insert_with(|| Arc::clone(&cert));
        self.first_cert.get_or_insert(cert);
        if !self.colluding() {
            self.maybe_adopt();
        }
    }

    fn predecide(&mut self, cert: Arc<Certificate>) {
        let value = cert.value().to_vec();
        self.predecision = Some(Arc::clone(&cert));
        self.events.push(Event::Predecided(value.clone()));
        self.send(Dest::All, Msg::Cert(cert));
        let d = digest(&value);
        self.local_hash = Some(d);
        self.commit_plain(CommitmentPayload::Hash(d), vec![value]);
    }

    /// Coalition members learn the outcome of the predecision layer from the
    /// certificates every outsider broadcasts.
    fn update_mode(&mut self) {
        if self.mode.is_some() {
            return;
        }
        let Some(plan) = &self.plan else { return };
        let outsiders = plan.outsiders();
        if !outsiders.iter().all(|p| self.cert_from.contains_key(p)) {
            return;
        }
        let values: BTreeSet<&Vec<u8>> = outsiders.iter().map(|p| &self.cert_from[p]).collect();
        self.mode = Some(if values.len() > 1 {
            Mode::Disagreement
        } else {
            Mode::Agreement(values.into_iter().next().cloned().unwrap_or_default())
        });
    }

    // ---- commitments ----

    fn start_rb1(&mut self) -> bool {
        let me = self.cfg.id;
        if self.instance(InstanceId::Rb1(me)).start(me).is_err() {
            return false;
        }
        self.rb1_started = true;
        true
    }

    fn commit_plain(&mut self, payload: CommitmentPayload, hashed: Vec<Vec<u8>>) {
        if self.rb1_started {
            return;
        }
        let pofs = payload.is_pofs();
        let ct = encrypt(&payload.encode(), &self.key, self.pad).expect("commitment fits the pad");
        self.own_digests = vec![digest(&ct)];
        let signed = Arc::new(self.signer.sign(rb1_payload(self.cfg.id, &ct)));
        if !self.start_rb1() {
            return;
        }
        self.own_pofs = pofs;
        self.honest_sources.insert(InstanceId::Rb1(self.cfg.id));
        self.events.push(Event::Committed { hashes: hashed, pofs });
        self.send(Dest::All, Msg::Rb(InstanceId::Rb1(self.cfg.id), RbWire::Send(signed)));
    }

    /// One ciphertext per side under the same key.
    fn commit_split(&mut self, plan: &CoalitionPlan) {
        if self.rb1_started {
            return;
        }
        let seal = |value: &[u8], me: &Self| {
            let ct = encrypt(&CommitmentPayload::Hash(digest(value)).encode(), &me.key, me.pad).expect("fits");
            (digest(&ct), Arc::new(me.signer.sign(rb1_payload(me.cfg.id, &ct))))
        };
        let (da, sa) = seal(&plan.value_a, self);
        let (db, sb) = seal(&plan.value_b, self);
        if !self.start_rb1() {
            return;
        }
        self.own_digests = vec![da, db];
        self.events.push(Event::Committed { hashes: vec![plan.value_a.clone(), plan.value_b.clone()], pofs: false });
        let id = InstanceId::Rb1(self.cfg.id);
        let bundle = Arc::new(ColludeBundle { source: self.cfg.id, for_a: Arc::clone(&sa), for_b: Arc::clone(&sb) });
        let mut to_a = Vec::new();
        let mut to_b = Vec::new();
        let mut to_c = Vec::new();
        for p in 0..self.cfg.n {
            if plan.colludes(p) {
                to_c.push(p);
            } else if plan.in_b(p) {
                to_b.push(p);
            } else {
                to_a.push(p);
            }
        }
        self.send(Dest::Many(to_a.into()), Msg::Rb(id, RbWire::Send(sa)));
        self.send(Dest::Many(to_b.into()), Msg::Rb(id, RbWire::Send(sb)));
        self.send(Dest::Many(to_c.into()), Msg::Collude(bundle));
    }

    fn pofs_from_certs(&self) -> Option<Vec<ProofOfFraud>> {
        let mut it = self.certs.values();
        let (a, b) = (it.next()?, it.next()?);
        let pofs = extract_pofs(&self.verifier, self.quorum, a, b).ok()?;
        Some(self.with_own_pof(pofs)).filter(|p| p.len() > self.cfg.t0 as usize)
    }

    fn with_own_pof(&self, mut pofs: Vec<ProofOfFraud>) -> Vec<ProofOfFraud> {
        if pofs.iter().all(|p| p.culprit() != self.cfg.id) {
            if let Some((va, vb)) = &self.own_votes {
                if let Ok(own) = pof_build(&self.verifier, va, vb) {
                    pofs.push(own);
                }
            }
        }
        pofs
    }

    /// Strategy-specific commitment logic, run after every activation.
    fn coalition_commit(&mut self) {
        if self.rb1_started || !self.colluding() {
            return;
        }
        self.update_mode();
        let plan = Arc::clone(self.plan.as_ref().expect("colluding"));
        match self.cfg.strategy {
            StrategyKind::Bait => {
                if let Some(pofs) = self.pofs_from_certs() {
                    self.events.push(Event::PofsAssembled(pofs.len()));
                    self.commit_plain(CommitmentPayload::Pofs(pofs), Vec::new());
                    if self.cfg.early_reveal {
                        self.reveal();
                    }
                } else if let Some(Mode::Agreement(v)) = self.mode.clone() {
                    self.commit_agreed(v);
                }
            }
            StrategyKind::Disagree => match self.mode.clone() {
                Some(Mode::Disagreement) => self.commit_split(&plan),
                Some(Mode::Agreement(v)) => {
                    if self.cfg.rational {
                        self.commit_agreed(v);
                    } else {
                        let other = if v == plan.value_a { plan.value_b.clone() } else { plan.value_a.clone() };
                        self.commit_plain(CommitmentPayload::Hash(digest(&other)), vec![other]);
                    }
                }
                None => {}
            },
            StrategyKind::LateBait => match self.mode.clone() {
                Some(Mode::Disagreement) => {
                    if let Some(seen) = self.pof_received.clone() {
                        let pofs = self.pofs_from_certs().unwrap_or_else(|| self.with_own_pof(seen));
                        self.events.push(Event::PofsAssembled(pofs.len()));
                        self.commit_plain(CommitmentPayload::Pofs(pofs), Vec::new());
                    }
                }
                Some(Mode::Agreement(v)) => self.commit_agreed(v),
                None => {}
            },
            StrategyKind::Correct | StrategyKind::Silent => {}
        }
    }

    fn commit_agreed(&mut self, v: Vec<u8>) {
        self.local_hash = Some(digest(&v));
        self.commit_plain(CommitmentPayload::Hash(digest(&v)), vec![v]);
    }

    // ---- reliable broadcast ----

    fn slot(&self, id: InstanceId) -> usize {
        match id {
            InstanceId::Rb1(s) => s as usize,
            InstanceId::Rb2(s) => (self.cfg.n + s) as usize,
        }
    }

    fn instance(&mut self, id: InstanceId) -> &mut RbInstance<Arc<SignedMessage>> {
        let th = RbThresholds::standard(self.cfg.n);
        let slot = self.slot(id);
        self.rb[slot].get_or_insert_with(|| RbInstance::new(id.source(), th))
    }

    fn validator(&self, id: InstanceId) -> impl Fn(&Arc<SignedMessage>) -> Option<Digest> + '_ {
        move |s: &Arc<SignedMessage>| {
            if s.signer() != id.source() {
                return None;
            }
            let ok = match id {
                InstanceId::Rb1(src) => parse_rb1(s.payload()).is_some_and(|(p, _)| p == src),
                InstanceId::Rb2(src) => parse_rb2(s.payload()).is_some_and(|(p, _)| p == src),
            };
            if !ok {
                return None;
            }
            let tag = *s.tag();
            if let Some(known) = self.verified.borrow().get(&tag) {
                return (Arc::ptr_eq(known, s) || known == s).then_some(tag);
            }
            if !self.verifier.verify(s) {
                return None;
            }
            self.verified.borrow_mut().insert(tag, Arc::clone(s));
            Some(tag)
        }
    }

    fn on_rb(&mut self, from: PlayerId, id: InstanceId, wire: RbWire) {
        if id.source() >= self.cfg.n {
            return;
        }
        self.instance(id);
        let slot = self.slot(id);
        let mut inst = self.rb[slot].take().expect("just inserted");
        let mut honest = false;
        let actions = {
            let validate = self.validator(id);
            match wire {
                RbWire::Send(s) => {
                    let acts = inst.on_send(from, s, &validate);
                    honest = !acts.is_empty();
                    acts
                }
                RbWire::Echo(d, s) => inst.on_echo(from, d, s, &validate),
                RbWire::Ready(d) => inst.on_ready(from, d),
            }
        };
        if honest {
            self.honest_sources.insert(id);
        }
        self.rb[slot] = Some(inst);
        self.apply_rb(id, actions);
    }

    /// Coalition members stay quiet on instances of colluding sources that
    /// did not broadcast plainly; those are driven by bundles instead.
    fn suppress_rb_output(&self, id: InstanceId) -> bool {
        self.colluding()
            && id.source() != self.cfg.id
            && self.plan.as_ref().is_some_and(|p| p.colludes(id.source()))
            && !self.honest_sources.contains(&id)
    }

    fn apply_rb(&mut self, id: InstanceId, actions: Vec<RbAction<Arc<SignedMessage>>>) {
        let quiet = self.suppress_rb_output(id);
        for a in actions {
            match a {
                RbAction::Echo(d, p) if !quiet => self.send(Dest::All, Msg::Rb(id, RbWire::Echo(d, p))),
                RbAction::Ready(d) if !quiet => self.send(Dest::All, Msg::Rb(id, RbWire::Ready(d))),
                RbAction::Deliver(p) => self.on_deliver(id, p),
                _ => {}
            }
        }
    }

    fn on_collude(&mut self, from: PlayerId, b: &ColludeBundle) {
        let Some(plan) = self.plan.clone() else { return };
        if !self.colluding() || b.source != from || !plan.colludes(from) {
            return;
        }
        let id = InstanceId::Rb1(from);
        let (da, db) = (*b.for_a.tag(), *b.for_b.tag());
        let mut to_b = Vec::new();
        let mut rest = Vec::new();
        for p in 0..self.cfg.n {
            if plan.in_b(p) {
                to_b.push(p);
            } else {
                rest.push(p);
            }
        }
        let (to_b, rest): (Arc<[PlayerId]>, Arc<[PlayerId]>) = (to_b.into(), rest.into());
        self.send(Dest::Many(Arc::clone(&rest)), Msg::Rb(id, RbWire::Echo(da, Arc::clone(&b.for_a))));
        self.send(Dest::Many(rest), Msg::Rb(id, RbWire::Ready(da)));
        self.send(Dest::Many(Arc::clone(&to_b)), Msg::Rb(id, RbWire::Echo(db, Arc::clone(&b.for_b))));
        self.send(Dest::Many(to_b), Msg::Rb(id, RbWire::Ready(db)));
    }

    fn on_deliver(&mut self, id: InstanceId, signed: Arc<SignedMessage>) {
        match id {
            InstanceId::Rb1(src) => {
                let Some((_, ct)) = parse_rb1(signed.payload()) else { return };
                self.enc.entry(src).or_insert_with(|| Arc::new(ct.to_vec()));
                if !self.rb2_started && self.enc.len() >= self.quorum {
                    self.start_rb2();
                }
            }
            InstanceId::Rb2(src) => {
                let Some((_, list)) = parse_rb2(signed.payload()) else { return };
                self.lists.entry(src).or_insert((list, signed));
                let pending: Vec<PlayerId> = self.pending_candidates.iter().copied().collect();
                for j in pending {
                    self.try_candidate(j);
                }
            }
        }
        self.process_owner(id.source());
    }

    fn start_rb2(&mut self) {
        let enc: Vec<Arc<Vec<u8>>> = self.enc.values().cloned().collect();
        let digests: Vec<Digest> = enc.iter().map(|ct| self.candidates.ciphertext_digest(ct)).collect();
        let signed = Arc::new(self.signer.sign(rb2_payload(self.cfg.id, &digests)));
        let id = InstanceId::Rb2(self.cfg.id);
        let me = self.cfg.id;
        if self.instance(id).start(me).is_err() {
            return;
        }
        self.rb2_started = true;
        self.honest_sources.insert(id);
        self.send(Dest::All, Msg::Rb(id, RbWire::Send(signed)));
    }

    // ---- reveal ----

    fn self_witnesses(&self) -> usize {
        self.lists.values().filter(|(l, _)| l.iter().any(|d| self.own_digests.contains(d))).count()
    }

    fn maybe_reveal(&mut self) {
        if self.revealed || !self.rb1_started {
            return;
        }
        if self.lists.len() < self.quorum || self.enc.len() < self.quorum {
            return;
        }
        if self.cfg.strategy == StrategyKind::Bait && self.own_pofs && self.self_witnesses() <= self.cfg.t0 as usize {
            return;
        }
        self.reveal();
    }

    fn reveal(&mut self) {
        if self.revealed {
            return;
        }
        self.revealed = true;
        self.events.push(Event::Revealed { pofs: self.own_pofs });
        let key = self.key;
        self.forwarded.insert((self.cfg.id, key.0));
        self.send(Dest::All, Msg::Key { owner: self.cfg.id, key });
    }

    fn on_key(&mut self, owner: PlayerId, key: Key) {
        if owner >= self.cfg.n {
            return;
        }
        let ks = self.keys.entry(owner).or_default();
        if !ks.contains(&key) {
            ks.push(key);
        }
        if self.is_correct() && self.forwarded.insert((owner, key.0)) {
            self.send(Dest::All, Msg::Key { owner, key });
        }
        self.process_owner(owner);
    }

    fn process_owner(&mut self, j: PlayerId) {
        if self.decrypted.contains_key(&j) || !self.lists.contains_key(&j) {
            return;
        }
        let Some(ct) = self.enc.get(&j).cloned() else { return };
        let Some(keys) = self.keys.get(&j) else { return };
        let Some(payload) = keys
            .iter()
            .find_map(|k| decrypt(&ct, k).ok())
            .and_then(|plain| CommitmentPayload::decode(&plain).ok())
        else {
            return;
        };
        self.decrypted.insert(j, payload.clone());
        match payload {
            CommitmentPayload::Hash(d) => {
                let c = self.hashes.entry(d).or_insert(0);
                *c += 1;
                if *c >= self.quorum && self.local_hash == Some(d) && self.decision.is_none() && self.is_correct() {
                    if let Some(cert) = &self.predecision {
                        self.decide(BftcrDecision::ValueDecided { value: cert.value().to_vec() });
                    }
                }
            }
            CommitmentPayload::Pofs(list) => {
                if let Ok(culprits) = verify_pof_list(&self.verifier, &list, self.cfg.t0 as usize + 1) {
                    self.culprits.extend(culprits);
                    if self.pof_received.is_none() {
                        self.pof_received = Some(list);
                    }
                    self.try_candidate(j);
                }
            }
        }
    }

    fn try_candidate(&mut self, j: PlayerId) {
        if self.evidence.contains_key(&j) {
            return;
        }
        let (Some(ct), Some(keys)) = (self.enc.get(&j), self.keys.get(&j)) else { return };
        let ct_digest = self.candidates.ciphertext_digest(ct);
        let witnesses: Vec<Arc<SignedMessage>> =
            self.lists.values().filter(|(l, _)| l.contains(&ct_digest)).map(|(_, s)| Arc::clone(s)).collect();
        let min = self.cfg.t0 as usize + 1;
        for key in keys {
            let pob = ProofOfBaiting { candidate: j, key: *key, ciphertext: Arc::clone(ct), witnesses: witnesses.clone() };
            if self.candidates.validate(&self.verifier, &pob, min, min).is_some() {
                self.evidence.insert(j, pob);
                self.pending_candidates.remove(&j);
                self.events.push(Event::CandidateValidated(j));
                return;
            }
        }
        self.pending_candidates.insert(j);
    }

    // ---- winner consensus ----

    fn maybe_start_wc(&mut self) {
        if !self.is_correct() || self.wc.started() || self.pof_received.is_none() || self.evidence.is_empty() {
            return;
        }
        let clean = self.decrypted.keys().filter(|p| !self.culprits.contains(p)).count();
        if clean <= self.cfg.t0 as usize {
            return;
        }
        let proposal = Proposal::new(&self.signer, self.evidence.values().cloned().collect());
        let env = WcEnv {
            verifier: &self.verifier,
            signer: &self.signer,
            culprits: &self.culprits,
            min_witnesses: self.cfg.t0 as usize + 1,
            min_culprits: self.cfg.t0 as usize + 1,
        };
        let out = self.wc.start(proposal, &env);
        self.events.push(Event::WinnerConsensusStarted);
        for m in out {
            self.send(Dest::All, Msg::Wc(m));
        }
        self.check_wc_decision();
    }

    fn check_wc_decision(&mut self) {
        if self.decision.is_some() {
            return;
        }
        let Some((set, outcome)) = self.wc.decided() else { return };
        let winner = beacon_draw(&set.digest(), &outcome.candidates);
        let pair = (outcome.pair.0.as_slice(), outcome.pair.1.as_slice());
        if let Ok(d) = punish_reward_resolve(winner, &outcome.culprits, &outcome.candidates, pair) {
            self.decide(d);
        }
    }

    fn decide(&mut self, d: BftcrDecision) {
        self.decision = Some(d.clone());
        self.events.push(Event::Decided(d));
    }

    fn progress(&mut self) {
        self.coalition_commit();
        self.maybe_reveal();
        self.maybe_start_wc();
    }
}
