//! Runs one seeded execution: builds players, drives the scheduler, records
//! the trace and milestones, and collects decisions.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bftcr::BftcrDecision;
use crate::crypto::{digest_parts, Keyring};
use crate::msg::{Dest, Msg};
use crate::net::{Network, PartitionSpec, PolicyKind, SchedulePolicy};
use crate::params::compute_t0;
use crate::player::{Event, Player, PlayerConfig};
use crate::strategy::{CoalitionPlan, StrategyKind, VALUE_A};
use crate::PlayerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Baiters reveal immediately after committing.
    EarlyReveal,
    /// The partition policy never lifts isolation.
    NeverHeal,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: u32,
    pub k: u32,
    pub t: u32,
    pub plan: Option<Arc<CoalitionPlan>>,
    pub policy: PolicyKind,
    pub seed: u64,
    /// Defaults to `4n`.
    pub delta: Option<u64>,
    /// Isolation ends by this step at the latest; defaults to `50 n delta`.
    pub partition_cap: Option<u64>,
    pub step_ceiling: u64,
    pub wc_timeout: u64,
    pub record_trace: bool,
    pub mutation: Mutation,
}

impl SimConfig {
    pub fn new(n: u32, k: u32, t: u32, plan: Option<CoalitionPlan>, policy: PolicyKind, seed: u64) -> Self {
        Self {
            n,
            k,
            t,
            plan: plan.map(Arc::new),
            policy,
            seed,
            delta: None,
            partition_cap: None,
            step_ceiling: 400_000,
            wc_timeout: 32,
            record_trace: false,
            mutation: Mutation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Milestone {
    pub index: u8,
    pub name: String,
    pub step: u64,
    pub player: PlayerId,
}

impl Milestone {
    pub fn line(&self) -> String {
        format!("{} {} step={} player={}", self.index, self.name, self.step, self.player)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub steps: u64,
    /// Every player outside the coalition decided.
    pub terminated: bool,
    pub decisions: Vec<Option<BftcrDecision>>,
    pub predecisions: Vec<Option<Vec<u8>>>,
    /// Union of candidates validated by any player outside the coalition.
    pub valid_candidates: BTreeSet<PlayerId>,
    pub milestones: Vec<Milestone>,
    pub trace: Vec<String>,
    pub late_deliveries: usize,
    pub healed_at: Option<u64>,
    pub messages: u64,
}

struct MilestoneTracker {
    predecided: BTreeSet<Vec<u8>>,
    hash_values: BTreeSet<Vec<u8>>,
    out: Vec<Milestone>,
}

impl MilestoneTracker {
    fn note(&mut self, index: u8, name: &str, step: u64, player: PlayerId) {
        if !self.out.iter().any(|m| m.name == name) {
            self.out.push(Milestone { index, name: name.to_string(), step, player });
        }
    }

    fn observe(&mut self, step: u64, player: PlayerId, outsider: bool, strategy: StrategyKind, ev: &Event) {
        let baiter = strategy == StrategyKind::Bait;
        match ev {
            Event::Predecided(v) if outsider => {
                self.predecided.insert(v.clone());
                if self.predecided.len() > 1 {
                    self.note(1, "disagreement", step, player);
                }
            }
            Event::Committed { hashes, pofs } => {
                self.hash_values.extend(hashes.iter().cloned());
                if self.hash_values.len() > 1 {
                    self.note(2, "blocked", step, player);
                }
                if *pofs && baiter {
                    self.note(4, "commit", step, player);
                }
            }
            Event::PofsAssembled(_) if baiter => self.note(3, "pofs", step, player),
            Event::Revealed { pofs: true } if baiter => self.note(5, "reveal", step, player),
            Event::Decided(d) if outsider && d.is_resolved() => self.note(5, "resolve", step, player),
            _ => {}
        }
    }
}

fn describe(outbox: &[(Dest, Msg)], events: &[Event]) -> String {
    let mut s = String::new();
    for (dest, msg) in outbox {
        if !s.is_empty() {
            s.push(',');
        }
        let _ = match dest {
            Dest::All => write!(s, "{}@all", msg.tag()),
            Dest::One(p) => write!(s, "{}@p{}", msg.tag(), p),
            Dest::Many(ps) => write!(s, "{}@{}", msg.tag(), ps.len()),
        };
    }
    for ev in events {
        let _ = match ev {
            Event::Predecided(v) => write!(s, ";predecide={}", String::from_utf8_lossy(v)),
            Event::Committed { hashes, pofs: true } if hashes.is_empty() => write!(s, ";commit=pofs"),
            Event::Committed { hashes, .. } => {
                let vs: Vec<String> = hashes.iter().map(|v| String::from_utf8_lossy(v).into_owned()).collect();
                write!(s, ";commit=hash({})", vs.join("|"))
            }
            Event::PofsAssembled(c) => write!(s, ";pofs={c}"),
            Event::Revealed { pofs } => write!(s, ";reveal{}", if *pofs { "=pofs" } else { "" }),
            Event::CandidateValidated(c) => write!(s, ";candidate=p{c}"),
            Event::WinnerConsensusStarted => write!(s, ";wc"),
            Event::Decided(BftcrDecision::ValueDecided { value }) => {
                write!(s, ";decide={}", String::from_utf8_lossy(value))
            }
            Event::Decided(BftcrDecision::Resolved { value, winner, punished }) => write!(
                s,
                ";resolve={} winner=p{} punished={:?}",
                String::from_utf8_lossy(value),
                winner,
                punished
            ),
        };
    }
    if s.is_empty() {
        s.push('-');
    }
    s
}

pub fn run(cfg: &SimConfig) -> RunResult {
    let n = cfg.n;
    let t0 = compute_t0(n).expect("n >= 1");
    let plan = cfg.plan.clone();
    let keyring = Keyring::from_seed(n, cfg.seed);
    let key_seed = u64::from_le_bytes(digest_parts(&[b"keys", &cfg.seed.to_le_bytes()])[..8].try_into().unwrap());
    let mut policy = SchedulePolicy::new(cfg.policy, cfg.seed, n);
    if let Some(d) = cfg.delta {
        policy.delta = d;
    }
    if cfg.policy == PolicyKind::PartitionAdversarial {
        if let Some(p) = &plan {
            let cap = match cfg.mutation {
                Mutation::NeverHeal => u64::MAX,
                _ => cfg.partition_cap.unwrap_or(50 * n as u64 * policy.delta),
            };
            policy.partition = Some(PartitionSpec { a: p.a.clone(), b: p.b.clone(), cap });
        }
    }
    let mut net: Network<Msg> = Network::new(n, &policy);
    let wc_quorum = (n - cfg.k - cfg.t) as usize;
    let strategy_of = |p: PlayerId| plan.as_ref().map_or(StrategyKind::Correct, |pl| pl.strategy_of(p));
    let outsider = |p: PlayerId| plan.as_ref().is_none_or(|pl| !pl.is_member(p));
    let mut players: Vec<Player> = (0..n)
        .map(|id| {
            let pc = PlayerConfig {
                id,
                n,
                t0,
                wc_quorum,
                wc_timeout: cfg.wc_timeout,
                strategy: strategy_of(id),
                rational: plan.as_ref().is_some_and(|pl| pl.is_rational(id)),
                input: plan.as_ref().map_or(VALUE_A.to_vec(), |pl| pl.input_of(id).to_vec()),
                key_seed,
                early_reveal: cfg.mutation == Mutation::EarlyReveal,
            };
            Player::new(pc, plan.clone(), &keyring)
        })
        .collect();
    let outsiders: Vec<PlayerId> = (0..n).filter(|&p| outsider(p)).collect();
    let heal_watch: Vec<PlayerId> = plan.as_ref().map_or(Vec::new(), |pl| {
        pl.members.iter().copied().filter(|&m| matches!(pl.strategy_of(m), StrategyKind::Disagree | StrategyKind::Bait)).collect()
    });

    let mut tracker = MilestoneTracker { predecided: BTreeSet::new(), hash_values: BTreeSet::new(), out: Vec::new() };
    let mut trace = Vec::new();
    let mut valid_candidates = BTreeSet::new();
    let mut messages = 0u64;
    let mut terminated = false;

    while net.step() < cfg.step_ceiling {
        if outsiders.iter().all(|&p| players[p as usize].decision().is_some()) {
            terminated = true;
            break;
        }
        let idle = !players.iter().any(Player::wants_activation);
        if net.is_isolated() && cfg.mutation != Mutation::NeverHeal {
            let all_revealed = !heal_watch.is_empty() && heal_watch.iter().all(|&m| players[m as usize].has_revealed());
            if all_revealed || (idle && net.deliverable() == 0) {
                net.heal();
            }
        }
        // Nothing left to do, or only messages an unending partition holds.
        if idle && (net.in_transit() == 0 || (net.is_isolated() && net.deliverable() == 0)) {
            break;
        }
        let mv = net.next_move();
        let p = mv.player;
        let ids: Vec<u64> = if cfg.record_trace { mv.delivered.iter().map(|e| e.id).collect() } else { Vec::new() };
        let delivered: Vec<(PlayerId, Msg)> = mv.delivered.into_iter().map(|e| (e.sender, e.msg)).collect();
        let player = &mut players[p as usize];
        let (outbox, events) = player.activate(delivered);
        let strategy = player.strategy();
        for ev in &events {
            tracker.observe(mv.step, p, outsider(p), strategy, ev);
            if let Event::CandidateValidated(c) = ev {
                if outsider(p) {
                    valid_candidates.insert(*c);
                }
            }
        }
        if cfg.record_trace {
            let ids: Vec<String> = ids.iter().map(u64::to_string).collect();
            trace.push(format!("{}|{}|delivered:[{}]|{}", mv.step, p, ids.join(","), describe(&outbox, &events)));
        }
        for (dest, msg) in outbox {
            match dest {
                Dest::All => {
                    for r in 0..n {
                        net.submit(p, r, msg.clone());
                    }
                    messages += n as u64;
                }
                Dest::One(r) => {
                    net.submit(p, r, msg);
                    messages += 1;
                }
                Dest::Many(rs) => {
                    for &r in rs.iter() {
                        net.submit(p, r, msg.clone());
                    }
                    messages += rs.len() as u64;
                }
            }
        }
    }
    if !terminated {
        terminated = outsiders.iter().all(|&p| players[p as usize].decision().is_some());
    }
    let mut milestones = tracker.out;
    milestones.sort_by_key(|m| (m.step, m.index));
    RunResult {
        steps: net.step(),
        terminated,
        decisions: players.iter().map(|p| p.decision().cloned()).collect(),
        predecisions: players.iter().map(|p| p.predecision().map(<[u8]>::to_vec)).collect(),
        valid_candidates,
        milestones,
        trace,
        late_deliveries: net.late_deliveries().len(),
        healed_at: net.healed_at(),
        messages,
    }
}
