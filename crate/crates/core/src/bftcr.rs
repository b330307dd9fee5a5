//! Commit-reveal payloads, broadcast contents, proofs of baiting, and the
//! punish/reward/resolve step.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{self, decrypt, digest, pof_verify, Digest, Key, ProofOfFraud, SignedMessage, Verifier};
use crate::PlayerId;

/// Longest value the predecision layer accepts.
pub const MAX_VALUE_LEN: usize = 32;

/// Commitment plaintext size for `n` players: large enough for a proof list
/// naming every player, so both payload kinds encrypt to the same length.
pub fn commitment_pad(n: u32) -> usize {
    // culprit + two signed votes, each: signer, len, "VOTE" round len value, tag
    let vote = 4 + 4 + (4 + 4 + 4 + MAX_VALUE_LEN) + 32;
    let pof = 4 + 2 * vote;
    16 + n as usize * pof
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("proof list names {have} culprits, {need} needed")]
    TooFewCulprits { have: usize, need: usize },
    #[error("proof for p{0} does not verify")]
    BadProof(PlayerId),
    #[error("duplicate culprit p{0}")]
    DuplicateCulprit(PlayerId),
    #[error("malformed payload")]
    Malformed,
}

impl From<DecodeError> for PayloadError {
    fn from(_: DecodeError) -> Self {
        PayloadError::Malformed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommitmentPayload {
    Hash(Digest),
    Pofs(Vec<ProofOfFraud>),
}

impl CommitmentPayload {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            CommitmentPayload::Hash(d) => Writer::new().tag(b"HASH").raw(d).finish(),
            CommitmentPayload::Pofs(list) => {
                let mut w = Writer::new().tag(b"POFS").u32(list.len() as u32);
                for p in list {
                    w = p.encode_into(w);
                }
                w.finish()
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PayloadError> {
        let mut r = Reader::new(bytes);
        if r.expect_tag(b"HASH").is_ok() {
            let d = r.array32()?;
            r.finish()?;
            return Ok(CommitmentPayload::Hash(d));
        }
        r.expect_tag(b"POFS")?;
        let count = r.u32()? as usize;
        let mut list = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            list.push(ProofOfFraud::decode_from(&mut r)?);
        }
        r.finish()?;
        Ok(CommitmentPayload::Pofs(list))
    }

    pub fn is_pofs(&self) -> bool {
        matches!(self, CommitmentPayload::Pofs(_))
    }
}

/// Checks a proof list: every proof verifies, culprits are distinct, and
/// there are at least `min_culprits` of them.
pub fn verify_pof_list(verifier: &Verifier, list: &[ProofOfFraud], min_culprits: usize) -> Result<BTreeSet<PlayerId>, PayloadError> {
    let mut culprits = BTreeSet::new();
    for p in list {
        if !pof_verify(verifier, p) {
            return Err(PayloadError::BadProof(p.culprit()));
        }
        if !culprits.insert(p.culprit()) {
            return Err(PayloadError::DuplicateCulprit(p.culprit()));
        }
    }
    if culprits.len() < min_culprits {
        return Err(PayloadError::TooFewCulprits { have: culprits.len(), need: min_culprits });
    }
    Ok(culprits)
}

/// What a source commits to in the first broadcast, before signing.
pub fn rb1_payload(source: PlayerId, ciphertext: &[u8]) -> Vec<u8> {
    Writer::new().tag(b"RB1").u32(source).bytes(ciphertext).finish()
}

pub fn parse_rb1(payload: &[u8]) -> Option<(PlayerId, &[u8])> {
    let mut r = Reader::new(payload);
    r.expect_tag(b"RB1").ok()?;
    let source = r.u32().ok()?;
    let ct = r.bytes().ok()?;
    r.finish().ok()?;
    Some((source, ct))
}

/// The second broadcast carries digests of the delivered commitments.
pub fn rb2_payload(source: PlayerId, digests: &[Digest]) -> Vec<u8> {
    let mut w = Writer::new().tag(b"RB2").u32(source).u32(digests.len() as u32);
    for d in digests {
        w = w.raw(d);
    }
    w.finish()
}

pub fn parse_rb2(payload: &[u8]) -> Option<(PlayerId, Vec<Digest>)> {
    let mut r = Reader::new(payload);
    r.expect_tag(b"RB2").ok()?;
    let source = r.u32().ok()?;
    let count = r.u32().ok()? as usize;
    if count > 4096 {
        return None;
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(r.array32().ok()?);
    }
    r.finish().ok()?;
    Some((source, out))
}

/// Evidence that `candidate` committed to a proof list before the second
/// broadcast wave closed: the revealed key, the ciphertext, and second
/// broadcast lists from distinct sources that contain the ciphertext digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofOfBaiting {
    pub candidate: PlayerId,
    pub key: Key,
    pub ciphertext: Arc<Vec<u8>>,
    pub witnesses: Vec<Arc<SignedMessage>>,
}

impl ProofOfBaiting {
    pub fn encode_into(&self, mut w: Writer) -> Writer {
        w = w.u32(self.candidate).raw(&self.key.0).bytes(&self.ciphertext).u32(self.witnesses.len() as u32);
        for s in &self.witnesses {
            w = w.raw(&s.encode());
        }
        w
    }
}

/// Returns the verified proof list if the evidence holds.
pub fn validate_candidate(
    verifier: &Verifier,
    pob: &ProofOfBaiting,
    min_witnesses: usize,
    min_culprits: usize,
) -> Option<Vec<ProofOfFraud>> {
    if !witnesses_hold(|w| verifier.verify(w), pob, &digest(&pob.ciphertext), min_witnesses) {
        return None;
    }
    open_proof_list(verifier, pob, min_culprits)
}

fn witnesses_hold(
    mut verify: impl FnMut(&Arc<SignedMessage>) -> bool,
    pob: &ProofOfBaiting,
    ct_digest: &Digest,
    min: usize,
) -> bool {
    let mut sources = BTreeSet::new();
    for w in &pob.witnesses {
        if !verify(w) {
            continue;
        }
        let Some((source, list)) = parse_rb2(w.payload()) else { continue };
        if source == w.signer() && list.contains(ct_digest) {
            sources.insert(source);
        }
    }
    sources.len() >= min
}

fn open_proof_list(verifier: &Verifier, pob: &ProofOfBaiting, min_culprits: usize) -> Option<Vec<ProofOfFraud>> {
    let plain = decrypt(&pob.ciphertext, &pob.key).ok()?;
    match CommitmentPayload::decode(&plain).ok()? {
        CommitmentPayload::Pofs(list) => {
            let culprits = verify_pof_list(verifier, &list, min_culprits).ok()?;
            culprits.contains(&pob.candidate).then_some(list)
        }
        CommitmentPayload::Hash(_) => None,
    }
}

/// Per-player memo for candidate checks. The same ciphertext shows up in
/// many proposals, so its digest and decrypted proof list are kept,
/// matched by content.
#[derive(Debug, Default)]
pub struct CandidateCache {
    entries: Vec<CachedCiphertext>,
    witnesses: BTreeMap<Digest, Arc<SignedMessage>>,
}

#[derive(Debug)]
struct CachedCiphertext {
    ciphertext: Arc<Vec<u8>>,
    digest: Digest,
    opened: Vec<(Key, usize, Option<Vec<ProofOfFraud>>)>,
}

impl CandidateCache {
    fn entry(&mut self, ct: &Arc<Vec<u8>>) -> &mut CachedCiphertext {
        let pos = self.entries.iter().position(|e| Arc::ptr_eq(&e.ciphertext, ct) || e.ciphertext == *ct);
        let i = pos.unwrap_or_else(|| {
            self.entries.push(CachedCiphertext { ciphertext: Arc::clone(ct), digest: digest(ct), opened: Vec::new() });
            self.entries.len() - 1
        });
        &mut self.entries[i]
    }

    pub fn ciphertext_digest(&mut self, ct: &Arc<Vec<u8>>) -> Digest {
        self.entry(ct).digest
    }

    /// Same result as [`validate_candidate`].
    pub fn validate(
        &mut self,
        verifier: &Verifier,
        pob: &ProofOfBaiting,
        min_witnesses: usize,
        min_culprits: usize,
    ) -> Option<Vec<ProofOfFraud>> {
        let ct_digest = self.entry(&pob.ciphertext).digest;
        let known = &mut self.witnesses;
        let verify = |w: &Arc<SignedMessage>| {
            if let Some(k) = known.get(w.tag()) {
                return Arc::ptr_eq(k, w) || k == w;
            }
            let ok = verifier.verify(w);
            if ok {
                known.insert(*w.tag(), Arc::clone(w));
            }
            ok
        };
        if !witnesses_hold(verify, pob, &ct_digest, min_witnesses) {
            return None;
        }
        let entry = self.entry(&pob.ciphertext);
        if let Some((.., r)) = entry.opened.iter().find(|(k, m, _)| *k == pob.key && *m == min_culprits) {
            return r.clone();
        }
        let r = open_proof_list(verifier, pob, min_culprits);
        entry.opened.push((pob.key, min_culprits, r.clone()));
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BftcrDecision {
    ValueDecided { value: Vec<u8> },
    Resolved { value: Vec<u8>, winner: PlayerId, punished: Vec<PlayerId> },
}

impl BftcrDecision {
    pub fn value(&self) -> &[u8] {
        match self {
            BftcrDecision::ValueDecided { value } | BftcrDecision::Resolved { value, .. } => value,
        }
    }

    pub fn is_resolved(&self) -> bool {
        matches!(self, BftcrDecision::Resolved { .. })
    }
}

/// Uniform draw over the sorted candidates, seeded by the decided set.
pub fn beacon_draw(seed: &Digest, candidates: &BTreeSet<PlayerId>) -> Option<PlayerId> {
    if candidates.is_empty() {
        return None;
    }
    let mut rng = ChaCha20Rng::from_seed(crypto::digest_parts(&[b"beacon", seed]));
    candidates.iter().nth(rng.gen_range(0..candidates.len())).copied()
}

pub fn resolve(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.min(b).to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("no candidate to reward")]
    NoCandidate,
}

/// Punish every culprit and losing candidate, reward the winner, and pick
/// one of the two conflicting values.
pub fn punish_reward_resolve(
    winner: Option<PlayerId>,
    culprits: &BTreeSet<PlayerId>,
    candidates: &BTreeSet<PlayerId>,
    pair: (&[u8], &[u8]),
) -> Result<BftcrDecision, ResolveError> {
    let winner = winner.ok_or(ResolveError::NoCandidate)?;
    let punished: Vec<PlayerId> = culprits.union(candidates).copied().filter(|&p| p != winner).collect();
    Ok(BftcrDecision::Resolved { value: resolve(pair.0, pair.1), winner, punished })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{encrypt, pof_build, vote_payload, Keyring};

    fn pofs(ring: &Arc<Keyring>, ids: &[PlayerId]) -> Vec<ProofOfFraud> {
        let v = ring.verifier();
        ids.iter()
            .map(|&i| {
                let a = ring.signer(i).sign(vote_payload(0, b"blockA"));
                let b = ring.signer(i).sign(vote_payload(0, b"blockB"));
                pof_build(&v, &a, &b).unwrap()
            })
            .collect()
    }

    #[test]
    fn payload_round_trip() {
        let ring = Keyring::from_seed(10, 1);
        let p = CommitmentPayload::Pofs(pofs(&ring, &[1, 2, 3, 4]));
        assert_eq!(CommitmentPayload::decode(&p.encode()), Ok(p.clone()));
        let h = CommitmentPayload::Hash([7; 32]);
        assert_eq!(CommitmentPayload::decode(&h.encode()), Ok(h.clone()));
        assert!(CommitmentPayload::decode(b"junk").is_err());
        let k = Key::derive(1, 1);
        let pad = commitment_pad(10);
        assert_eq!(encrypt(&p.encode(), &k, pad).unwrap().len(), encrypt(&h.encode(), &k, pad).unwrap().len());
        assert!(encrypt(&CommitmentPayload::Pofs(pofs(&ring, &(0..10).collect::<Vec<_>>())).encode(), &k, pad).is_ok());
    }

    #[test]
    fn pof_list_threshold() {
        let ring = Keyring::from_seed(10, 1);
        let v = ring.verifier();
        assert!(verify_pof_list(&v, &pofs(&ring, &[1, 2, 3, 4]), 4).is_ok());
        assert_eq!(
            verify_pof_list(&v, &pofs(&ring, &[1, 2]), 4),
            Err(PayloadError::TooFewCulprits { have: 2, need: 4 })
        );
        let mut dup = pofs(&ring, &[1, 2, 3]);
        dup.push(dup[0].clone());
        assert_eq!(verify_pof_list(&v, &dup, 3), Err(PayloadError::DuplicateCulprit(1)));
    }

    #[test]
    fn broadcast_payloads_parse() {
        assert_eq!(parse_rb1(&rb1_payload(3, b"ct")), Some((3, &b"ct"[..])));
        assert_eq!(parse_rb2(&rb2_payload(2, &[[1; 32], [2; 32]])), Some((2, vec![[1; 32], [2; 32]])));
        assert!(parse_rb2(&rb1_payload(3, b"ct")).is_none());
    }

    #[test]
    fn candidate_validation() {
        let ring = Keyring::from_seed(10, 4);
        let v = ring.verifier();
        let key = Key::derive(4, 6);
        let list = pofs(&ring, &[6, 7, 8, 9]);
        let ct = Arc::new(encrypt(&CommitmentPayload::Pofs(list.clone()).encode(), &key, commitment_pad(10)).unwrap());
        let d = digest(&ct);
        let witness = |s: PlayerId| Arc::new(ring.signer(s).sign(rb2_payload(s, &[d])));
        let pob = ProofOfBaiting { candidate: 6, key, ciphertext: ct.clone(), witnesses: (0..4).map(witness).collect() };
        assert_eq!(validate_candidate(&v, &pob, 4, 4), Some(list));

        let short = ProofOfBaiting { witnesses: (0..3).map(witness).collect(), ..pob.clone() };
        assert!(validate_candidate(&v, &short, 4, 4).is_none());

        let mut forged = pob.clone();
        forged.witnesses[0] = Arc::new(forged.witnesses[0].with_signer(5));
        assert!(validate_candidate(&v, &forged, 4, 4).is_none());

        let wrong_key = ProofOfBaiting { key: Key::derive(4, 7), ..pob.clone() };
        assert!(validate_candidate(&v, &wrong_key, 4, 4).is_none());

        // A candidate must itself be named in its proof list.
        let outsider = ProofOfBaiting { candidate: 2, ..pob };
        assert!(validate_candidate(&v, &outsider, 4, 4).is_none());
    }

    #[test]
    fn resolution() {
        assert_eq!(resolve(b"blockA", b"blockB"), b"blockA");
        assert_eq!(resolve(b"blockB", b"blockA"), b"blockA");
        let culprits: BTreeSet<_> = [6, 7, 8, 9].into();
        let candidates: BTreeSet<_> = [6].into();
        let d = punish_reward_resolve(Some(6), &culprits, &candidates, (b"blockB", b"blockA")).unwrap();
        assert_eq!(
            d,
            BftcrDecision::Resolved { value: b"blockA".to_vec(), winner: 6, punished: vec![7, 8, 9] }
        );
        assert_eq!(punish_reward_resolve(None, &culprits, &candidates, (b"a", b"b")), Err(ResolveError::NoCandidate));
    }

    #[test]
    fn beacon_is_uniform_enough() {
        let cands: BTreeSet<PlayerId> = [3, 5].into();
        let wins = (0u32..2000)
            .filter(|i| beacon_draw(&digest(&i.to_le_bytes()), &cands) == Some(3))
            .count();
        assert!((900..=1100).contains(&wins), "{wins}");
        assert_eq!(beacon_draw(&[0; 32], &[4].into()), Some(4));
        assert_eq!(beacon_draw(&[0; 32], &BTreeSet::new()), None);
    }
}
