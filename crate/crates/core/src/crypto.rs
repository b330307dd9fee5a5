//! Toy cryptography for a closed simulation.
//!
//! Signature tags are keyed digests over a per-player secret that only the
//! [`Keyring`] holds. Players receive a [`Signer`] for their own id and a
//! [`Verifier`]; nothing else can mint a tag, so forgery is impossible by
//! construction rather than by hardness.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::PlayerId;

pub type Digest = [u8; 32];

pub fn digest(bytes: &[u8]) -> Digest {
    Sha256::digest(bytes).into()
}

pub fn digest_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn short_hex(d: &Digest) -> String {
    d[..4].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedMessage {
    signer: PlayerId,
    payload: Vec<u8>,
    tag: Digest,
}

impl SignedMessage {
    pub fn signer(&self) -> PlayerId {
        self.signer
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn tag(&self) -> &Digest {
        &self.tag
    }

    /// Same tag, different payload. The result never verifies unless the
    /// payload is unchanged.
    pub fn with_payload(&self, payload: Vec<u8>) -> Self {
        Self { payload, ..self.clone() }
    }

    /// Same tag and payload, claimed by another signer.
    pub fn with_signer(&self, signer: PlayerId) -> Self {
        Self { signer, ..self.clone() }
    }

    pub fn encode(&self) -> Vec<u8> {
        Writer::new().u32(self.signer).bytes(&self.payload).raw(&self.tag).finish()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let signer = r.u32()?;
        let payload = r.bytes()?.to_vec();
        let tag = r.array32()?;
        Ok(Self { signer, payload, tag })
    }
}

impl fmt::Debug for SignedMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signed(p{}, {} bytes, {})", self.signer, self.payload.len(), short_hex(&self.tag))
    }
}

pub struct Keyring {
    secrets: Vec<[u8; 32]>,
}

impl Keyring {
    pub fn from_seed(n: u32, seed: u64) -> Arc<Self> {
        let secrets = (0..n)
            .map(|i| digest_parts(&[b"signing-secret", &seed.to_le_bytes(), &i.to_le_bytes()]))
            .collect();
        Arc::new(Self { secrets })
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }

    fn tag(&self, signer: PlayerId, payload: &[u8]) -> Option<Digest> {
        let secret = self.secrets.get(signer as usize)?;
        Some(digest_parts(&[secret, &signer.to_le_bytes(), payload]))
    }

    /// Panics if `id` is not a player of this keyring.
    pub fn signer(self: &Arc<Self>, id: PlayerId) -> Signer {
        assert!((id as usize) < self.secrets.len(), "unknown player {id}");
        Signer { id, keyring: Arc::clone(self) }
    }

    pub fn verifier(self: &Arc<Self>) -> Verifier {
        Verifier { keyring: Arc::clone(self) }
    }
}

#[derive(Clone)]
pub struct Signer {
    id: PlayerId,
    keyring: Arc<Keyring>,
}

impl Signer {
    pub fn id(&self) -> PlayerId {
        self.id
    }

    pub fn sign(&self, payload: Vec<u8>) -> SignedMessage {
        let tag = self.keyring.tag(self.id, &payload).expect("signer id checked at construction");
        SignedMessage { signer: self.id, payload, tag }
    }
}

#[derive(Clone)]
pub struct Verifier {
    keyring: Arc<Keyring>,
}

impl Verifier {
    pub fn verify(&self, msg: &SignedMessage) -> bool {
        self.keyring.tag(msg.signer, &msg.payload).is_some_and(|t| t == msg.tag)
    }

    pub fn player_count(&self) -> usize {
        self.keyring.len()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Key(pub [u8; 32]);

impl Key {
    pub fn derive(seed: u64, owner: PlayerId) -> Self {
        Key(digest_parts(&[b"commitment-key", &seed.to_le_bytes(), &owner.to_le_bytes()]))
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", short_hex(&self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("payload of {len} bytes does not fit the {padded} byte commitment")]
    TooLong { len: usize, padded: usize },
    #[error("decryption failed")]
    Decrypt,
}

const MAC_LEN: usize = 16;

fn keystream(key: &Key, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::from_seed(key.0);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

fn mac(key: &Key, body: &[u8]) -> [u8; MAC_LEN] {
    let d = digest_parts(&[b"mac", &key.0, body]);
    d[..MAC_LEN].try_into().unwrap()
}

/// Pads `payload` to `padded_len` bytes, XORs with the key stream and appends
/// a MAC. Every ciphertext produced with the same `padded_len` has the same
/// length regardless of payload.
pub fn encrypt(payload: &[u8], key: &Key, padded_len: usize) -> Result<Vec<u8>, CryptoError> {
    let body_len = padded_len.saturating_sub(4);
    if payload.len() > body_len {
        return Err(CryptoError::TooLong { len: payload.len(), padded: padded_len });
    }
    let mut plain = Vec::with_capacity(padded_len + MAC_LEN);
    plain.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    plain.extend_from_slice(payload);
    plain.resize(padded_len.max(4), 0);
    for (p, k) in plain.iter_mut().zip(keystream(key, padded_len.max(4))) {
        *p ^= k;
    }
    let tag = mac(key, &plain);
    plain.extend_from_slice(&tag);
    Ok(plain)
}

pub fn decrypt(ciphertext: &[u8], key: &Key) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < 4 + MAC_LEN {
        return Err(CryptoError::Decrypt);
    }
    let (body, tag) = ciphertext.split_at(ciphertext.len() - MAC_LEN);
    if mac(key, body) != tag {
        return Err(CryptoError::Decrypt);
    }
    let mut plain = body.to_vec();
    for (p, k) in plain.iter_mut().zip(keystream(key, body.len())) {
        *p ^= k;
    }
    let len = u32::from_le_bytes(plain[..4].try_into().unwrap()) as usize;
    if len > plain.len() - 4 {
        return Err(CryptoError::Decrypt);
    }
    Ok(plain[4..4 + len].to_vec())
}

/// Vote payloads for the predecision layer: `(round, value)`.
pub fn vote_payload(round: u32, value: &[u8]) -> Vec<u8> {
    Writer::new().tag(b"VOTE").u32(round).bytes(value).finish()
}

pub fn parse_vote(payload: &[u8]) -> Option<(u32, &[u8])> {
    let mut r = Reader::new(payload);
    r.expect_tag(b"VOTE").ok()?;
    let round = r.u32().ok()?;
    let value = r.bytes().ok()?;
    r.finish().ok()?;
    Some((round, value))
}

/// Two payloads conflict when both are votes for the same round with
/// different values.
pub fn votes_conflict(a: &[u8], b: &[u8]) -> bool {
    match (parse_vote(a), parse_vote(b)) {
        (Some((ra, va)), Some((rb, vb))) => ra == rb && va != vb,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PofError {
    #[error("a message signature does not verify")]
    BadSignature,
    #[error("messages are signed by different players")]
    DifferentSigners,
    #[error("messages do not conflict")]
    NoConflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProofOfFraud {
    culprit: PlayerId,
    msg_a: SignedMessage,
    msg_b: SignedMessage,
}

impl ProofOfFraud {
    pub fn culprit(&self) -> PlayerId {
        self.culprit
    }

    pub fn messages(&self) -> (&SignedMessage, &SignedMessage) {
        (&self.msg_a, &self.msg_b)
    }

    /// The two conflicting vote values, smaller first.
    pub fn values(&self) -> Option<(Vec<u8>, Vec<u8>)> {
        let (_, a) = parse_vote(self.msg_a.payload())?;
        let (_, b) = parse_vote(self.msg_b.payload())?;
        Some(if a <= b { (a.to_vec(), b.to_vec()) } else { (b.to_vec(), a.to_vec()) })
    }

    pub fn encode_into(&self, w: Writer) -> Writer {
        w.u32(self.culprit).raw(&self.msg_a.encode()).raw(&self.msg_b.encode())
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let culprit = r.u32()?;
        let msg_a = SignedMessage::decode_from(r)?;
        let msg_b = SignedMessage::decode_from(r)?;
        Ok(Self { culprit, msg_a, msg_b })
    }
}

pub fn pof_build(verifier: &Verifier, a: &SignedMessage, b: &SignedMessage) -> Result<ProofOfFraud, PofError> {
    if !verifier.verify(a) || !verifier.verify(b) {
        return Err(PofError::BadSignature);
    }
    if a.signer() != b.signer() {
        return Err(PofError::DifferentSigners);
    }
    if a == b || !votes_conflict(a.payload(), b.payload()) {
        return Err(PofError::NoConflict);
    }
    // Canonical order keeps equal proofs byte-identical.
    let (msg_a, msg_b) = if a.payload() <= b.payload() { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
    Ok(ProofOfFraud { culprit: a.signer(), msg_a, msg_b })
}

pub fn pof_verify(verifier: &Verifier, pof: &ProofOfFraud) -> bool {
    pof.msg_a.signer() == pof.culprit
        && pof.msg_b.signer() == pof.culprit
        && pof.msg_a != pof.msg_b
        && verifier.verify(&pof.msg_a)
        && verifier.verify(&pof.msg_b)
        && votes_conflict(pof.msg_a.payload(), pof.msg_b.payload())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_and_tamper() {
        let ring = Keyring::from_seed(5, 1);
        let v = ring.verifier();
        let m = ring.signer(3).sign(b"vote:A".to_vec());
        assert!(v.verify(&m));
        assert!(!v.verify(&m.with_payload(b"vote:B".to_vec())));
        assert!(!v.verify(&m.with_signer(4)));
        assert!(!v.verify(&m.with_signer(40)));
    }

    #[test]
    fn keyrings_differ_by_seed() {
        let a = Keyring::from_seed(3, 1).signer(0).sign(vec![1]);
        let b = Keyring::from_seed(3, 2).signer(0).sign(vec![1]);
        assert_ne!(a.tag(), b.tag());
        assert!(!Keyring::from_seed(3, 2).verifier().verify(&a));
    }

    #[test]
    fn encryption_round_trip_and_wrong_key() {
        let k = Key::derive(1, 0);
        let k2 = Key::derive(1, 1);
        let ct = encrypt(b"payload", &k, 64).unwrap();
        assert_eq!(decrypt(&ct, &k).unwrap(), b"payload");
        assert_eq!(decrypt(&ct, &k2), Err(CryptoError::Decrypt));
        let other = encrypt(b"a much longer payload of a different kind", &k2, 64).unwrap();
        assert_eq!(ct.len(), other.len());
        assert!(matches!(encrypt(&[0; 61], &k, 64), Err(CryptoError::TooLong { .. })));
    }

    #[test]
    fn pof_cases() {
        let ring = Keyring::from_seed(5, 9);
        let v = ring.verifier();
        let a = ring.signer(3).sign(vote_payload(0, b"A"));
        let b = ring.signer(3).sign(vote_payload(0, b"B"));
        let c = ring.signer(4).sign(vote_payload(0, b"B"));
        let d = ring.signer(3).sign(vote_payload(1, b"B"));
        let pof = pof_build(&v, &a, &b).unwrap();
        assert!(pof_verify(&v, &pof));
        assert_eq!(pof.culprit(), 3);
        assert_eq!(pof.values(), Some((b"A".to_vec(), b"B".to_vec())));
        assert_eq!(pof_build(&v, &b, &a), Ok(pof));
        assert_eq!(pof_build(&v, &a, &c), Err(PofError::DifferentSigners));
        assert_eq!(pof_build(&v, &a, &a), Err(PofError::NoConflict));
        assert_eq!(pof_build(&v, &a, &d), Err(PofError::NoConflict));
        assert_eq!(pof_build(&v, &a, &b.with_payload(vote_payload(0, b"C"))), Err(PofError::BadSignature));
    }
}
