//! One-round vote-certificate consensus with proof-of-fraud extraction.
//!
//! A certificate is a quorum of signed votes for one value. Two certificates
//! for different values must share at least t0+1 signers, and every shared
//! signer has signed two conflicting votes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Writer;
use crate::crypto::{self, digest, parse_vote, pof_build, Digest, ProofOfFraud, SignedMessage, Verifier};
use crate::PlayerId;

pub const ROUND: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CertError {
    #[error("vote from p{0} does not verify")]
    BadVote(PlayerId),
    #[error("vote from p{0} is for another round or value")]
    WrongVote(PlayerId),
    #[error("duplicate signer p{0}")]
    DuplicateSigner(PlayerId),
    #[error("{have} signers, {need} needed")]
    TooFew { have: usize, need: usize },
    #[error("empty value")]
    EmptyValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("certificate invalid: {0}")]
    Invalid(#[from] CertError),
    #[error("certificates are for the same value")]
    SameValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Certificate {
    round: u32,
    value: Vec<u8>,
    votes: Vec<SignedMessage>,
}

impl Certificate {
    /// Sorts by signer. Verification is separate; see [`Certificate::verify`].
    pub fn new(round: u32, value: Vec<u8>, mut votes: Vec<SignedMessage>) -> Self {
        votes.sort_by_key(|v| v.signer());
        Self { round, value, votes }
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn value(&self) -> &[u8] {
        &self.value
    }

    pub fn votes(&self) -> &[SignedMessage] {
        &self.votes
    }

    pub fn signers(&self) -> Vec<PlayerId> {
        self.votes.iter().map(|v| v.signer()).collect()
    }

    pub fn verify(&self, verifier: &Verifier, quorum: usize) -> Result<(), CertError> {
        if self.value.is_empty() {
            return Err(CertError::EmptyValue);
        }
        let mut last = None;
        for v in &self.votes {
            if last == Some(v.signer()) {
                return Err(CertError::DuplicateSigner(v.signer()));
            }
            last = Some(v.signer());
            if parse_vote(v.payload()) != Some((self.round, &self.value[..])) {
                return Err(CertError::WrongVote(v.signer()));
            }
            if !verifier.verify(v) {
                return Err(CertError::BadVote(v.signer()));
            }
        }
        if self.votes.len() < quorum {
            return Err(CertError::TooFew { have: self.votes.len(), need: quorum });
        }
        Ok(())
    }

    /// Canonical layout: round, value, then votes in signer order.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new().tag(b"CERT").u32(self.round).bytes(&self.value).u32(self.votes.len() as u32);
        for v in &self.votes {
            w = w.raw(&v.encode());
        }
        w.finish()
    }

    pub fn digest(&self) -> Digest {
        digest(&self.encode())
    }
}

/// Proofs of fraud for every signer that appears in both certificates.
pub fn extract_pofs(
    verifier: &Verifier,
    quorum: usize,
    a: &Certificate,
    b: &Certificate,
) -> Result<Vec<ProofOfFraud>, ExtractError> {
    a.verify(verifier, quorum)?;
    b.verify(verifier, quorum)?;
    if a.round == b.round && a.value == b.value {
        return Err(ExtractError::SameValue);
    }
    let by_signer: BTreeMap<PlayerId, &SignedMessage> = b.votes.iter().map(|v| (v.signer(), v)).collect();
    Ok(a.votes
        .iter()
        .filter_map(|va| by_signer.get(&va.signer()).and_then(|vb| pof_build(verifier, va, vb).ok()))
        .collect())
}

/// Collects votes, one per signer, until some value reaches the quorum.
#[derive(Debug, Clone)]
pub struct VoteCollector {
    round: u32,
    quorum: usize,
    seen: BTreeMap<PlayerId, usize>,
    tallies: Vec<(Vec<u8>, Vec<SignedMessage>)>,
}

impl VoteCollector {
    pub fn new(round: u32, quorum: usize) -> Self {
        Self { round, quorum, seen: BTreeMap::new(), tallies: Vec::new() }
    }

    /// Returns a certificate the first time a value reaches the quorum.
    /// Only the first valid vote per signer counts.
    pub fn add(&mut self, verifier: &Verifier, vote: &SignedMessage) -> Option<Certificate> {
        let (round, value) = parse_vote(vote.payload())?;
        if round != self.round || value.is_empty() || self.seen.contains_key(&vote.signer()) || !verifier.verify(vote) {
            return None;
        }
        let idx = match self.tallies.iter().position(|(v, _)| v == value) {
            Some(i) => i,
            None => {
                self.tallies.push((value.to_vec(), Vec::new()));
                self.tallies.len() - 1
            }
        };
        self.seen.insert(vote.signer(), idx);
        let (value, votes) = &mut self.tallies[idx];
        votes.push(vote.clone());
        (votes.len() == self.quorum).then(|| Certificate::new(self.round, value.clone(), votes.clone()))
    }

    pub fn count(&self, value: &[u8]) -> usize {
        self.tallies.iter().find(|(v, _)| v == value).map_or(0, |(_, vs)| vs.len())
    }

    /// Signers whose counted vote is for something other than `value`.
    pub fn count_other(&self, value: &[u8]) -> usize {
        self.seen.len() - self.count(value)
    }
}

pub fn vote(signer: &crypto::Signer, value: &[u8]) -> SignedMessage {
    signer.sign(crypto::vote_payload(ROUND, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{pof_verify, Keyring};

    #[test]
    fn collector_forms_certificate_once() {
        let ring = Keyring::from_seed(4, 3);
        let v = ring.verifier();
        let mut c = VoteCollector::new(ROUND, 3);
        assert!(c.add(&v, &vote(&ring.signer(0), b"x")).is_none());
        assert!(c.add(&v, &vote(&ring.signer(0), b"y")).is_none());
        assert!(c.add(&v, &vote(&ring.signer(1), b"x")).is_none());
        let cert = c.add(&v, &vote(&ring.signer(2), b"x")).unwrap();
        assert_eq!(cert.signers(), vec![0, 1, 2]);
        assert!(cert.verify(&v, 3).is_ok());
        assert!(c.add(&v, &vote(&ring.signer(3), b"x")).is_none());
        assert_eq!(c.count(b"x"), 4);
        assert_eq!(c.count(b"y"), 0);
        assert_eq!(c.count_other(b"y"), 4);
    }

    #[test]
    fn verify_rejects_bad_certificates() {
        let ring = Keyring::from_seed(4, 3);
        let v = ring.verifier();
        let good: Vec<_> = (0..3).map(|i| vote(&ring.signer(i), b"x")).collect();
        assert_eq!(
            Certificate::new(ROUND, b"x".to_vec(), good[..2].to_vec()).verify(&v, 3),
            Err(CertError::TooFew { have: 2, need: 3 })
        );
        let mut dup = good.clone();
        dup[2] = good[1].clone();
        assert_eq!(Certificate::new(ROUND, b"x".to_vec(), dup).verify(&v, 3), Err(CertError::DuplicateSigner(1)));
        assert_eq!(Certificate::new(ROUND, b"y".to_vec(), good.clone()).verify(&v, 3), Err(CertError::WrongVote(0)));
        let mut forged = good;
        forged[0] = forged[0].with_signer(3);
        assert_eq!(Certificate::new(ROUND, b"x".to_vec(), forged).verify(&v, 3), Err(CertError::BadVote(3)));
    }

    #[test]
    fn extraction_names_double_signers() {
        let ring = Keyring::from_seed(10, 5);
        let v = ring.verifier();
        // A = {0,1,2}, B = {3,4,5}, coalition {6..9} signs both.
        let a: Vec<_> = [0, 1, 2, 6, 7, 8, 9].iter().map(|&i| vote(&ring.signer(i), b"blockA")).collect();
        let b: Vec<_> = [3, 4, 5, 6, 7, 8, 9].iter().map(|&i| vote(&ring.signer(i), b"blockB")).collect();
        let ca = Certificate::new(ROUND, b"blockA".to_vec(), a);
        let cb = Certificate::new(ROUND, b"blockB".to_vec(), b);
        let pofs = extract_pofs(&v, 7, &ca, &cb).unwrap();
        assert_eq!(pofs.iter().map(|p| p.culprit()).collect::<Vec<_>>(), vec![6, 7, 8, 9]);
        assert!(pofs.iter().all(|p| pof_verify(&v, p)));
        assert_eq!(extract_pofs(&v, 7, &ca, &ca), Err(ExtractError::SameValue));
    }
}
