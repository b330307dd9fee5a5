//! Wire messages exchanged between simulated players.

use std::sync::Arc;

use crate::crypto::{Digest, Key, SignedMessage};
use crate::predecision::Certificate;
use crate::wc::WcMsg;
use crate::PlayerId;

/// The two broadcast groups of the commit-reveal phase, keyed by source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstanceId {
    Rb1(PlayerId),
    Rb2(PlayerId),
}

impl InstanceId {
    pub fn source(self) -> PlayerId {
        match self {
            InstanceId::Rb1(s) | InstanceId::Rb2(s) => s,
        }
    }
}

/// Broadcast payloads are source-signed; echo and ready senders are
/// authenticated by the envelope.
#[derive(Debug, Clone)]
pub enum RbWire {
    Send(Arc<SignedMessage>),
    Echo(Digest, Arc<SignedMessage>),
    Ready(Digest),
}

/// Private coalition message: the two versions a colluding source wants
/// each side to echo.
#[derive(Debug, Clone)]
pub struct ColludeBundle {
    pub source: PlayerId,
    pub for_a: Arc<SignedMessage>,
    pub for_b: Arc<SignedMessage>,
}

#[derive(Debug, Clone)]
pub enum Msg {
    Vote(SignedMessage),
    Cert(Arc<Certificate>),
    Rb(InstanceId, RbWire),
    Key { owner: PlayerId, key: Key },
    Wc(WcMsg),
    Collude(Arc<ColludeBundle>),
}

impl Msg {
    pub fn tag(&self) -> &'static str {
        match self {
            Msg::Vote(_) => "VOTE",
            Msg::Cert(_) => "CERT",
            Msg::Rb(InstanceId::Rb1(_), RbWire::Send(_)) => "RB1.SEND",
            Msg::Rb(InstanceId::Rb1(_), RbWire::Echo(..)) => "RB1.ECHO",
            Msg::Rb(InstanceId::Rb1(_), RbWire::Ready(_)) => "RB1.READY",
            Msg::Rb(InstanceId::Rb2(_), RbWire::Send(_)) => "RB2.SEND",
            Msg::Rb(InstanceId::Rb2(_), RbWire::Echo(..)) => "RB2.ECHO",
            Msg::Rb(InstanceId::Rb2(_), RbWire::Ready(_)) => "RB2.READY",
            Msg::Key { .. } => "KEY",
            Msg::Wc(w) => w.tag(),
            Msg::Collude(_) => "COLLUDE",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Dest {
    All,
    One(PlayerId),
    Many(Arc<[PlayerId]>),
}
