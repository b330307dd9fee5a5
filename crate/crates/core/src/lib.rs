//! Simulation core for baiting-based rational agreement: game parameters,
//! toy cryptography, a partially synchronous scheduler, reliable broadcast,
//! an accountable predecision layer, the commit-reveal phase, and the
//! strategy library with utility accounting.

pub mod analysis;
pub mod bftcr;
pub mod codec;
pub mod crypto;
pub mod msg;
pub mod net;
pub mod params;
pub mod player;
pub mod predecision;
pub mod rb;
pub mod rb_explore;
pub mod sim;
pub mod strategy;
pub mod wc;

pub type PlayerId = u32;
