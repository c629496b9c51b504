//! Simulation toolkit for token dissemination over smartphone peer-to-peer
//! meshes: graph generation and expansion analysis, a synchronous round-based
//! gossip engine, an asynchronous event-driven engine with fault injection,
//! and a synchronizer that runs round-based algorithms on the async substrate.

pub mod async_engine;
pub mod analysis;
pub mod error;
pub mod event;
pub mod matching;
pub mod sync;
pub mod synchronizer;
pub mod token;
pub mod topology;

pub use error::{Error, Result};

/// Node identifier, `0..n`.
pub type NodeId = usize;
/// Token identifier, `0..k`.
pub type TokenId = u32;
/// Exact fraction used wherever ratio arithmetic must not round.
pub type Rational = num_rational::Ratio<u64>;
