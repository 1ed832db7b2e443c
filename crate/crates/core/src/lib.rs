//! Verification toolkit for population protocols.
//!
//! The crate covers the seven communication models (PP, IT, IO, QT, DT, DO and
//! message-free delayed observation), explicit reachability, trajectory
//! histories with pruning and shortening, counting-set closures, correctness
//! checking, generators for reduction protocols, and stochastic simulation.

pub mod catalog;
pub mod counting;
pub mod error;
pub mod format;
pub mod gen;
pub mod histories;
pub mod multiset;
pub mod protocol;
pub mod random;
pub mod reach;
pub mod semantics;
pub mod stochastic;
pub mod verify;

pub use error::{Error, Result};
pub use multiset::Multiset;
pub use protocol::{Model, MsgId, Protocol, Rule, StateId, TransId, Transition};
pub use reach::{bottom_scc_analysis, node_budget, reach_graph, ReachGraph, SccAnalysis};
pub use semantics::{support_set, Configuration, Run, Seen};
