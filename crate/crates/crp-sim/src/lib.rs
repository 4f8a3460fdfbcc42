//! Deterministic discrete-event simulator and protocol library for
//! cluster-based route discovery in cognitive radio ad hoc networks.
//!
//! The library models a square field of primary (licensed) and secondary
//! (opportunistic) spectrum users, organizes the secondary users into
//! clusters with K-means and a K-nearest-neighbour join rule, and runs
//! route discovery over the cluster-head overlay. A classical flooding
//! baseline is provided for comparison, together with an experiment
//! harness that sweeps network size and reports request overhead, reply
//! overhead, discovery delay, and success rate.

pub mod clustering;
pub mod engine;
pub mod error;
pub mod fixture;
pub mod graph;
pub mod guide;
pub mod harness;
pub mod model;
pub mod plot;
pub mod protocol;
pub mod trace;

pub use error::{ConfigError, SimError};
