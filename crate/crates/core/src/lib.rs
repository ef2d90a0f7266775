//! Asynchronous gossip-based Nash equilibrium seeking over directed graphs.
//!
//! Players only see their own cost and exchange estimates of the actions they
//! depend on with one communication neighbour at a time. The crate provides
//! the graph checks, the estimate bookkeeping, both gossip algorithms, exact
//! spectral verification of the averaging step, a full-information oracle and
//! a command-line runner.

pub mod cli;
pub mod config;
pub mod digraph;
pub mod error;
pub mod exec;
pub mod game;
pub mod gossip;
pub mod layout;
pub mod oracle;
pub mod spectral;

pub use digraph::Digraph;
pub use error::{Error, Result};
pub use exec::Parallelism;
pub use game::{ActionInterval, GameSpec};
pub use gossip::{run, RunConfig, StepRule, Trajectory};
pub use layout::EstimateLayout;
