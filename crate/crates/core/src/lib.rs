//! Hierarchical taxi dispatch: first-level passenger assignment under a
//! pluggable objective, exact per-taxi sequencing, a discrete-event fleet
//! simulator, and harmony-search evolution of objective-generating prompts.

pub mod assign;
pub mod dispatch;
pub mod evolve;
pub mod exec;
pub mod generator;
pub mod metrics;
pub mod network;
pub mod objective;
pub mod oracle;
pub mod sequence;
pub mod sim;

pub use exec::Execution;
