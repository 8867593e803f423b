//! Gossip-enhanced agentic coordination layer: a reusable gossip protocol
//! library (epidemic dissemination, peer sampling, anti-entropy
//! reconciliation, priority filtering, secure gossip) and a deterministic
//! discrete-event simulator that evaluates it against direct-messaging
//! baselines.

pub mod config;
pub mod envelope;
pub mod error;
pub mod filter;
pub mod gossip;
pub mod health;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod store;
pub mod trace;
pub mod trust;
pub mod version;
pub mod view;

pub use envelope::{AgentId, Envelope, EnvelopeId, PriorityClass, Tick, Value};
pub use error::{Error, Result};
pub use rng::Rng;
pub use version::{vv_merge, vv_missing, VersionVector};
