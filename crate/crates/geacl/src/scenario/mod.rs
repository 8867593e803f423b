//! The benchmark environments: a synthetic dissemination harness with
//! adversary support, the five-machine factory floor, the ten-agent
//! disaster-response grid, and the scripted four-agent walkthrough.

pub mod disaster;
pub mod factory;
pub mod synthetic;
pub mod walkthrough;

use sha2::{Digest, Sha256};

/// Hash of the pre-generated environment (arrivals, faults, maps); equal
/// seeds must produce equal hashes in both modes so paired comparisons are
/// fair.
pub fn env_hash(parts: &impl serde::Serialize) -> String {
    let text = serde_json::to_string(parts).expect("environment serializes");
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    crate::trace::hex(&hasher.finalize())
}
