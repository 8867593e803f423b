//! Secure gossip: keyed-hash envelope signatures, reputation scores carried
//! as ordinary state, and k-source corroboration gating commits of
//! high-priority remote claims.

use crate::envelope::{AgentId, Envelope, EnvelopeId, PriorityClass, Tick};
use crate::store::Store;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

/// Per-agent 32-byte signing keys. The registry is ground truth for
/// verification; what an agent actually signs with is its own business, so
/// adversaries can hold wrong or stolen keys.
#[derive(Debug, Clone, Default)]
pub struct KeyRegistry {
    keys: BTreeMap<AgentId, [u8; 32]>,
}

impl KeyRegistry {
    /// Deterministically derive one key per agent from the run seed.
    pub fn generate(agents: impl IntoIterator<Item = AgentId>, seed: u64) -> Self {
        let mut keys = BTreeMap::new();
        for agent in agents {
            let mut rng = crate::rng::Rng::derive(seed ^ 0x5EC0_0DE5, agent.0);
            let mut key = [0u8; 32];
            for chunk in key.chunks_mut(8) {
                chunk.copy_from_slice(&rng.next_u64().to_be_bytes());
            }
            keys.insert(agent, key);
        }
        KeyRegistry { keys }
    }

    pub fn key_of(&self, agent: AgentId) -> Option<&[u8; 32]> {
        self.keys.get(&agent)
    }
}

/// The signing capability one agent holds.
#[derive(Debug, Clone)]
pub struct Signer {
    key: [u8; 32],
}

impl Signer {
    pub fn new(key: [u8; 32]) -> Self {
        Signer { key }
    }

    pub fn for_agent(registry: &KeyRegistry, agent: AgentId) -> Option<Self> {
        registry.key_of(agent).map(|k| Signer::new(*k))
    }

    pub fn sign(&self, bytes: &[u8]) -> Vec<u8> {
        keyed_hash(&self.key, bytes)
    }
}

fn keyed_hash(key: &[u8; 32], bytes: &[u8]) -> Vec<u8> {
    let mut hasher = Sha256::new();
    hasher.update(key);
    hasher.update(bytes);
    hasher.finalize().to_vec()
}

/// Attach a signature covering the canonical bytes. The signature field must
/// be empty going in.
pub fn sign_envelope(mut env: Envelope, signer: &Signer) -> Envelope {
    debug_assert!(env.signature.is_none(), "envelope already signed");
    env.signature = Some(signer.sign(&env.canonical_bytes()));
    env
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Valid,
    UnknownOrigin,
    BadSignature,
}

/// Check an envelope's signature against the registered key of its claimed
/// origin.
pub fn verify_envelope(env: &Envelope, registry: &KeyRegistry) -> VerifyOutcome {
    let Some(key) = registry.key_of(env.origin) else {
        return VerifyOutcome::UnknownOrigin;
    };
    match &env.signature {
        Some(sig) if *sig == keyed_hash(key, &env.canonical_bytes()) => VerifyOutcome::Valid,
        _ => VerifyOutcome::BadSignature,
    }
}

/// Trust scores in [0,1], default 0.5.
#[derive(Debug, Clone, Default)]
pub struct ReputationTable {
    scores: BTreeMap<AgentId, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReputationEvent {
    VerifyFail,
    CorroborationExpiredAsSoleSource,
    CommitConfirmed,
}

impl ReputationTable {
    pub fn score(&self, agent: AgentId) -> f64 {
        self.scores.get(&agent).copied().unwrap_or(0.5)
    }

    pub fn update(&mut self, subject: AgentId, event: ReputationEvent) {
        let current = self.score(subject);
        let next = match event {
            ReputationEvent::VerifyFail => current * 0.5,
            ReputationEvent::CorroborationExpiredAsSoleSource => current * 0.8,
            ReputationEvent::CommitConfirmed => current + 0.05,
        };
        self.scores.insert(subject, next.clamp(0.0, 1.0));
    }

    pub fn observed(&self) -> impl Iterator<Item = (AgentId, f64)> + '_ {
        self.scores.iter().map(|(&a, &s)| (a, s))
    }
}

pub fn reputation_key(observer: AgentId, subject: AgentId) -> String {
    format!("rep/{}/{}", observer.0, subject.0)
}

/// Mean over observers of the freshest published score for each candidate;
/// candidates without reports sit at the 0.5 prior.
pub fn effective_scores(
    store: &Store,
    candidates: impl IntoIterator<Item = AgentId>,
) -> BTreeMap<AgentId, f64> {
    let mut sums: BTreeMap<AgentId, (f64, u64)> = BTreeMap::new();
    for key in store.keys() {
        let Some(rest) = key.strip_prefix("rep/") else { continue };
        let Some((_, subject)) = rest.split_once('/') else { continue };
        let Ok(subject) = subject.parse::<u64>() else { continue };
        let Some(entry) = store.get(key) else { continue };
        if let crate::envelope::Value::Scalar(score) = entry.effective_value() {
            let slot = sums.entry(AgentId(subject)).or_insert((0.0, 0));
            slot.0 += score;
            slot.1 += 1;
        }
    }
    candidates
        .into_iter()
        .map(|c| {
            let score = sums
                .get(&c)
                .map(|&(total, n)| total / n as f64)
                .unwrap_or(0.5);
            (c, score)
        })
        .collect()
}

/// Corroboration settings: commits of remote claims at or above `applies_to`
/// wait for `k` distinct first-hop senders, with a pending timeout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorroborationPolicy {
    pub k: usize,
    pub applies_to: PriorityClass,
    pub timeout_rounds: u64,
}

impl Default for CorroborationPolicy {
    fn default() -> Self {
        CorroborationPolicy { k: 2, applies_to: PriorityClass::High, timeout_rounds: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct PendingClaim {
    pub envelope: Envelope,
    pub senders: BTreeSet<AgentId>,
    pub first_seen: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateDecision {
    /// Commit the envelope; the senders that corroborated it (empty when the
    /// gate was bypassed).
    Commit { corroborators: BTreeSet<AgentId> },
    Hold,
}

/// Per-agent corroboration state. Held envelopes are never forwarded;
/// forwarding them would let honest relays manufacture corroboration.
#[derive(Debug, Clone, Default)]
pub struct CorroborationGate {
    pending: BTreeMap<EnvelopeId, PendingClaim>,
}

impl CorroborationGate {
    /// Route a verified envelope through the gate. Self-originated state,
    /// sub-threshold priorities, and already-absorbed ids bypass it.
    pub fn offer(
        &mut self,
        env: &Envelope,
        first_hop_sender: AgentId,
        self_id: AgentId,
        policy: &CorroborationPolicy,
        already_known: bool,
        now: Tick,
    ) -> GateDecision {
        if env.origin == self_id || env.priority < policy.applies_to || already_known {
            return GateDecision::Commit { corroborators: BTreeSet::new() };
        }
        let claim = self.pending.entry(env.id()).or_insert_with(|| PendingClaim {
            envelope: env.clone(),
            senders: BTreeSet::new(),
            first_seen: now,
        });
        claim.senders.insert(first_hop_sender);
        if claim.senders.len() >= policy.k {
            let claim = self.pending.remove(&env.id()).expect("entry just touched");
            GateDecision::Commit { corroborators: claim.senders }
        } else {
            GateDecision::Hold
        }
    }

    /// Drop pending claims older than the timeout, returning them so callers
    /// can meter the expiry and penalize sole sources.
    pub fn sweep_expired(
        &mut self,
        policy: &CorroborationPolicy,
        now: Tick,
        round_len: u64,
    ) -> Vec<PendingClaim> {
        let horizon = policy.timeout_rounds * round_len;
        let expired: Vec<EnvelopeId> = self
            .pending
            .iter()
            .filter(|(_, c)| now.0.saturating_sub(c.first_seen.0) > horizon)
            .map(|(&id, _)| id)
            .collect();
        expired
            .into_iter()
            .map(|id| self.pending.remove(&id).expect("listed above"))
            .collect()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn pending_ids(&self) -> BTreeSet<EnvelopeId> {
        self.pending.keys().copied().collect()
    }
}
