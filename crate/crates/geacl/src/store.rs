//! Per-agent semantic state: versioned entries with pluggable merge policies,
//! digests for anti-entropy, TTL expiry.
//!
//! Coverage bookkeeping is exact. A plain per-origin maximum cannot tell a
//! gap (an update that was reordered past us and must still be accepted)
//! from genuinely seen history, and that distinction is what keeps expired
//! ids dead while leaving reordered ids repairable. Each origin is tracked
//! as a contiguous applied prefix plus an exception set above it; the prefix
//! also advances over ranges that are provably expired everywhere. The
//! exchanged digest remains an ordinary version vector: `digest()` reports
//! per-origin maxima, `advertised_digest()` reports the contiguous prefix a
//! peer can safely serve deltas against.

use crate::envelope::{AgentId, Envelope, EnvelopeId, PriorityClass, Tick, Value};
use crate::error::{Error, Result};
use crate::version::VersionVector;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How concurrent writes to one key reconcile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MergePolicy {
    LwwRegister,
    MaxCounter,
    GrowOnlySetUnion,
    VectorBlend(f64),
}

/// Key-prefix convention mapping keys to their merge policy: heartbeats are
/// max-counters, capability sets grow-only unions, embeddings blended
/// vectors, everything else a last-writer-wins register.
pub fn policy_for_key(key: &str, blend_alpha: f64) -> MergePolicy {
    if key.starts_with("hb/") {
        MergePolicy::MaxCounter
    } else if key.starts_with("cap/") {
        MergePolicy::GrowOnlySetUnion
    } else if key.starts_with("emb/") {
        MergePolicy::VectorBlend(blend_alpha)
    } else {
        MergePolicy::LwwRegister
    }
}

/// Last-writer-wins order: (created_tick, origin) with the higher origin
/// winning ties; seq breaks the remaining same-origin same-tick case so the
/// order is total.
fn lww_key(env: &Envelope) -> (Tick, AgentId, u64) {
    (env.created_tick, env.origin, env.seq)
}

/// One key's state.
#[derive(Debug, Clone)]
pub struct StoreEntry {
    /// The winning original envelope, signature intact, as received.
    pub envelope: Envelope,
    pub applied_tick: Tick,
    pub policy: MergePolicy,
    /// Local blended value for VectorBlend keys; reads see this, forwarding
    /// always ships the original envelope so signatures stay valid.
    pub blended: Option<Value>,
    /// All live contributions for GrowOnlySetUnion keys.
    pub contributions: Option<BTreeMap<EnvelopeId, Envelope>>,
}

impl StoreEntry {
    /// The value reads observe.
    pub fn effective_value(&self) -> &Value {
        self.blended.as_ref().unwrap_or(&self.envelope.value)
    }

    /// Element set for GrowOnlySetUnion keys.
    pub fn set_elements(&self) -> Option<std::collections::BTreeSet<&Value>> {
        self.contributions
            .as_ref()
            .map(|c| c.values().map(|e| &e.value).collect())
    }

    /// Content identity used by convergence checks: ignores local-only
    /// bookkeeping such as applied_tick.
    pub fn content_summary(&self) -> EntrySummary {
        EntrySummary {
            winner: self.envelope.id(),
            value: self.effective_value().clone(),
            elements: self
                .contributions
                .as_ref()
                .map(|c| c.values().map(|e| e.value.clone()).collect()),
            contribution_ids: self
                .contributions
                .as_ref()
                .map(|c| c.keys().copied().collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntrySummary {
    pub winner: EnvelopeId,
    pub value: Value,
    pub elements: Option<Vec<Value>>,
    pub contribution_ids: Option<Vec<EnvelopeId>>,
}

/// Result of applying a remote envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApplyOutcome {
    New,
    Updated,
    Stale,
    Rejected,
}

/// Exact per-origin coverage: a contiguous applied-or-expired prefix plus
/// applied sequence numbers above it (with created ticks, for expiry-floor
/// compaction).
#[derive(Debug, Clone, Default)]
struct OriginLog {
    prefix: u64,
    above: BTreeMap<u64, Tick>,
}

impl OriginLog {
    fn covers(&self, seq: u64) -> bool {
        seq <= self.prefix || self.above.contains_key(&seq)
    }

    fn record(&mut self, seq: u64, created: Tick) {
        if seq <= self.prefix {
            return;
        }
        self.above.insert(seq, created);
        while self.above.remove(&(self.prefix + 1)).is_some() {
            self.prefix += 1;
        }
    }

    fn max(&self) -> u64 {
        self.above.keys().next_back().copied().unwrap_or(0).max(self.prefix)
    }

    /// Advance the prefix over ranges old enough that any unseen id below
    /// them must have expired everywhere. Created ticks are monotone per
    /// origin, so an applied id older than the ceiling proves everything
    /// below it is dead.
    fn advance_floor(&mut self, now: Tick, round_len: u64, ttl_ceiling: u64) {
        let horizon = (ttl_ceiling + 1).saturating_mul(round_len);
        let floor = self
            .above
            .iter()
            .filter(|(_, created)| now.0.saturating_sub(created.0) >= horizon)
            .map(|(&seq, _)| seq)
            .next_back();
        if let Some(seq) = floor {
            if seq > self.prefix {
                self.prefix = seq;
                self.above = self.above.split_off(&(seq + 1));
            }
        }
    }

    fn adopt(&mut self, other: &OriginLog) {
        if other.prefix > self.prefix {
            self.prefix = other.prefix;
        }
        for (&seq, &created) in &other.above {
            self.record(seq, created);
        }
        self.above = self.above.split_off(&(self.prefix + 1));
        while self.above.remove(&(self.prefix + 1)).is_some() {
            self.prefix += 1;
        }
    }
}

/// One agent's semantic state.
#[derive(Debug, Clone)]
pub struct Store {
    pub owner: AgentId,
    entries: BTreeMap<String, StoreEntry>,
    next_seq: u64,
    knowledge: BTreeMap<AgentId, OriginLog>,
    blend_alpha: f64,
    /// Upper bound on any envelope ttl in the run; drives floor compaction.
    ttl_ceiling: u64,
}

impl Store {
    pub fn new(owner: AgentId, blend_alpha: f64, ttl_ceiling: u64) -> Self {
        assert!(blend_alpha > 0.0 && blend_alpha <= 1.0, "alpha must be in (0,1]");
        Store {
            owner,
            entries: BTreeMap::new(),
            next_seq: 1,
            knowledge: BTreeMap::new(),
            blend_alpha,
            ttl_ceiling,
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn get(&self, key: &str) -> Option<&StoreEntry> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    /// Create, apply, and return a locally originated update.
    pub fn put_local(
        &mut self,
        key: &str,
        value: Value,
        priority: PriorityClass,
        ttl_rounds: u64,
        now: Tick,
    ) -> Envelope {
        self.put_local_with(key, value, priority, ttl_rounds, now, |_| None)
    }

    /// Like `put_local`, but lets the caller attach a signature before the
    /// envelope is stored, so re-forwarded copies verify.
    pub fn put_local_with(
        &mut self,
        key: &str,
        value: Value,
        priority: PriorityClass,
        ttl_rounds: u64,
        now: Tick,
        sign: impl FnOnce(&Envelope) -> Option<Vec<u8>>,
    ) -> Envelope {
        assert!(ttl_rounds >= 1, "ttl_rounds must be >= 1");
        debug_assert!(ttl_rounds <= self.ttl_ceiling, "ttl above the run ceiling");
        let mut env = Envelope {
            origin: self.owner,
            seq: self.next_seq,
            key: key.to_string(),
            value,
            priority,
            created_tick: now,
            ttl_rounds,
            hop_count: 0,
            signature: None,
        };
        self.next_seq += 1;
        env.signature = sign(&env);
        let policy = policy_for_key(key, self.blend_alpha);
        let local = self.entries.get(key);
        let (entry, _) = merge_entry(local, &env, policy, now)
            .expect("local write must match the key's policy");
        self.entries.insert(key.to_string(), entry);
        self.knowledge
            .entry(env.origin)
            .or_default()
            .record(env.seq, env.created_tick);
        env
    }

    /// Apply a remote envelope through the key's merge policy.
    pub fn apply_remote(&mut self, env: &Envelope, now: Tick) -> ApplyOutcome {
        if self
            .knowledge
            .get(&env.origin)
            .is_some_and(|log| log.covers(env.seq))
        {
            return ApplyOutcome::Stale;
        }
        let policy = policy_for_key(&env.key, self.blend_alpha);
        let local = self.entries.get(&env.key);
        let merged = merge_entry(local, env, policy, now);
        let outcome = match merged {
            Err(_) => return ApplyOutcome::Rejected,
            Ok((entry, changed)) => {
                let fresh_key = local.is_none();
                self.entries.insert(env.key.clone(), entry);
                if fresh_key {
                    ApplyOutcome::New
                } else if changed {
                    ApplyOutcome::Updated
                } else {
                    ApplyOutcome::Stale
                }
            }
        };
        self.knowledge
            .entry(env.origin)
            .or_default()
            .record(env.seq, env.created_tick);
        outcome
    }

    /// Per-origin maxima over everything ever applied (or adopted).
    pub fn digest(&self) -> VersionVector {
        self.knowledge
            .iter()
            .map(|(&origin, log)| (origin, log.max()))
            .collect()
    }

    /// The conservative digest an agent advertises on the wire: contiguous
    /// prefixes only, so peers re-serve anything that may have been missed
    /// through reordering.
    pub fn advertised_digest(&self) -> VersionVector {
        self.knowledge
            .iter()
            .map(|(&origin, log)| (origin, log.prefix))
            .collect()
    }

    pub fn covers(&self, id: EnvelopeId) -> bool {
        self.knowledge.get(&id.0).is_some_and(|log| log.covers(id.1))
    }

    /// Is this envelope currently live here (forwardable as-is)?
    pub fn is_live(&self, env: &Envelope) -> bool {
        match self.entries.get(&env.key) {
            None => false,
            Some(entry) => match &entry.contributions {
                Some(c) => c.contains_key(&env.id()),
                None => entry.envelope.id() == env.id(),
            },
        }
    }

    fn live_envelopes(&self) -> impl Iterator<Item = &Envelope> {
        self.entries.values().flat_map(|entry| match &entry.contributions {
            Some(c) => itertools_either(c.values()),
            None => itertools_single(&entry.envelope),
        })
    }

    /// Live envelopes the remote digest does not cover, ordered by
    /// (priority desc, created asc, origin asc, seq asc) and truncated to
    /// `cap`. Selection is closed downward per origin: an envelope is only
    /// included if every lower live uncovered sequence from the same origin
    /// fits too, so capped deltas never create gaps at the receiver.
    pub fn entries_since(&self, remote_digest: &VersionVector, cap: usize) -> Vec<Envelope> {
        self.delta_since(remote_digest, cap).0
    }

    /// Like `entries_since`, also returning the adoptable coverage: this
    /// store's advertised prefix for every origin whose uncovered live
    /// envelopes were all served (origins with nothing to serve included).
    /// A receiver that applies the delta may adopt those prefixes — any id
    /// below them is now applied there, dominated by live content somewhere,
    /// or expired.
    pub fn delta_since(
        &self,
        remote_digest: &VersionVector,
        cap: usize,
    ) -> (Vec<Envelope>, VersionVector) {
        assert!(cap >= 1, "cap must be >= 1");
        let mut candidates: Vec<&Envelope> = self
            .live_envelopes()
            .filter(|e| !remote_digest.covers(e.origin, e.seq))
            .collect();
        candidates.sort_by(delta_order);
        let mut taken: Vec<&Envelope> = Vec::new();
        let mut taken_ids: std::collections::BTreeSet<EnvelopeId> =
            std::collections::BTreeSet::new();
        for cand in &candidates {
            if taken.len() >= cap {
                break;
            }
            if taken_ids.contains(&cand.id()) {
                continue;
            }
            let mut required: Vec<&Envelope> = candidates
                .iter()
                .filter(|e| {
                    e.origin == cand.origin
                        && e.seq < cand.seq
                        && !taken_ids.contains(&e.id())
                })
                .copied()
                .collect();
            required.push(cand);
            if taken.len() + required.len() <= cap {
                for e in required {
                    taken_ids.insert(e.id());
                    taken.push(e);
                }
            }
        }
        let mut unserved: std::collections::BTreeSet<AgentId> = std::collections::BTreeSet::new();
        for cand in &candidates {
            if !taken_ids.contains(&cand.id()) {
                unserved.insert(cand.origin);
            }
        }
        let adoptable: VersionVector = self
            .knowledge
            .iter()
            .filter(|(origin, _)| !unserved.contains(origin))
            .map(|(&origin, log)| (origin, log.prefix))
            .collect();
        taken.sort_by(delta_order);
        (taken.into_iter().cloned().collect(), adoptable)
    }

    /// Everything live here that `other_knowledge` does not cover exactly.
    /// Used by in-memory anti-entropy sessions, where both sides' exact
    /// coverage is available.
    fn entries_unknown_to(&self, other: &Store, cap: usize) -> Vec<Envelope> {
        let mut out: Vec<&Envelope> = self
            .live_envelopes()
            .filter(|e| !other.covers(e.id()))
            .collect();
        out.sort_by(delta_order);
        out.truncate(cap);
        out.into_iter().cloned().collect()
    }

    /// Drop entries whose age in completed rounds exceeds their ttl. The
    /// coverage record is not rolled back, so expired ids stay dead.
    pub fn expire(&mut self, now: Tick, round_len: u64) -> Vec<String> {
        let dead = |env: &Envelope| -> bool {
            now.0.saturating_sub(env.created_tick.0) / round_len > env.ttl_rounds
        };
        let mut removed = Vec::new();
        let keys: Vec<String> = self.entries.keys().cloned().collect();
        for key in keys {
            let entry = self.entries.get_mut(&key).expect("key just listed");
            let gone = match &mut entry.contributions {
                Some(contribs) => {
                    contribs.retain(|_, env| !dead(env));
                    contribs.is_empty()
                }
                None => dead(&entry.envelope),
            };
            if gone {
                self.entries.remove(&key);
                removed.push(key);
            }
        }
        for log in self.knowledge.values_mut() {
            log.advance_floor(now, round_len, self.ttl_ceiling);
        }
        removed
    }

    /// Merge the other store's exact coverage into this one. Only sound
    /// after this store has applied everything live at the other store:
    /// the remaining ids it would start covering are superseded or expired.
    pub fn adopt_knowledge(&mut self, other: &Store) {
        for (origin, log) in &other.knowledge {
            self.knowledge.entry(*origin).or_default().adopt(log);
        }
    }

    /// Adopt a peer's advertised contiguous prefixes after applying a
    /// complete delta from it: every id at or below the peer's prefix is
    /// now applied here, dominated by content just received, or expired.
    /// Ids in `keep_open` (e.g. claims held for corroboration) must remain
    /// uncovered, so the adopted prefix is clamped below them.
    pub fn adopt_prefixes(
        &mut self,
        advertised: &VersionVector,
        keep_open: &std::collections::BTreeSet<EnvelopeId>,
    ) {
        for (origin, prefix) in advertised.iter() {
            let mut limit = prefix;
            for &(o, seq) in keep_open.iter() {
                if o == origin && seq >= 1 {
                    limit = limit.min(seq - 1);
                }
            }
            let log = self.knowledge.entry(origin).or_default();
            if limit > log.prefix {
                log.prefix = limit;
                log.above = log.above.split_off(&(limit + 1));
                while log.above.remove(&(log.prefix + 1)).is_some() {
                    log.prefix += 1;
                }
            }
        }
    }

    /// Digest a baseline poll advertises: the conservative prefix, so
    /// infrequent polls also repair reordering gaps.
    pub fn wire_digest(&self) -> VersionVector {
        self.advertised_digest()
    }

    /// Value fingerprints for divergence measurement: vectors stay raw for
    /// cosine distance, everything else hashes to an opaque token.
    pub fn divergence_snapshot(&self, keys: Option<&[String]>) -> BTreeMap<String, DivergenceValue> {
        let mut out = BTreeMap::new();
        let mut add = |key: &str, entry: &StoreEntry| {
            let v = match entry.effective_value() {
                Value::Vector(xs) => DivergenceValue::Vector(xs.clone()),
                _ => DivergenceValue::Token(hash_entry(entry)),
            };
            out.insert(key.to_string(), v);
        };
        match keys {
            Some(keys) => {
                for key in keys {
                    if let Some(entry) = self.entries.get(key) {
                        add(key, entry);
                    }
                }
            }
            None => {
                for (key, entry) in &self.entries {
                    add(key, entry);
                }
            }
        }
        out
    }

    /// Content equality modulo local bookkeeping; the convergence oracle.
    pub fn content(&self) -> BTreeMap<String, EntrySummary> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.content_summary()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DivergenceValue {
    Token(u64),
    Vector(Vec<f64>),
}

fn hash_entry(entry: &StoreEntry) -> u64 {
    use crate::rng::mix64;
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let mut absorb = |bytes: &[u8]| {
        for &b in bytes {
            h = mix64(h ^ b as u64);
        }
    };
    match entry.set_elements() {
        Some(elements) => {
            for v in elements {
                absorb(&value_bytes(v));
            }
        }
        None => absorb(&value_bytes(entry.effective_value())),
    }
    h
}

fn value_bytes(v: &Value) -> Vec<u8> {
    // Reuse the canonical value encoding through a throwaway envelope field.
    let mut out = Vec::new();
    match v {
        Value::Scalar(x) => {
            out.push(0);
            out.extend_from_slice(&x.to_bits().to_be_bytes());
        }
        Value::Fact(a, b, c) => {
            out.push(1);
            for s in [a, b, c] {
                out.extend_from_slice(&(s.len() as u32).to_be_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
        Value::Vector(xs) => {
            out.push(2);
            for x in xs {
                out.extend_from_slice(&x.to_bits().to_be_bytes());
            }
        }
        Value::Counter(n) => {
            out.push(3);
            out.extend_from_slice(&n.to_be_bytes());
        }
    }
    out
}

fn delta_order(a: &&Envelope, b: &&Envelope) -> std::cmp::Ordering {
    b.priority
        .cmp(&a.priority)
        .then(a.created_tick.cmp(&b.created_tick))
        .then(a.origin.cmp(&b.origin))
        .then(a.seq.cmp(&b.seq))
}

// Small iterator helpers to avoid boxing in live_envelopes.
enum EitherIter<A, B> {
    A(A),
    B(B),
}

impl<T, A: Iterator<Item = T>, B: Iterator<Item = T>> Iterator for EitherIter<A, B> {
    type Item = T;
    fn next(&mut self) -> Option<T> {
        match self {
            EitherIter::A(it) => it.next(),
            EitherIter::B(it) => it.next(),
        }
    }
}

fn itertools_either<'a>(
    it: std::collections::btree_map::Values<'a, EnvelopeId, Envelope>,
) -> EitherIter<
    std::collections::btree_map::Values<'a, EnvelopeId, Envelope>,
    std::iter::Once<&'a Envelope>,
> {
    EitherIter::A(it)
}

fn itertools_single(
    env: &Envelope,
) -> EitherIter<
    std::collections::btree_map::Values<'_, EnvelopeId, Envelope>,
    std::iter::Once<&Envelope>,
> {
    EitherIter::B(std::iter::once(env))
}

/// Merge a remote envelope against the local entry for its key.
///
/// LwwRegister keeps the greater (created_tick, origin, seq); MaxCounter the
/// numerically greater counter; GrowOnlySetUnion unions elements;
/// VectorBlend convexly blends the stored vector toward a remote LWW winner
/// while keeping the winner's envelope for forwarding. Returns the new entry
/// and whether stored value or metadata changed.
pub fn merge_entry(
    local: Option<&StoreEntry>,
    remote: &Envelope,
    policy: MergePolicy,
    now: Tick,
) -> Result<(StoreEntry, bool)> {
    let confusion = || Error::TypeConfusion { key: remote.key.clone() };
    match policy {
        MergePolicy::MaxCounter if !matches!(remote.value, Value::Counter(_)) => {
            return Err(confusion());
        }
        MergePolicy::VectorBlend(_) if !matches!(remote.value, Value::Vector(_)) => {
            return Err(confusion());
        }
        _ => {}
    }
    let fresh = |blended: Option<Value>, contributions| StoreEntry {
        envelope: remote.clone(),
        applied_tick: now,
        policy,
        blended,
        contributions,
    };
    let Some(local) = local else {
        let contributions = matches!(policy, MergePolicy::GrowOnlySetUnion).then(|| {
            let mut c = BTreeMap::new();
            c.insert(remote.id(), remote.clone());
            c
        });
        return Ok((fresh(None, contributions), true));
    };
    debug_assert_eq!(local.envelope.key, remote.key);
    match policy {
        MergePolicy::LwwRegister => {
            if lww_key(remote) > lww_key(&local.envelope) {
                Ok((fresh(None, None), true))
            } else {
                Ok((local.clone(), false))
            }
        }
        MergePolicy::MaxCounter => {
            let local_n = match local.envelope.value {
                Value::Counter(n) => n,
                _ => return Err(confusion()),
            };
            let remote_n = match remote.value {
                Value::Counter(n) => n,
                _ => unreachable!("variant checked above"),
            };
            // Equal counters fall back to the LWW order so the surviving
            // envelope is arrival-order independent.
            if (remote_n, lww_key(remote)) > (local_n, lww_key(&local.envelope)) {
                Ok((fresh(None, None), true))
            } else {
                Ok((local.clone(), false))
            }
        }
        MergePolicy::GrowOnlySetUnion => {
            let mut entry = local.clone();
            let contribs = entry.contributions.get_or_insert_with(BTreeMap::new);
            let had_value = contribs.values().any(|e| e.value == remote.value);
            contribs.insert(remote.id(), remote.clone());
            // Deterministic representative: the smallest contribution id.
            if remote.id() < entry.envelope.id() {
                entry.envelope = remote.clone();
            }
            Ok((entry, !had_value))
        }
        MergePolicy::VectorBlend(alpha) => {
            if lww_key(remote) <= lww_key(&local.envelope) {
                return Ok((local.clone(), false));
            }
            let local_vec = match local.effective_value() {
                Value::Vector(xs) => xs.clone(),
                _ => return Err(confusion()),
            };
            let remote_vec = match &remote.value {
                Value::Vector(xs) => xs,
                _ => unreachable!("variant checked above"),
            };
            if local_vec.len() != remote_vec.len() {
                return Err(confusion());
            }
            let blended: Vec<f64> = local_vec
                .iter()
                .zip(remote_vec.iter())
                .map(|(l, r)| (1.0 - alpha) * l + alpha * r)
                .collect();
            let mut entry = fresh(None, None);
            if alpha < 1.0 {
                entry.blended = Some(Value::Vector(blended));
            }
            Ok((entry, true))
        }
    }
}

/// Statistics from one anti-entropy session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SessionStats {
    /// Digest exchanges performed (iterations of the loop).
    pub rounds_of_exchange: u64,
    /// Non-empty delta messages sent, both directions combined.
    pub delta_messages: u64,
    /// Envelopes carried by those deltas.
    pub envelopes_moved: u64,
}

impl SessionStats {
    pub fn messages_exchanged(&self) -> u64 {
        2 * self.rounds_of_exchange + self.delta_messages
    }
}

/// Reconcile two stores completely: iterate digest/delta exchanges until
/// neither side has anything the other lacks, then merge coverage so both
/// digests agree. Terminates because every delta strictly grows receiver
/// coverage, bounded by the union of both stores.
pub fn anti_entropy_session(a: &mut Store, b: &mut Store, delta_cap: usize) -> SessionStats {
    let mut stats = SessionStats::default();
    loop {
        stats.rounds_of_exchange += 1;
        let to_b = a.entries_unknown_to(b, delta_cap);
        let to_a = b.entries_unknown_to(a, delta_cap);
        if to_b.is_empty() && to_a.is_empty() {
            break;
        }
        for (delta, dst) in [(&to_b, &mut *b), (&to_a, &mut *a)] {
            if delta.is_empty() {
                continue;
            }
            stats.delta_messages += 1;
            stats.envelopes_moved += delta.len() as u64;
            let mut sorted: Vec<&Envelope> = delta.iter().collect();
            sorted.sort_by_key(|e| e.id());
            for env in sorted {
                dst.apply_remote(env, env.created_tick.max(Tick(0)));
            }
        }
    }
    a.adopt_knowledge(b);
    b.adopt_knowledge(a);
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    const ALPHA: f64 = 1.0;
    const CEILING: u64 = 64;

    fn store(owner: u64) -> Store {
        Store::new(AgentId(owner), ALPHA, CEILING)
    }

    fn scalar_env(origin: u64, seq: u64, key: &str, x: f64, tick: u64) -> Envelope {
        Envelope {
            origin: AgentId(origin),
            seq,
            key: key.into(),
            value: Value::Scalar(x),
            priority: PriorityClass::Routine,
            created_tick: Tick(tick),
            ttl_rounds: 32,
            hop_count: 0,
            signature: None,
        }
    }

    #[test]
    fn put_local_records_the_factory_fact() {
        let mut s = store(3);
        let env = s.put_local(
            "defect/WS4",
            Value::Fact("defect_spike".into(), "WS4".into(), "high_severity".into()),
            PriorityClass::Critical,
            16,
            Tick(100),
        );
        assert_eq!(env.origin, AgentId(3));
        assert_eq!(env.seq, 1);
        assert_eq!(env.created_tick, Tick(100));
        assert_eq!(
            s.get("defect/WS4").unwrap().effective_value(),
            &Value::Fact("defect_spike".into(), "WS4".into(), "high_severity".into())
        );
    }

    #[test]
    fn successive_puts_increment_seq() {
        let mut s = store(1);
        let a = s.put_local("a", Value::Scalar(1.0), PriorityClass::Routine, 8, Tick(0));
        let b = s.put_local("b", Value::Scalar(2.0), PriorityClass::Routine, 8, Tick(0));
        assert_eq!((a.seq, b.seq), (1, 2));
    }

    #[test]
    fn lww_tie_break_prefers_the_higher_origin() {
        let local_env = scalar_env(2, 1, "k", 1.0, 5);
        let (local, _) =
            merge_entry(None, &local_env, MergePolicy::LwwRegister, Tick(5)).unwrap();
        let remote = scalar_env(9, 1, "k", 2.0, 5);
        let (entry, changed) =
            merge_entry(Some(&local), &remote, MergePolicy::LwwRegister, Tick(6)).unwrap();
        assert!(changed);
        assert_eq!(entry.envelope.origin, AgentId(9));
    }

    #[test]
    fn max_counter_keeps_the_larger_value_unchanged() {
        let mut local_env = scalar_env(1, 1, "hb/1", 0.0, 0);
        local_env.value = Value::Counter(7);
        let (local, _) = merge_entry(None, &local_env, MergePolicy::MaxCounter, Tick(0)).unwrap();
        let mut remote = scalar_env(1, 2, "hb/1", 0.0, 1);
        remote.value = Value::Counter(3);
        let (entry, changed) =
            merge_entry(Some(&local), &remote, MergePolicy::MaxCounter, Tick(1)).unwrap();
        assert!(!changed);
        assert_eq!(entry.envelope.value, Value::Counter(7));
    }

    #[test]
    fn type_confusion_is_rejected() {
        let env = scalar_env(1, 1, "hb/1", 0.5, 0);
        assert!(merge_entry(None, &env, MergePolicy::MaxCounter, Tick(0)).is_err());
        let mut s = store(2);
        assert_eq!(s.apply_remote(&env, Tick(0)), ApplyOutcome::Rejected);
        // A rejected envelope must stay applicable in corrected form later.
        assert!(!s.covers(env.id()));
    }

    #[test]
    fn fresh_store_apply_is_new_and_reapply_is_stale() {
        let mut s = store(2);
        let env = scalar_env(1, 5, "k", 1.0, 0);
        assert_eq!(s.apply_remote(&env, Tick(1)), ApplyOutcome::New);
        assert_eq!(s.apply_remote(&env, Tick(2)), ApplyOutcome::Stale);
    }

    #[test]
    fn reordered_gap_is_still_applicable() {
        let mut s = store(2);
        assert_eq!(s.apply_remote(&scalar_env(1, 5, "a", 1.0, 10), Tick(10)), ApplyOutcome::New);
        // Sequence 3 from the same origin arrives later; the max-style digest
        // would call it covered, exact knowledge does not.
        assert_eq!(s.apply_remote(&scalar_env(1, 3, "b", 2.0, 5), Tick(11)), ApplyOutcome::New);
        assert_eq!(s.digest().get(AgentId(1)), 5);
        assert_eq!(s.advertised_digest().get(AgentId(1)), 0);
        assert_eq!(s.apply_remote(&scalar_env(1, 1, "c", 3.0, 1), Tick(12)), ApplyOutcome::New);
        assert_eq!(s.advertised_digest().get(AgentId(1)), 1);
    }

    fn random_envelopes(rng: &mut Rng, count: usize) -> Vec<Envelope> {
        let keys = ["k/a", "k/b", "hb/7", "cap/t", "k/c"];
        let mut seqs: BTreeMap<u64, u64> = BTreeMap::new();
        (0..count)
            .map(|_| {
                let origin = rng.below(4) + 1;
                let seq = {
                    let s = seqs.entry(origin).or_insert(0);
                    *s += 1;
                    *s
                };
                let key = keys[rng.below(keys.len() as u64) as usize];
                let tick = rng.below(50);
                let mut env = scalar_env(origin, seq, key, rng.next_f64(), tick);
                if key.starts_with("hb/") {
                    env.value = Value::Counter(rng.below(100));
                } else if key.starts_with("cap/") {
                    env.value = Value::Fact(
                        "cap".into(),
                        format!("t{}", rng.below(3)),
                        "v".into(),
                    );
                }
                env
            })
            .collect()
    }

    #[test]
    fn all_orderings_of_three_envelopes_converge() {
        let mut rng = Rng::new(42);
        for _ in 0..50 {
            let envs = random_envelopes(&mut rng, 3);
            let mut reference: Option<BTreeMap<String, EntrySummary>> = None;
            // Brute force every permutation of three.
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            for perm in perms {
                let mut s = store(9);
                for &i in &perm {
                    s.apply_remote(&envs[i], Tick(100));
                }
                let content = s.content();
                match &reference {
                    None => reference = Some(content),
                    Some(r) => assert_eq!(r, &content),
                }
            }
        }
    }

    #[test]
    fn five_hundred_random_shuffles_of_ten_converge() {
        let mut rng = Rng::new(7);
        let envs = random_envelopes(&mut rng, 10);
        let mut reference: Option<(BTreeMap<String, EntrySummary>, VersionVector)> = None;
        for _ in 0..500 {
            let mut order: Vec<usize> = (0..envs.len()).collect();
            rng.shuffle(&mut order);
            let mut s = store(9);
            for &i in &order {
                s.apply_remote(&envs[i], Tick(100));
            }
            let got = (s.content(), s.digest());
            match &reference {
                None => reference = Some(got),
                Some(r) => assert_eq!(r, &got),
            }
        }
    }

    #[test]
    fn two_stores_with_fifty_envelopes_in_different_orders_agree() {
        let mut rng = Rng::new(11);
        let envs = random_envelopes(&mut rng, 50);
        let mut forward = store(8);
        let mut backward = store(9);
        for env in &envs {
            forward.apply_remote(env, Tick(200));
        }
        for env in envs.iter().rev() {
            backward.apply_remote(env, Tick(200));
        }
        assert_eq!(forward.content(), backward.content());
        assert_eq!(forward.digest(), backward.digest());
    }

    #[test]
    fn entries_since_converged_is_empty_and_empty_digest_gets_critical_first() {
        let mut s = store(1);
        s.put_local("x", Value::Scalar(1.0), PriorityClass::Routine, 8, Tick(0));
        s.put_local("y", Value::Scalar(2.0), PriorityClass::Critical, 8, Tick(5));
        assert!(s.entries_since(&s.digest(), 16).is_empty());
        let all = s.entries_since(&VersionVector::new(), 16);
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].priority, PriorityClass::Critical);
    }

    #[test]
    fn entries_since_closes_origin_sequences_downward() {
        let mut s = store(1);
        // Same origin: an old Routine then a fresh Critical.
        s.apply_remote(&scalar_env(4, 1, "a", 1.0, 0), Tick(0));
        let mut critical = scalar_env(4, 2, "b", 2.0, 10);
        critical.priority = PriorityClass::Critical;
        s.apply_remote(&critical, Tick(10));
        // Cap of 1 cannot carry the Critical without its predecessor; the
        // predecessor alone is served instead.
        let delta = s.entries_since(&VersionVector::new(), 1);
        assert_eq!(delta.len(), 1);
        assert_eq!(delta[0].id(), (AgentId(4), 1));
        let both = s.entries_since(&VersionVector::new(), 2);
        assert_eq!(both.len(), 2);
        assert_eq!(both[0].priority, PriorityClass::Critical);
    }

    #[test]
    fn applying_deltas_closes_the_digest_difference() {
        let mut rng = Rng::new(13);
        for _ in 0..100 {
            let envs = random_envelopes(&mut rng, 12);
            let mut a = store(8);
            let mut b = store(9);
            for (i, env) in envs.iter().enumerate() {
                a.apply_remote(env, Tick(100));
                if i % 3 == 0 {
                    b.apply_remote(env, Tick(100));
                }
            }
            let stats = anti_entropy_session(&mut a, &mut b, 4);
            assert!(stats.rounds_of_exchange >= 1);
            assert_eq!(a.content(), b.content());
            assert_eq!(a.digest(), b.digest());
            assert!(crate::version::vv_missing(&a.digest(), &b.digest()).is_empty());
        }
    }

    #[test]
    fn identical_stores_need_one_digest_exchange_and_move_nothing() {
        let mut a = store(1);
        a.put_local("x", Value::Scalar(1.0), PriorityClass::Routine, 8, Tick(0));
        let mut b = a.clone();
        b.owner = AgentId(2);
        let stats = anti_entropy_session(&mut a, &mut b, 4);
        assert_eq!(stats.rounds_of_exchange, 1);
        assert_eq!(stats.envelopes_moved, 0);
    }

    #[test]
    fn disjoint_stores_of_five_each_need_at_least_four_deltas() {
        let mut a = store(1);
        let mut b = store(2);
        for i in 0..5 {
            a.put_local(&format!("a{i}"), Value::Scalar(i as f64), PriorityClass::Routine, 8, Tick(i));
            b.put_local(&format!("b{i}"), Value::Scalar(i as f64), PriorityClass::Routine, 8, Tick(i));
        }
        let stats = anti_entropy_session(&mut a, &mut b, 3);
        assert_eq!(a.entry_count(), 10);
        assert_eq!(b.entry_count(), 10);
        assert!(stats.delta_messages >= 4, "deltas: {}", stats.delta_messages);
        assert_eq!(a.content(), b.content());
    }

    #[test]
    fn expiry_boundary_is_inclusive_on_the_ttl() {
        let mut s = store(1);
        s.put_local("x", Value::Scalar(1.0), PriorityClass::Routine, 2, Tick(0));
        assert!(s.expire(Tick(20), 10).is_empty(), "exactly 2 rounds is retained");
        let gone = s.expire(Tick(30), 10);
        assert_eq!(gone, vec!["x".to_string()], "3 rounds exceeds ttl 2");
        assert!(s.get("x").is_none());
    }

    #[test]
    fn regossipped_expired_envelope_stays_stale() {
        let mut a = store(1);
        let env = a.put_local("x", Value::Scalar(1.0), PriorityClass::Routine, 2, Tick(0));
        a.expire(Tick(30), 10);
        assert_eq!(a.apply_remote(&env, Tick(31)), ApplyOutcome::Stale);
        assert!(a.get("x").is_none(), "no resurrection");
    }

    #[test]
    fn digest_only_grows() {
        let mut rng = Rng::new(21);
        let mut s = store(3);
        let mut prev = s.digest();
        for env in random_envelopes(&mut rng, 40) {
            s.apply_remote(&env, Tick(50));
            let next = s.digest();
            assert!(crate::version::vv_missing(&next, &prev).is_empty());
            prev = next;
        }
    }

    #[test]
    fn vector_blend_with_partial_alpha_blends_toward_the_winner() {
        let mk = |origin: u64, seq: u64, tick: u64, xs: Vec<f64>| Envelope {
            origin: AgentId(origin),
            seq,
            key: "emb/x".into(),
            value: Value::Vector(xs),
            priority: PriorityClass::Routine,
            created_tick: Tick(tick),
            ttl_rounds: 32,
            hop_count: 0,
            signature: None,
        };
        let policy = MergePolicy::VectorBlend(0.5);
        let (local, _) = merge_entry(None, &mk(1, 1, 0, vec![0.0, 0.0]), policy, Tick(0)).unwrap();
        let (entry, changed) =
            merge_entry(Some(&local), &mk(2, 1, 5, vec![1.0, 2.0]), policy, Tick(5)).unwrap();
        assert!(changed);
        assert_eq!(entry.effective_value(), &Value::Vector(vec![0.5, 1.0]));
        // The forwardable envelope is the untouched winner.
        assert_eq!(entry.envelope.value, Value::Vector(vec![1.0, 2.0]));
        // A losing remote changes nothing.
        let (same, changed) =
            merge_entry(Some(&entry), &mk(1, 2, 1, vec![9.0, 9.0]), policy, Tick(6)).unwrap();
        assert!(!changed);
        assert_eq!(same.effective_value(), entry.effective_value());
    }

    #[test]
    fn grow_only_set_union_accumulates_distinct_values() {
        let mut s = store(1);
        let mut e1 = scalar_env(2, 1, "cap/t", 0.0, 0);
        e1.value = Value::Fact("cap".into(), "lift".into(), "v".into());
        let mut e2 = scalar_env(3, 1, "cap/t", 0.0, 1);
        e2.value = Value::Fact("cap".into(), "scan".into(), "v".into());
        assert_eq!(s.apply_remote(&e1, Tick(0)), ApplyOutcome::New);
        assert_eq!(s.apply_remote(&e2, Tick(1)), ApplyOutcome::Updated);
        assert_eq!(s.get("cap/t").unwrap().set_elements().unwrap().len(), 2);
        // A new contribution with an already-present value is Stale but is
        // still recorded for forwarding.
        let mut e3 = scalar_env(4, 1, "cap/t", 0.0, 2);
        e3.value = Value::Fact("cap".into(), "lift".into(), "v".into());
        assert_eq!(s.apply_remote(&e3, Tick(2)), ApplyOutcome::Stale);
        assert!(s.is_live(&e3));
    }
}
