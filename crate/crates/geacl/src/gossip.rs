//! Per-round gossip in push, pull, and push-pull modes; rumor-mongering with
//! counter-based suppression; the per-agent protocol state machine that ties
//! the store, view, trust, and health layers together.

use crate::envelope::{AgentId, Envelope, EnvelopeId, PriorityClass, Tick};
use crate::filter::{select_for_message, FilterPolicy};
use crate::health::{emit_heartbeat, HealthConfig, HealthMonitor, SuspicionState};
use crate::rng::Rng;
use crate::store::{ApplyOutcome, Store};
use crate::trace::RoundCounters;
use crate::trust::{
    effective_scores, reputation_key, verify_envelope, CorroborationGate, CorroborationPolicy,
    GateDecision, KeyRegistry, ReputationEvent, ReputationTable, Signer, VerifyOutcome,
};
use crate::version::VersionVector;
use crate::view::{
    select_peers, shuffle_initiate, shuffle_merge, shuffle_respond, PartialView, ViewEntry,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GossipMode {
    Push,
    Pull,
    PushPull,
    AntiEntropyOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GossipConfig {
    pub mode: GossipMode,
    pub fanout: usize,
    /// Ticks per gossip round.
    pub round_len: u64,
    /// Duplicate receipts before a rumor deactivates.
    pub suppression_k: u64,
    /// Max envelopes per message (Critical overflow excepted).
    pub delta_cap: usize,
    /// Suppression threshold multiplier for Critical rumors.
    pub critical_suppression_multiplier: u64,
    /// Every this many rounds, one fanout slot becomes a digest exchange
    /// with a uniformly chosen peer.
    pub anti_entropy_every: u64,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig {
            mode: GossipMode::PushPull,
            fanout: 1,
            round_len: 10,
            suppression_k: 2,
            delta_cap: 16,
            critical_suppression_multiplier: 4,
            anti_entropy_every: 10,
        }
    }
}

impl GossipConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.fanout < 1
            || self.round_len < 1
            || self.suppression_k < 1
            || self.delta_cap < 1
            || self.critical_suppression_multiplier < 1
            || self.anti_entropy_every < 1
        {
            return Err("gossip counts must all be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    pub capacity: usize,
    pub shuffle_len: usize,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig { capacity: 8, shuffle_len: 3 }
    }
}

/// Rumor lifecycle for one envelope id.
#[derive(Debug, Clone)]
pub struct RumorState {
    pub envelope_id: EnvelopeId,
    pub key: String,
    pub priority: PriorityClass,
    pub duplicate_receipts: u64,
    pub active: bool,
    pub first_seen_tick: Tick,
    pub distinct_first_senders: BTreeSet<AgentId>,
}

impl RumorState {
    fn threshold(&self, config: &GossipConfig) -> u64 {
        if self.priority == PriorityClass::Critical {
            config.suppression_k * config.critical_suppression_multiplier
        } else {
            config.suppression_k
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GossipBody {
    Rumor { envelopes: Vec<Envelope> },
    /// Ordinary requests carry the max digest (exact fresh misses); repair
    /// requests carry the contiguous-prefix digest so reordering gaps get
    /// re-served.
    DigestRequest { digest: VersionVector, repair: bool },
    /// Digest-driven reply. `adoptable` carries the sender's contiguous
    /// coverage for every origin it served fully; it is only populated when
    /// the request exposed the receiver's true contiguous coverage (repair
    /// requests), which is what makes adopting it sound.
    Delta { envelopes: Vec<Envelope>, adoptable: VersionVector },
    PushPullExchange { envelopes: Vec<Envelope>, digest: VersionVector },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GossipMessage {
    pub sender: AgentId,
    pub body: GossipBody,
}

impl GossipMessage {
    pub fn kind(&self) -> crate::trace::MsgKind {
        match self.body {
            GossipBody::Rumor { .. } => crate::trace::MsgKind::Rumor,
            GossipBody::DigestRequest { .. } => crate::trace::MsgKind::DigestRequest,
            GossipBody::Delta { .. } => crate::trace::MsgKind::Delta,
            GossipBody::PushPullExchange { .. } => crate::trace::MsgKind::PushPullExchange,
        }
    }

    pub fn envelopes(&self) -> &[Envelope] {
        match &self.body {
            GossipBody::Rumor { envelopes }
            | GossipBody::Delta { envelopes, .. }
            | GossipBody::PushPullExchange { envelopes, .. } => envelopes,
            GossipBody::DigestRequest { .. } => &[],
        }
    }

    pub fn wire_len(&self) -> u64 {
        let header = 9; // kind tag + sender
        let envs: u64 = 4 + self.envelopes().iter().map(Envelope::wire_len).sum::<u64>();
        let digest = match &self.body {
            GossipBody::DigestRequest { digest, .. }
            | GossipBody::PushPullExchange { digest, .. } => digest.wire_len(),
            GossipBody::Delta { adoptable, .. } => adoptable.wire_len(),
            _ => 0,
        };
        header + envs + digest
    }
}

/// Simulated transport payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Gossip(GossipMessage),
    ShuffleRequest { sample: Vec<ViewEntry> },
    ShuffleReply { sample: Vec<ViewEntry> },
}

impl Payload {
    pub fn kind(&self) -> crate::trace::MsgKind {
        match self {
            Payload::Gossip(m) => m.kind(),
            Payload::ShuffleRequest { .. } => crate::trace::MsgKind::ShuffleRequest,
            Payload::ShuffleReply { .. } => crate::trace::MsgKind::ShuffleReply,
        }
    }

    pub fn wire_len(&self) -> u64 {
        match self {
            Payload::Gossip(m) => m.wire_len(),
            Payload::ShuffleRequest { sample } | Payload::ShuffleReply { sample } => {
                9 + 4 + 16 * sample.len() as u64
            }
        }
    }

    pub fn envelope_count(&self) -> u64 {
        match self {
            Payload::Gossip(m) => m.envelopes().len() as u64,
            _ => 0,
        }
    }
}

/// Reputation gossip settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationSettings {
    pub enabled: bool,
    pub publish_every: u64,
    pub bias_selection: bool,
}

impl Default for ReputationSettings {
    fn default() -> Self {
        ReputationSettings { enabled: false, publish_every: 5, bias_selection: false }
    }
}

/// Everything the protocol handlers need from the run configuration.
pub struct Params<'a> {
    pub gossip: &'a GossipConfig,
    pub view: &'a ViewConfig,
    pub filter: &'a FilterPolicy,
    pub health: &'a HealthConfig,
    pub signing: bool,
    pub registry: Option<&'a KeyRegistry>,
    pub corroboration: Option<&'a CorroborationPolicy>,
    pub reputation: &'a ReputationSettings,
    pub tracked: &'a BTreeSet<String>,
}

impl Params<'_> {
    pub fn round_len(&self) -> u64 {
        self.gossip.round_len
    }
}

/// Corroboration trace notes produced by a handler call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorrNote {
    Held(EnvelopeId),
    Committed(EnvelopeId),
    Expired(EnvelopeId),
}

/// Everything one handler call wants the engine to do or record.
#[derive(Debug, Default)]
pub struct Effects {
    pub outbox: Vec<(AgentId, Payload, bool)>,
    pub commits: Vec<Envelope>,
    pub tracked_applies: Vec<(String, EnvelopeId, ApplyOutcome, EnvelopeId)>,
    pub counters: RoundCounters,
    pub verify_failures: Vec<(AgentId, AgentId)>,
    pub corroboration: Vec<CorrNote>,
    pub transitions: Vec<(AgentId, SuspicionState)>,
    pub isolated: bool,
}

/// One simulated agent's protocol state.
#[derive(Debug)]
pub struct Agent {
    pub id: AgentId,
    pub store: Store,
    pub view: PartialView,
    pub rumors: BTreeMap<EnvelopeId, RumorState>,
    pub gate: CorroborationGate,
    pub reputation: ReputationTable,
    pub monitor: HealthMonitor,
    pub signer: Option<Signer>,
    pub rng: Rng,
    pub alive: bool,
    pub round: u64,
    pending_shuffle: Option<Vec<ViewEntry>>,
}

impl Agent {
    pub fn new(id: AgentId, store: Store, view: PartialView, signer: Option<Signer>, rng: Rng) -> Self {
        Agent {
            id,
            store,
            view,
            rumors: BTreeMap::new(),
            gate: CorroborationGate::default(),
            reputation: ReputationTable::default(),
            monitor: HealthMonitor::default(),
            signer,
            rng,
            alive: true,
            round: 0,
            pending_shuffle: None,
        }
    }

    /// Local write that also starts rumor-mongering the new envelope.
    pub fn put_local(
        &mut self,
        key: &str,
        value: crate::envelope::Value,
        priority: PriorityClass,
        ttl_rounds: u64,
        now: Tick,
    ) -> Envelope {
        let signer = self.signer.clone();
        let env = self.store.put_local_with(key, value, priority, ttl_rounds, now, |e| {
            signer.as_ref().map(|s| s.sign(&e.canonical_bytes()))
        });
        self.activate_rumor(&env, now, None);
        env
    }

    fn activate_rumor(&mut self, env: &Envelope, now: Tick, first_sender: Option<AgentId>) {
        let state = RumorState {
            envelope_id: env.id(),
            key: env.key.clone(),
            priority: env.priority,
            duplicate_receipts: 0,
            active: true,
            first_seen_tick: now,
            distinct_first_senders: first_sender.into_iter().collect(),
        };
        self.rumors.insert(env.id(), state);
    }

    /// Currently forwardable rumors: active and still live in the store.
    /// Rumors whose envelope was superseded or expired deactivate here.
    fn active_rumor_envelopes(&mut self) -> Vec<Envelope> {
        let mut out = Vec::new();
        for rumor in self.rumors.values_mut() {
            if !rumor.active {
                continue;
            }
            let live = self
                .store
                .get(&rumor.key)
                .map(|entry| match entry.contributions.as_ref() {
                    Some(c) => c.get(&rumor.envelope_id).cloned(),
                    None => (entry.envelope.id() == rumor.envelope_id)
                        .then(|| entry.envelope.clone()),
                })
                .unwrap_or(None);
            match live {
                Some(env) => out.push(env),
                None => rumor.active = false,
            }
        }
        out
    }
}

/// Run one agent's gossip round: expiry, heartbeat, health check, reputation
/// publication, one shuffle, then fanout-bounded mode traffic. `reachable`
/// restricts partner choice for opportunistic-contact scenarios.
pub fn agent_round(
    agent: &mut Agent,
    params: &Params<'_>,
    now: Tick,
    reachable: Option<&BTreeSet<AgentId>>,
) -> Effects {
    let mut fx = Effects::default();
    let round_len = params.round_len();
    let round = now.0 / round_len;
    agent.round = round;

    agent.store.expire(now, round_len);

    if let Some(policy) = params.corroboration {
        for claim in agent.gate.sweep_expired(policy, now, round_len) {
            fx.counters.corroboration_expired += 1;
            fx.corroboration.push(CorrNote::Expired(claim.envelope.id()));
            if claim.senders.len() == 1 {
                let sole = *claim.senders.iter().next().expect("len checked");
                agent
                    .reputation
                    .update(sole, ReputationEvent::CorroborationExpiredAsSoleSource);
            }
        }
    }

    if params.health.heartbeats_enabled {
        let signer = agent.signer.clone();
        let hb = emit_heartbeat(&mut agent.store, round, now, params.health, |e| {
            signer.as_ref().map(|s| s.sign(&e.canonical_bytes()))
        });
        agent.activate_rumor(&hb, now, None);
    }

    if params.reputation.enabled && round > 0 && round % params.reputation.publish_every == 0 {
        let observed: Vec<(AgentId, f64)> = agent.reputation.observed().collect();
        for (subject, score) in observed {
            agent.put_local(
                &reputation_key(agent.id, subject),
                crate::envelope::Value::Scalar(score),
                PriorityClass::Routine,
                params.filter.default_ttl(PriorityClass::Routine),
                now,
            );
        }
    }

    fx.transitions = agent
        .monitor
        .check_peers(agent.id, &agent.store, round, now, params.health);

    // One shuffle per round. An unreachable target simply gets no message;
    // staleness is purged by age-based replacement.
    if !agent.view.is_empty() {
        if let Ok((target, sample)) =
            shuffle_initiate(&mut agent.view, params.view.shuffle_len, &mut agent.rng)
        {
            if reachable.is_none_or(|r| r.contains(&target)) {
                agent.pending_shuffle = Some(sample.clone());
                fx.outbox.push((target, Payload::ShuffleRequest { sample }, false));
            }
        }
    }

    let candidates: Vec<AgentId> = agent
        .view
        .peers()
        .filter(|p| reachable.is_none_or(|r| r.contains(p)))
        .collect();
    if candidates.is_empty() {
        fx.isolated = true;
        fx.counters.isolated_rounds += 1;
        return fx;
    }

    let weights = (params.reputation.enabled && params.reputation.bias_selection)
        .then(|| effective_scores(&agent.store, candidates.iter().copied()));
    let mut partners = sample_candidates(
        &candidates,
        params.gossip.fanout,
        &mut agent.rng,
        weights.as_ref(),
    );

    // Periodic anti-entropy repair: one slot becomes a digest exchange with
    // a uniformly chosen peer. Repair requests advertise the conservative
    // contiguous-prefix digest, so anything that may have been missed
    // through reordering gets re-served; the per-round digests below use
    // exact maxima and carry only fresh misses.
    if round > 0 && round % params.gossip.anti_entropy_every == 0 {
        let repair = candidates[agent.rng.below(candidates.len() as u64) as usize];
        partners.truncate(params.gossip.fanout.saturating_sub(1));
        fx.outbox.push((
            repair,
            Payload::Gossip(GossipMessage {
                sender: agent.id,
                body: GossipBody::DigestRequest {
                    digest: agent.store.advertised_digest(),
                    repair: true,
                },
            }),
            false,
        ));
        partners.retain(|p| *p != repair);
    }

    if !partners.is_empty() {
        let selection = select_for_message(
            &agent.active_rumor_envelopes().iter().collect::<Vec<_>>(),
            params.gossip.delta_cap,
            now,
            round_len,
            params.filter,
        );
        for peer in partners {
            let body = match params.gossip.mode {
                GossipMode::Push => {
                    if selection.envelopes.is_empty() {
                        continue;
                    }
                    fx.counters.critical_overflow += selection.critical_overflow;
                    GossipBody::Rumor { envelopes: selection.envelopes.clone() }
                }
                GossipMode::Pull | GossipMode::AntiEntropyOnly => {
                    GossipBody::DigestRequest { digest: agent.store.digest(), repair: false }
                }
                GossipMode::PushPull => {
                    fx.counters.critical_overflow += selection.critical_overflow;
                    GossipBody::PushPullExchange {
                        envelopes: selection.envelopes.clone(),
                        digest: agent.store.digest(),
                    }
                }
            };
            fx.outbox.push((
                peer,
                Payload::Gossip(GossipMessage { sender: agent.id, body }),
                false,
            ));
        }
    }
    fx
}

fn sample_candidates(
    candidates: &[AgentId],
    fanout: usize,
    rng: &mut Rng,
    weights: Option<&BTreeMap<AgentId, f64>>,
) -> Vec<AgentId> {
    // Reuse the view selection logic over an ad-hoc candidate list.
    let mut view = PartialView::detached(AgentId(u64::MAX), candidates.len().max(1));
    for &p in candidates {
        view.push_entry(ViewEntry { peer: p, age: 0 });
    }
    select_peers(&view, fanout, rng, weights)
}

/// Apply a delivered payload. Returns replies (exempt from the fanout
/// budget) and the apply/trust effects.
pub fn handle_message(
    agent: &mut Agent,
    from: AgentId,
    payload: Payload,
    params: &Params<'_>,
    now: Tick,
) -> Effects {
    let mut fx = Effects::default();
    match payload {
        Payload::ShuffleRequest { sample } => {
            let reply = shuffle_respond(&agent.view, params.view.shuffle_len, &mut agent.rng);
            shuffle_merge(&mut agent.view, &reply, &sample);
            fx.outbox.push((from, Payload::ShuffleReply { sample: reply }, true));
        }
        Payload::ShuffleReply { sample } => {
            let sent = agent.pending_shuffle.take().unwrap_or_default();
            shuffle_merge(&mut agent.view, &sent, &sample);
        }
        Payload::Gossip(msg) => {
            let non_critical = msg
                .envelopes()
                .iter()
                .filter(|e| e.priority != PriorityClass::Critical)
                .count();
            if non_critical > params.gossip.delta_cap {
                fx.counters.protocol_errors += 1;
                return fx;
            }
            match msg.body {
                GossipBody::Rumor { envelopes } => {
                    apply_envelopes(agent, from, &envelopes, params, now, &mut fx);
                }
                GossipBody::Delta { envelopes, adoptable } => {
                    apply_envelopes(agent, from, &envelopes, params, now, &mut fx);
                    // Claims still pending corroboration must stay
                    // uncovered, or they could never commit.
                    let held = agent.gate.pending_ids();
                    agent.store.adopt_prefixes(&adoptable, &held);
                }
                GossipBody::DigestRequest { digest, repair } => {
                    reply_delta(agent, from, &digest, repair, params, &mut fx);
                }
                GossipBody::PushPullExchange { envelopes, digest } => {
                    apply_envelopes(agent, from, &envelopes, params, now, &mut fx);
                    reply_delta(agent, from, &digest, false, params, &mut fx);
                }
            }
        }
    }
    fx
}

fn reply_delta(
    agent: &mut Agent,
    to: AgentId,
    remote_digest: &VersionVector,
    coverage_transfer: bool,
    params: &Params<'_>,
    fx: &mut Effects,
) {
    let (envelopes, adoptable) =
        agent.store.delta_since(remote_digest, params.gossip.delta_cap);
    let adoptable = if coverage_transfer { adoptable } else { VersionVector::new() };
    if envelopes.is_empty() && adoptable.is_empty() {
        return;
    }
    fx.outbox.push((
        to,
        Payload::Gossip(GossipMessage {
            sender: agent.id,
            body: GossipBody::Delta { envelopes, adoptable },
        }),
        true,
    ));
}

fn apply_envelopes(
    agent: &mut Agent,
    from: AgentId,
    envelopes: &[Envelope],
    params: &Params<'_>,
    now: Tick,
    fx: &mut Effects,
) {
    let mut ordered: Vec<&Envelope> = envelopes.iter().collect();
    ordered.sort_by_key(|e| e.id());
    for env in ordered {
        receive_envelope(agent, from, env, params, now, fx);
    }
}

/// The full trust-gated apply path for one remote envelope.
pub fn receive_envelope(
    agent: &mut Agent,
    from: AgentId,
    env: &Envelope,
    params: &Params<'_>,
    now: Tick,
    fx: &mut Effects,
) {
    if params.signing {
        let registry = params.registry.expect("signing requires a key registry");
        if verify_envelope(env, registry) != VerifyOutcome::Valid {
            fx.counters.rejects += 1;
            fx.verify_failures.push((from, env.origin));
            agent.reputation.update(from, ReputationEvent::VerifyFail);
            return;
        }
    }
    if let Some(policy) = params.corroboration {
        let known = agent.store.covers(env.id());
        match agent.gate.offer(env, from, agent.id, policy, known, now) {
            GateDecision::Hold => {
                fx.counters.held += 1;
                fx.corroboration.push(CorrNote::Held(env.id()));
                return;
            }
            GateDecision::Commit { corroborators } if !corroborators.is_empty() => {
                fx.counters.committed_after_hold += 1;
                fx.corroboration.push(CorrNote::Committed(env.id()));
                for sender in corroborators {
                    agent.reputation.update(sender, ReputationEvent::CommitConfirmed);
                }
            }
            GateDecision::Commit { .. } => {}
        }
    }
    let outcome = agent.store.apply_remote(env, now);
    match outcome {
        ApplyOutcome::New | ApplyOutcome::Updated => {
            if outcome == ApplyOutcome::New {
                fx.counters.applied_new += 1;
            } else {
                fx.counters.applied_updated += 1;
            }
            agent.activate_rumor(env, now, Some(from));
            fx.commits.push(env.clone());
        }
        ApplyOutcome::Stale => {
            fx.counters.duplicates += 1;
            let threshold_cfg = params.gossip;
            if let Some(rumor) = agent.rumors.get_mut(&env.id()) {
                rumor.duplicate_receipts += 1;
                rumor.distinct_first_senders.insert(from);
                if rumor.active && rumor.duplicate_receipts >= rumor.threshold(threshold_cfg) {
                    rumor.active = false;
                    fx.counters.rumors_deactivated += 1;
                }
            }
        }
        ApplyOutcome::Rejected => {
            fx.counters.rejects += 1;
        }
    }
    if params.tracked.contains(&env.key) {
        let now_id = agent
            .store
            .get(&env.key)
            .map(|entry| match &entry.contributions {
                Some(_) => env.id(),
                None => entry.envelope.id(),
            })
            .unwrap_or((AgentId(0), 0));
        fx.tracked_applies.push((env.key.clone(), env.id(), outcome, now_id));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::Value;
    use crate::view::init_view;

    fn params<'a>(
        gossip: &'a GossipConfig,
        view: &'a ViewConfig,
        filter: &'a FilterPolicy,
        health: &'a HealthConfig,
        reputation: &'a ReputationSettings,
        tracked: &'a BTreeSet<String>,
    ) -> Params<'a> {
        Params {
            gossip,
            view,
            filter,
            health,
            signing: false,
            registry: None,
            corroboration: None,
            reputation,
            tracked,
        }
    }

    fn make_agent(id: u64, peers: &[u64]) -> Agent {
        let view = init_view(
            AgentId(id),
            &peers.iter().map(|&p| AgentId(p)).collect::<Vec<_>>(),
            8,
        )
        .unwrap();
        Agent::new(
            AgentId(id),
            Store::new(AgentId(id), 1.0, 64),
            view,
            None,
            Rng::derive(1, id),
        )
    }

    #[test]
    fn push_round_with_one_active_rumor_sends_one_rumor_message() {
        let gossip = GossipConfig { mode: GossipMode::Push, ..GossipConfig::default() };
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig { heartbeats_enabled: false, ..HealthConfig::default() };
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut agent = make_agent(0, &[1, 2]);
        agent.put_local("alert/x", Value::Scalar(1.0), PriorityClass::Critical, 16, Tick(10));
        let fx = agent_round(&mut agent, &p, Tick(10), None);
        let rumors: Vec<_> = fx
            .outbox
            .iter()
            .filter(|(_, payload, _)| payload.kind() == crate::trace::MsgKind::Rumor)
            .collect();
        assert_eq!(rumors.len(), 1);
        assert_eq!(rumors[0].1.envelope_count(), 1);
    }

    #[test]
    fn push_round_without_rumors_sends_no_gossip() {
        let gossip = GossipConfig { mode: GossipMode::Push, ..GossipConfig::default() };
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig { heartbeats_enabled: false, ..HealthConfig::default() };
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut agent = make_agent(0, &[1, 2]);
        let fx = agent_round(&mut agent, &p, Tick(10), None);
        assert!(fx.outbox.iter().all(|(_, payload, _)| !payload.kind().is_gossip()));
        // The shuffle still happens.
        assert_eq!(fx.outbox.len(), 1);
    }

    #[test]
    fn isolated_agent_skips_the_round() {
        let gossip = GossipConfig::default();
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig { heartbeats_enabled: false, ..HealthConfig::default() };
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut agent = make_agent(0, &[1]);
        let unreachable = BTreeSet::new();
        let fx = agent_round(&mut agent, &p, Tick(10), Some(&unreachable));
        assert!(fx.isolated);
        assert_eq!(fx.counters.isolated_rounds, 1);
        assert!(fx.outbox.is_empty());
    }

    #[test]
    fn push_pull_exchange_merges_both_stores() {
        let gossip = GossipConfig::default();
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig { heartbeats_enabled: false, ..HealthConfig::default() };
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut a = make_agent(0, &[1]);
        let mut b = make_agent(1, &[0]);
        a.put_local("x", Value::Scalar(1.0), PriorityClass::Routine, 8, Tick(0));
        b.put_local("y", Value::Scalar(2.0), PriorityClass::Routine, 8, Tick(0));
        let exchange = Payload::Gossip(GossipMessage {
            sender: a.id,
            body: GossipBody::PushPullExchange {
                envelopes: a.active_rumor_envelopes(),
                digest: a.store.wire_digest(),
            },
        });
        let fx = handle_message(&mut b, a.id, exchange, &p, Tick(1));
        assert!(b.store.get("x").is_some());
        let (to, reply, is_reply) = fx.outbox.into_iter().next().expect("delta reply");
        assert_eq!(to, a.id);
        assert!(is_reply);
        let fx2 = handle_message(&mut a, b.id, reply, &p, Tick(2));
        assert!(a.store.get("y").is_some());
        assert!(fx2.outbox.is_empty());
        assert_eq!(a.store.content(), b.store.content());
    }

    #[test]
    fn third_receipt_of_a_routine_envelope_deactivates_its_rumor() {
        let gossip = GossipConfig::default(); // k = 2
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig { heartbeats_enabled: false, ..HealthConfig::default() };
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut origin = make_agent(9, &[0]);
        let env = origin.put_local("x", Value::Scalar(1.0), PriorityClass::Routine, 8, Tick(0));
        let mut agent = make_agent(0, &[1, 2, 3]);
        let mut fx = Effects::default();
        receive_envelope(&mut agent, AgentId(1), &env, &p, Tick(1), &mut fx);
        assert!(agent.rumors[&env.id()].active, "first receipt creates an active rumor");
        receive_envelope(&mut agent, AgentId(2), &env, &p, Tick(2), &mut fx);
        assert!(agent.rumors[&env.id()].active, "one duplicate is below k");
        receive_envelope(&mut agent, AgentId(3), &env, &p, Tick(3), &mut fx);
        assert!(!agent.rumors[&env.id()].active, "second duplicate reaches k");
        assert_eq!(fx.counters.duplicates, 2);
    }

    #[test]
    fn critical_rumors_survive_until_k_times_m_duplicates() {
        let gossip = GossipConfig::default(); // k = 2, m = 4
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig { heartbeats_enabled: false, ..HealthConfig::default() };
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut origin = make_agent(9, &[0]);
        let env = origin.put_local("alert/x", Value::Scalar(1.0), PriorityClass::Critical, 16, Tick(0));
        let mut agent = make_agent(0, &[1]);
        let mut fx = Effects::default();
        receive_envelope(&mut agent, AgentId(1), &env, &p, Tick(1), &mut fx);
        for i in 0..7 {
            receive_envelope(&mut agent, AgentId(2 + i), &env, &p, Tick(2 + i), &mut fx);
            assert!(agent.rumors[&env.id()].active, "still active after {} duplicates", i + 1);
        }
        receive_envelope(&mut agent, AgentId(20), &env, &p, Tick(20), &mut fx);
        assert!(!agent.rumors[&env.id()].active, "deactivates at 8 duplicates");
    }

    #[test]
    fn oversized_non_critical_message_is_a_protocol_error() {
        let gossip = GossipConfig { delta_cap: 2, ..GossipConfig::default() };
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig { heartbeats_enabled: false, ..HealthConfig::default() };
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut origin = make_agent(9, &[0]);
        let envs: Vec<Envelope> = (0..3)
            .map(|i| {
                origin.put_local(&format!("k{i}"), Value::Scalar(0.0), PriorityClass::Routine, 8, Tick(0))
            })
            .collect();
        let mut agent = make_agent(0, &[1]);
        let fx = handle_message(
            &mut agent,
            AgentId(9),
            Payload::Gossip(GossipMessage {
                sender: AgentId(9),
                body: GossipBody::Rumor { envelopes: envs },
            }),
            &p,
            Tick(1),
        );
        assert_eq!(fx.counters.protocol_errors, 1);
        assert!(agent.store.get("k0").is_none());
    }

    #[test]
    fn fanout_budget_bounds_initiated_gossip() {
        let gossip = GossipConfig { fanout: 2, ..GossipConfig::default() };
        let vc = ViewConfig::default();
        let filter = FilterPolicy::default();
        let health = HealthConfig::default();
        let rep = ReputationSettings::default();
        let tracked = BTreeSet::new();
        let p = params(&gossip, &vc, &filter, &health, &rep, &tracked);
        let mut agent = make_agent(0, &[1, 2, 3, 4, 5, 6]);
        for round in 0..30u64 {
            let fx = agent_round(&mut agent, &p, Tick(round * 10), None);
            let initiated = fx
                .outbox
                .iter()
                .filter(|(_, payload, reply)| payload.kind().is_gossip() && !reply)
                .count();
            assert!(initiated <= 2, "round {round} initiated {initiated}");
        }
    }
}
