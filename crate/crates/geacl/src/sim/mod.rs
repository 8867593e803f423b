//! Deterministic discrete-event engine: a tick-ordered queue with latency,
//! drop, partition, and churn models drives the per-agent protocol handlers.
//! One run is strictly single-threaded; identical (seed, config) pairs yield
//! identical traces.

pub mod net;

use crate::envelope::{AgentId, Envelope, PriorityClass, Tick, Value};
use crate::filter::FilterPolicy;
use crate::gossip::{
    agent_round, handle_message, Agent, CorrNote, Effects, GossipConfig, Params, Payload,
    ReputationSettings, ViewConfig,
};
use crate::health::{HealthConfig, SuspicionState};
use crate::store::ApplyOutcome;
use crate::trace::{MsgKind, RoundCounters, Trace, TraceEvent};
use crate::trust::{CorroborationPolicy, KeyRegistry};
use net::Net;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

/// Protocol-level configuration shared by every agent in a run.
#[derive(Debug, Clone)]
pub struct OwnedParams {
    pub gossip: GossipConfig,
    pub view: ViewConfig,
    pub filter: FilterPolicy,
    pub health: HealthConfig,
    pub signing: bool,
    pub corroboration: Option<CorroborationPolicy>,
    pub reputation: ReputationSettings,
}

/// When a run ends, besides the max-round cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum StopRule {
    /// Every alive agent holds identical content for every tracked key.
    TrackedConverged,
    /// Every alive agent has marked every crashed agent Failed.
    AllDetectFailure,
    /// Run exactly this many rounds.
    Rounds { rounds: u64 },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::TrackedConverged
    }
}

/// Direct request-response polling used in baseline mode.
#[derive(Debug, Clone)]
pub struct BaselinePolling {
    pub interval: u64,
    pub pairs: Vec<(AgentId, AgentId)>,
}

struct QueueItem {
    tick: u64,
    class: u8,
    seq: u64,
    event: Event,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        (self.tick, self.class, self.seq) == (other.tick, other.class, other.seq)
    }
}
impl Eq for QueueItem {}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.tick, self.class, self.seq).cmp(&(other.tick, other.class, other.seq))
    }
}

enum Event {
    Crash { agent: AgentId },
    Deliver { from: AgentId, to: AgentId, payload: Payload },
}

pub struct World {
    pub params: OwnedParams,
    pub registry: Option<KeyRegistry>,
    pub agents: Vec<Agent>,
    pub net: Net,
    pub trace: Trace,
    pub tracked: BTreeSet<String>,
    pub baseline: Option<BaselinePolling>,
    pub now: Tick,
    pub round: u64,
    pub max_rounds: u64,
    pub stop: StopRule,
    pub track_divergence: bool,
    pub timed_out: bool,
    stopped: bool,
    counters: RoundCounters,
    queue: BinaryHeap<Reverse<QueueItem>>,
    next_seq: u64,
    partition_flags: Vec<bool>,
    crashed: BTreeSet<u64>,
    /// Agents configured as adversaries; excluded from trust statistics.
    pub adversaries: BTreeSet<u64>,
}

impl World {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: OwnedParams,
        registry: Option<KeyRegistry>,
        agents: Vec<Agent>,
        net: Net,
        baseline: Option<BaselinePolling>,
        max_rounds: u64,
        stop: StopRule,
        track_divergence: bool,
    ) -> Self {
        let partitions = net.faults.partitions.len();
        World {
            params,
            registry,
            agents,
            net,
            trace: Trace::default(),
            tracked: BTreeSet::new(),
            baseline,
            now: Tick(0),
            round: 0,
            max_rounds,
            stop,
            track_divergence,
            timed_out: false,
            stopped: false,
            counters: RoundCounters::default(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            partition_flags: vec![false; partitions],
            crashed: BTreeSet::new(),
            adversaries: BTreeSet::new(),
        }
    }

    pub fn round_len(&self) -> u64 {
        self.params.gossip.round_len
    }

    pub fn alive_count(&self) -> u64 {
        self.agents.iter().filter(|a| a.alive).count() as u64
    }

    pub fn is_alive(&self, agent: AgentId) -> bool {
        self.agents[agent.0 as usize].alive
    }

    pub fn agent(&self, id: AgentId) -> &Agent {
        &self.agents[id.0 as usize]
    }

    pub fn agent_mut(&mut self, id: AgentId) -> &mut Agent {
        &mut self.agents[id.0 as usize]
    }

    /// Local write at an agent, optionally registered as a tracked key.
    pub fn put_local_at(
        &mut self,
        agent: AgentId,
        key: &str,
        value: Value,
        priority: PriorityClass,
        ttl_rounds: u64,
        track: bool,
    ) -> Envelope {
        let now = self.now;
        let (round, tick) = (self.round, now.0);
        let env = self.agents[agent.0 as usize].put_local(key, value, priority, ttl_rounds, now);
        if track {
            self.tracked.insert(key.to_string());
            self.trace.push(TraceEvent::Injected {
                key: key.to_string(),
                origin: env.origin.0,
                seq: env.seq,
                round,
                tick,
                priority: env.priority,
            });
            self.trace.push(TraceEvent::Apply {
                agent: agent.0,
                key: key.to_string(),
                origin: env.origin.0,
                seq: env.seq,
                outcome: ApplyOutcome::New,
                now_origin: env.origin.0,
                now_seq: env.seq,
                round,
                tick,
            });
        }
        env
    }

    pub fn note(&mut self, agent: AgentId, label: &str, detail: String) {
        self.trace.push(TraceEvent::ScenarioNote {
            agent: agent.0,
            label: label.to_string(),
            detail,
            round: self.round,
            tick: self.now.0,
        });
    }

    pub fn decision(&mut self, agent: AgentId, info_age_ticks: u64) {
        self.trace.push(TraceEvent::Decision {
            agent: agent.0,
            info_age_ticks,
            round: self.round,
        });
    }

    /// Queue an adversarial or synthetic message, bypassing the protocol
    /// handlers on the sending side.
    pub fn send_raw(&mut self, from: AgentId, to: AgentId, payload: Payload) {
        self.send(from, to, payload, false);
    }

    fn send(&mut self, from: AgentId, to: AgentId, payload: Payload, reply: bool) {
        if !self.is_alive(from) {
            return;
        }
        let kind = payload.kind();
        let (round, tick) = (self.round, self.now.0);
        if !self.net.edge_open(from, to, self.now) {
            self.trace.push(TraceEvent::Blocked { from: from.0, to: to.0, kind, round, tick });
            return;
        }
        let drop_p = self.net.config.drop_p;
        if drop_p > 0.0 && self.agents[from.0 as usize].rng.chance(drop_p) {
            self.trace.push(TraceEvent::Dropped { from: from.0, to: to.0, kind, round, tick });
            return;
        }
        let latency = self.net.latency(&mut self.agents[from.0 as usize].rng);
        self.trace.push(TraceEvent::Sent {
            from: from.0,
            to: to.0,
            kind,
            bytes: payload.wire_len(),
            envs: payload.envelope_count(),
            reply,
            round,
            tick,
        });
        if let Payload::Gossip(msg) = &payload {
            for env in msg.envelopes() {
                if self.tracked.contains(&env.key) {
                    self.trace.push(TraceEvent::EnvTx {
                        key: env.key.clone(),
                        origin: env.origin.0,
                        seq: env.seq,
                        round,
                    });
                }
            }
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(QueueItem {
            tick: tick + latency,
            class: 1,
            seq,
            event: Event::Deliver { from, to, payload },
        }));
    }

    pub fn request_stop(&mut self) {
        self.stopped = true;
    }

    /// All tracked keys injected so far hold identical content at every
    /// alive agent.
    pub fn tracked_converged(&self) -> bool {
        if self.tracked.is_empty() {
            return false;
        }
        for key in &self.tracked {
            let mut reference: Option<crate::store::EntrySummary> = None;
            for agent in self.agents.iter().filter(|a| a.alive) {
                match agent.store.get(key) {
                    None => return false,
                    Some(entry) => {
                        let summary = entry.content_summary();
                        match &reference {
                            None => reference = Some(summary),
                            Some(r) => {
                                if *r != summary {
                                    return false;
                                }
                            }
                        }
                    }
                }
            }
        }
        true
    }

    fn all_detect_failure(&self) -> bool {
        if self.crashed.is_empty() {
            return false;
        }
        self.agents.iter().filter(|a| a.alive).all(|agent| {
            let failed: BTreeSet<u64> = agent.monitor.failed_peers().map(|p| p.0).collect();
            self.crashed.iter().all(|c| failed.contains(c))
        })
    }

    /// Fraction of honest agents whose effective reputation, averaged over
    /// every honest observer's store, sits below 0.3 — the cascading-
    /// distrust measure. Reported, not counteracted.
    fn distrusted_honest_fraction(&self) -> f64 {
        let honest: Vec<&Agent> = self
            .agents
            .iter()
            .filter(|a| a.alive && !self.adversaries.contains(&a.id.0))
            .collect();
        if honest.is_empty() {
            return 0.0;
        }
        let mut distrusted = 0usize;
        for subject in &honest {
            let mut total = 0.0;
            let mut observers = 0u64;
            for observer in &honest {
                if observer.id == subject.id {
                    continue;
                }
                let scores =
                    crate::trust::effective_scores(&observer.store, [subject.id]);
                total += scores[&subject.id];
                observers += 1;
            }
            if observers > 0 && total / (observers as f64) < 0.3 {
                distrusted += 1;
            }
        }
        distrusted as f64 / honest.len() as f64
    }

    fn divergence_over_tracked(&self) -> f64 {
        let keys: Vec<String> = self.tracked.iter().cloned().collect();
        let snapshots: Vec<_> = self
            .agents
            .iter()
            .filter(|a| a.alive)
            .map(|a| a.store.divergence_snapshot(Some(&keys)))
            .collect();
        crate::metrics::semantic_divergence(&snapshots)
    }
}

/// Scenario hooks driving environment behavior around the protocol engine.
/// `on_commit` fires for remote applies only; scenarios handle their own
/// local writes inline.
pub trait Scenario {
    fn on_round_start(&mut self, _world: &mut World) {}
    fn on_round_end(&mut self, _world: &mut World) {}
    fn on_commit(&mut self, _world: &mut World, _agent: AgentId, _env: &Envelope) {}
    fn on_transition(
        &mut self,
        _world: &mut World,
        _observer: AgentId,
        _peer: AgentId,
        _state: SuspicionState,
    ) {
    }
    /// Restrict gossip partners to currently reachable peers (opportunistic
    /// contact scenarios).
    fn filter_reachable(&self) -> bool {
        false
    }
}

/// A scenario with no environment behavior at all.
pub struct NullScenario;
impl Scenario for NullScenario {}

pub fn run(world: &mut World, scenario: &mut dyn Scenario) {
    schedule_crashes(world);
    let round_len = world.round_len();
    for round in 0..world.max_rounds {
        if world.stopped {
            break;
        }
        world.round = round;
        world.now = Tick(round * round_len);
        drain_queue_below(world, scenario, round * round_len);
        world.now = Tick(round * round_len);
        round_start(world, scenario);
        drain_queue_below(world, scenario, (round + 1) * round_len);
        world.now = Tick((round + 1) * round_len - 1);
        round_end(world, scenario);
    }
    world.timed_out = !world.stopped;
}

fn schedule_crashes(world: &mut World) {
    let crashes = world.net.faults.crashes.clone();
    for c in &crashes {
        let seq = world.next_seq;
        world.next_seq += 1;
        world.queue.push(Reverse(QueueItem {
            tick: c.tick,
            class: 0,
            seq,
            event: Event::Crash { agent: AgentId(c.agent) },
        }));
    }
}

fn drain_queue_below(world: &mut World, scenario: &mut dyn Scenario, limit_tick: u64) {
    while let Some(Reverse(item)) = world.queue.peek() {
        if item.tick >= limit_tick {
            break;
        }
        let Reverse(item) = world.queue.pop().expect("peeked");
        world.now = Tick(item.tick);
        match item.event {
            Event::Crash { agent } => {
                world.agents[agent.0 as usize].alive = false;
                world.crashed.insert(agent.0);
                world.trace.push(TraceEvent::Crash {
                    agent: agent.0,
                    round: item.tick / world.round_len(),
                    tick: item.tick,
                });
            }
            Event::Deliver { from, to, payload } => {
                if !world.is_alive(to) {
                    continue;
                }
                let fx = {
                    let params = Params {
                        gossip: &world.params.gossip,
                        view: &world.params.view,
                        filter: &world.params.filter,
                        health: &world.params.health,
                        signing: world.params.signing,
                        registry: world.registry.as_ref(),
                        corroboration: world.params.corroboration.as_ref(),
                        reputation: &world.params.reputation,
                        tracked: &world.tracked,
                    };
                    handle_message(&mut world.agents[to.0 as usize], from, payload, &params, world.now)
                };
                apply_effects(world, scenario, to, fx);
            }
        }
    }
}

fn round_start(world: &mut World, scenario: &mut dyn Scenario) {
    let (round, tick) = (world.round, world.now.0);
    world.trace.push(TraceEvent::RoundStart { round, tick, alive: world.alive_count() });
    // Partition boundary notes.
    for i in 0..world.partition_flags.len() {
        let active = world.net.partition_active(i, world.now);
        if active && !world.partition_flags[i] {
            world.trace.push(TraceEvent::PartitionStart { index: i, round, tick });
        }
        if !active && world.partition_flags[i] {
            world.trace.push(TraceEvent::PartitionEnd { index: i, round, tick });
        }
        world.partition_flags[i] = active;
    }
    scenario.on_round_start(world);
    if world.baseline.is_some() {
        baseline_round(world, scenario);
    } else {
        gossip_rounds(world, scenario);
    }
}

fn gossip_rounds(world: &mut World, scenario: &mut dyn Scenario) {
    let filter_reachable = scenario.filter_reachable();
    for i in 0..world.agents.len() {
        if !world.agents[i].alive {
            continue;
        }
        let id = AgentId(i as u64);
        let reachable = filter_reachable.then(|| {
            let crashed = &world.crashed;
            world.net.reachable(id, world.now, |a| !crashed.contains(&a))
        });
        let fx = {
            let params = Params {
                gossip: &world.params.gossip,
                view: &world.params.view,
                filter: &world.params.filter,
                health: &world.params.health,
                signing: world.params.signing,
                registry: world.registry.as_ref(),
                corroboration: world.params.corroboration.as_ref(),
                reputation: &world.params.reputation,
                tracked: &world.tracked,
            };
            agent_round(&mut world.agents[i], &params, world.now, reachable.as_ref())
        };
        apply_effects(world, scenario, id, fx);
    }
}

/// Baseline maintenance plus synchronized snapshot polls: replies are served
/// from round-start state, so information crosses at most one hop per poll
/// round.
fn baseline_round(world: &mut World, scenario: &mut dyn Scenario) {
    let round = world.round;
    let now = world.now;
    let round_len = world.round_len();
    for i in 0..world.agents.len() {
        if !world.agents[i].alive {
            continue;
        }
        let id = AgentId(i as u64);
        let agent = &mut world.agents[i];
        agent.round = round;
        agent.store.expire(now, round_len);
        if world.params.health.heartbeats_enabled {
            let signer = agent.signer.clone();
            crate::health::emit_heartbeat(&mut agent.store, round, now, &world.params.health, |e| {
                signer.as_ref().map(|s| s.sign(&e.canonical_bytes()))
            });
        }
        let transitions =
            agent.monitor.check_peers(id, &agent.store, round, now, &world.params.health);
        for (peer, state) in transitions {
            world.trace.push(TraceEvent::SuspicionChange {
                observer: id.0,
                peer: peer.0,
                state: suspicion_label(state),
                round,
                tick: now.0,
            });
            scenario.on_transition(world, id, peer, state);
        }
    }
    let polling = world.baseline.as_ref().expect("baseline mode");
    if round % polling.interval != 0 {
        return;
    }
    let pairs = polling.pairs.clone();
    let cap = world.params.gossip.delta_cap;
    // Round-start snapshots: every reply this round is computed against
    // them, never against state learned in the same poll round.
    let snapshots: Vec<crate::store::Store> =
        world.agents.iter().map(|a| a.store.clone()).collect();
    for (a, b) in pairs {
        for (requester, responder) in [(a, b), (b, a)] {
            if !world.is_alive(requester) || !world.is_alive(responder) {
                continue;
            }
            if !world.net.edge_open(requester, responder, world.now) {
                world.trace.push(TraceEvent::Blocked {
                    from: requester.0,
                    to: responder.0,
                    kind: MsgKind::PollRequest,
                    round,
                    tick: now.0,
                });
                continue;
            }
            let drop_p = world.net.config.drop_p;
            if drop_p > 0.0 && world.agents[requester.0 as usize].rng.chance(drop_p) {
                world.trace.push(TraceEvent::Dropped {
                    from: requester.0,
                    to: responder.0,
                    kind: MsgKind::PollRequest,
                    round,
                    tick: now.0,
                });
                continue;
            }
            let digest = snapshots[requester.0 as usize].wire_digest();
            world.trace.push(TraceEvent::Sent {
                from: requester.0,
                to: responder.0,
                kind: MsgKind::PollRequest,
                bytes: 9 + digest.wire_len(),
                envs: 0,
                reply: false,
                round,
                tick: now.0,
            });
            if drop_p > 0.0 && world.agents[responder.0 as usize].rng.chance(drop_p) {
                world.trace.push(TraceEvent::Dropped {
                    from: responder.0,
                    to: requester.0,
                    kind: MsgKind::PollReply,
                    round,
                    tick: now.0,
                });
                continue;
            }
            let delta = snapshots[responder.0 as usize].entries_since(&digest, cap);
            world.trace.push(TraceEvent::Sent {
                from: responder.0,
                to: requester.0,
                kind: MsgKind::PollReply,
                bytes: 9 + 4 + delta.iter().map(Envelope::wire_len).sum::<u64>(),
                envs: delta.len() as u64,
                reply: true,
                round,
                tick: now.0,
            });
            baseline_apply(world, scenario, requester, &delta);
        }
    }
}

/// Baseline deltas bypass the rumor and trust machinery: the structured
/// channel is modeled as authenticated request-response.
fn baseline_apply(world: &mut World, scenario: &mut dyn Scenario, receiver: AgentId, envs: &[Envelope]) {
    let mut ordered: Vec<&Envelope> = envs.iter().collect();
    ordered.sort_by_key(|e| e.id());
    for env in ordered {
        let outcome = world.agents[receiver.0 as usize].store.apply_remote(env, world.now);
        match outcome {
            ApplyOutcome::New => world.counters.applied_new += 1,
            ApplyOutcome::Updated => world.counters.applied_updated += 1,
            ApplyOutcome::Stale => world.counters.duplicates += 1,
            ApplyOutcome::Rejected => world.counters.rejects += 1,
        }
        if world.tracked.contains(&env.key) {
            let now_id = world.agents[receiver.0 as usize]
                .store
                .get(&env.key)
                .map(|entry| entry.envelope.id())
                .unwrap_or((AgentId(0), 0));
            world.trace.push(TraceEvent::Apply {
                agent: receiver.0,
                key: env.key.clone(),
                origin: env.origin.0,
                seq: env.seq,
                outcome,
                now_origin: now_id.0 .0,
                now_seq: now_id.1,
                round: world.round,
                tick: world.now.0,
            });
        }
        if matches!(outcome, ApplyOutcome::New | ApplyOutcome::Updated) {
            scenario.on_commit(world, receiver, env);
        }
    }
}

fn suspicion_label(state: SuspicionState) -> String {
    match state {
        SuspicionState::Alive => "Alive".to_string(),
        SuspicionState::Suspect { .. } => "Suspect".to_string(),
        SuspicionState::Failed { .. } => "Failed".to_string(),
    }
}

fn apply_effects(world: &mut World, scenario: &mut dyn Scenario, agent: AgentId, fx: Effects) {
    let (round, tick) = (world.round, world.now.0);
    world.counters.absorb(&fx.counters);
    for (peer, state) in fx.transitions {
        world.trace.push(TraceEvent::SuspicionChange {
            observer: agent.0,
            peer: peer.0,
            state: suspicion_label(state),
            round,
            tick,
        });
        scenario.on_transition(world, agent, peer, state);
    }
    for (sender, origin) in fx.verify_failures {
        world.trace.push(TraceEvent::VerifyFailed {
            agent: agent.0,
            sender: sender.0,
            origin: origin.0,
            round,
        });
    }
    for note in fx.corroboration {
        world.trace.push(match note {
            CorrNote::Held(id) => TraceEvent::CorroborationHeld {
                agent: agent.0,
                origin: id.0 .0,
                seq: id.1,
                round,
            },
            CorrNote::Committed(id) => TraceEvent::CorroborationCommitted {
                agent: agent.0,
                origin: id.0 .0,
                seq: id.1,
                round,
            },
            CorrNote::Expired(id) => TraceEvent::CorroborationExpired {
                agent: agent.0,
                origin: id.0 .0,
                seq: id.1,
                round,
            },
        });
    }
    for (key, id, outcome, now_id) in fx.tracked_applies {
        world.trace.push(TraceEvent::Apply {
            agent: agent.0,
            key,
            origin: id.0 .0,
            seq: id.1,
            outcome,
            now_origin: now_id.0 .0,
            now_seq: now_id.1,
            round,
            tick,
        });
    }
    for (to, payload, reply) in fx.outbox {
        world.send(agent, to, payload, reply);
    }
    for env in fx.commits {
        scenario.on_commit(world, agent, &env);
    }
}

fn round_end(world: &mut World, scenario: &mut dyn Scenario) {
    let counters = std::mem::take(&mut world.counters);
    world.trace.push(TraceEvent::RoundEnd { round: world.round, tick: world.now.0, counters });
    if world.track_divergence && !world.tracked.is_empty() {
        let d = world.divergence_over_tracked();
        world.trace.push(TraceEvent::DivergenceSample { round: world.round, d });
    }
    if world.params.reputation.enabled {
        let fraction = world.distrusted_honest_fraction();
        world.trace.push(TraceEvent::DistrustSample { round: world.round, fraction });
    }
    scenario.on_round_end(world);
    let rule_met = match world.stop {
        StopRule::TrackedConverged => world.tracked_converged(),
        StopRule::AllDetectFailure => world.all_detect_failure(),
        StopRule::Rounds { rounds } => world.round + 1 >= rounds,
    };
    if rule_met {
        world.stopped = true;
    }
}

impl RoundCounters {
    pub fn absorb(&mut self, other: &RoundCounters) {
        self.applied_new += other.applied_new;
        self.applied_updated += other.applied_updated;
        self.duplicates += other.duplicates;
        self.rejects += other.rejects;
        self.held += other.held;
        self.committed_after_hold += other.committed_after_hold;
        self.corroboration_expired += other.corroboration_expired;
        self.critical_overflow += other.critical_overflow;
        self.isolated_rounds += other.isolated_rounds;
        self.protocol_errors += other.protocol_errors;
        self.rumors_deactivated += other.rumors_deactivated;
    }
}
