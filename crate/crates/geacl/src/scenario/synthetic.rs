//! Synthetic dissemination harness: scripted injections into an N-agent
//! population, a deterministic burst generator for divergence experiments,
//! and the adversary behaviors used by the secure-gossip runs.

use crate::config::{AdversaryBehavior, AdversarySpec, BurstSpec, InjectionSpec, RunConfig};
use crate::envelope::{AgentId, Envelope, PriorityClass, Value};
use crate::gossip::{GossipBody, GossipMessage, Payload};
use crate::rng::Rng;
use crate::sim::{Scenario, World};
use crate::trust::sign_envelope;

pub struct SyntheticScenario {
    injections: Vec<InjectionSpec>,
    adversaries: Vec<AdversarySpec>,
    fanout: usize,
    claim: Option<Envelope>,
    env_hash: String,
}

impl SyntheticScenario {
    pub fn new(config: &RunConfig, seed: u64) -> Self {
        let mut injections = config.injections.clone();
        if let Some(burst) = &config.burst {
            injections.extend(expand_burst(burst, config.n_for_scenario(), seed));
        }
        injections.sort_by_key(|i| (i.round, i.origin, i.key.clone()));
        let env_hash = super::env_hash(&(&injections, seed));
        SyntheticScenario {
            injections,
            adversaries: config.trust.adversaries.clone(),
            fanout: config.gossip.fanout,
            claim: None,
            env_hash,
        }
    }
}

fn expand_burst(burst: &BurstSpec, n: u64, seed: u64) -> Vec<InjectionSpec> {
    let mut rng = Rng::derive(seed, 0xB0B5);
    let span = burst.end_round.saturating_sub(burst.start_round) + 1;
    (0..burst.count)
        .map(|i| InjectionSpec {
            round: burst.start_round + rng.below(span),
            origin: rng.below(n),
            key: format!("burst/k{i}"),
            value: Value::Scalar(rng.next_f64()),
            priority: burst.priority,
            ttl_rounds: burst.ttl_rounds,
        })
        .collect()
}

impl Scenario for SyntheticScenario {
    fn on_round_start(&mut self, world: &mut World) {
        let round = world.round;
        if round == 0 {
            let hash = self.env_hash.clone();
            world.note(AgentId(0), "env_hash", hash);
        }
        for inj in self.injections.iter().filter(|i| i.round == round) {
            let origin = AgentId(inj.origin);
            if world.is_alive(origin) {
                world.put_local_at(
                    origin,
                    &inj.key,
                    inj.value.clone(),
                    inj.priority,
                    inj.ttl_rounds,
                    true,
                );
            }
        }
        for spec in self.adversaries.clone() {
            let adv = AgentId(spec.agent);
            if !world.is_alive(adv) {
                continue;
            }
            match &spec.behavior {
                AdversaryBehavior::ForgeSignature { victim } => {
                    forge_and_push(world, adv, AgentId(*victim), round, self.fanout);
                }
                AdversaryBehavior::InjectFalseClaim { key, round: at, priority } => {
                    if round == *at && self.claim.is_none() {
                        let env = world.put_local_at(
                            adv,
                            key,
                            Value::Fact("claim".into(), key.clone(), "forged".into()),
                            *priority,
                            32,
                            true,
                        );
                        self.claim = Some(env);
                    }
                    if let Some(claim) = &self.claim {
                        keep_pushing(world, adv, claim, self.fanout, true);
                    }
                }
                AdversaryBehavior::Colluder => {
                    if let Some(claim) = self.claim.clone() {
                        let now = world.now;
                        let agent = world.agent_mut(adv);
                        if !agent.store.covers(claim.id()) {
                            agent.store.apply_remote(&claim, now);
                        }
                        keep_pushing(world, adv, &claim, self.fanout, false);
                    }
                }
            }
        }
    }
}

/// Push a forged envelope (claimed origin = victim, signed with the
/// adversary's own key) to randomly chosen view peers.
fn forge_and_push(world: &mut World, adv: AgentId, victim: AgentId, round: u64, fanout: usize) {
    let now = world.now;
    let (forged, peers) = {
        let agent = world.agent_mut(adv);
        let Some(signer) = agent.signer.clone() else { return };
        let env = Envelope {
            origin: victim,
            seq: 1_000_000 + round,
            key: format!("forged/{}", adv.0),
            value: Value::Scalar(round as f64),
            priority: PriorityClass::High,
            created_tick: now,
            ttl_rounds: 16,
            hop_count: 0,
            signature: None,
        };
        let env = sign_envelope(env, &signer);
        let peers: Vec<AgentId> = agent.view.peers().collect();
        let picks = agent.rng.sample_indices(peers.len(), fanout);
        (env, picks.into_iter().map(|i| peers[i]).collect::<Vec<_>>())
    };
    for peer in peers {
        world.send_raw(
            adv,
            peer,
            Payload::Gossip(GossipMessage {
                sender: adv,
                body: GossipBody::Rumor { envelopes: vec![forged.clone()] },
            }),
        );
    }
}

/// Adversaries ignore suppression: their claim rumor is re-armed and pushed
/// every round.
fn keep_pushing(world: &mut World, adv: AgentId, claim: &Envelope, fanout: usize, rearm: bool) {
    let peers = {
        let agent = world.agent_mut(adv);
        if rearm {
            if let Some(rumor) = agent.rumors.get_mut(&claim.id()) {
                rumor.active = true;
                rumor.duplicate_receipts = 0;
            }
        }
        let peers: Vec<AgentId> = agent.view.peers().collect();
        let picks = agent.rng.sample_indices(peers.len(), fanout);
        picks.into_iter().map(|i| peers[i]).collect::<Vec<AgentId>>()
    };
    for peer in peers {
        world.send_raw(
            adv,
            peer,
            Payload::Gossip(GossipMessage {
                sender: adv,
                body: GossipBody::Rumor { envelopes: vec![claim.clone()] },
            }),
        );
    }
}
