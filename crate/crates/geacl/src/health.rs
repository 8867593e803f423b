//! Gossip-based failure detection: heartbeat counters ride the ordinary
//! gossip substrate as max-counter entries; observers run a
//! suspect/confirm state machine over heartbeat progress.

use crate::envelope::{AgentId, PriorityClass, Tick, Value};
use crate::store::Store;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HealthConfig {
    /// Rounds of heartbeat silence before a peer turns Suspect.
    pub t_suspect: u64,
    /// Rounds of silence before Suspect hardens into Failed.
    pub t_confirm: u64,
    /// Extra rounds of heartbeat ttl beyond t_confirm.
    pub heartbeat_margin: u64,
    pub heartbeats_enabled: bool,
}

impl Default for HealthConfig {
    fn default() -> Self {
        HealthConfig { t_suspect: 5, t_confirm: 10, heartbeat_margin: 5, heartbeats_enabled: true }
    }
}

impl HealthConfig {
    pub fn heartbeat_ttl(&self) -> u64 {
        self.t_confirm + self.heartbeat_margin
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.t_suspect < 1 || self.t_confirm <= self.t_suspect {
            return Err("require t_confirm > t_suspect >= 1".into());
        }
        Ok(())
    }
}

pub fn heartbeat_key(agent: AgentId) -> String {
    format!("hb/{}", agent.0)
}

/// Publish this round's heartbeat counter into the local store.
pub fn emit_heartbeat(
    store: &mut Store,
    round: u64,
    now: Tick,
    config: &HealthConfig,
    sign: impl FnOnce(&crate::envelope::Envelope) -> Option<Vec<u8>>,
) -> crate::envelope::Envelope {
    store.put_local_with(
        &heartbeat_key(store.owner),
        Value::Counter(round),
        PriorityClass::Routine,
        config.heartbeat_ttl(),
        now,
        sign,
    )
}

/// Per-peer liveness judgement. Transitions only Alive -> Suspect -> Failed
/// or Suspect -> Alive; Failed is absorbing within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SuspicionState {
    Alive,
    Suspect { since: Tick },
    Failed { since: Tick },
}

#[derive(Debug, Clone)]
struct PeerTrack {
    last_counter: u64,
    last_progress_round: u64,
    state: SuspicionState,
}

/// One observer's view of everyone else's liveness. Peers are tracked from
/// their first observed heartbeat; expiry of the heartbeat entry does not
/// erase the track.
#[derive(Debug, Clone, Default)]
pub struct HealthMonitor {
    peers: BTreeMap<AgentId, PeerTrack>,
}

impl HealthMonitor {
    pub fn state_of(&self, peer: AgentId) -> SuspicionState {
        self.peers.get(&peer).map_or(SuspicionState::Alive, |t| t.state)
    }

    pub fn failed_peers(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.peers
            .iter()
            .filter(|(_, t)| matches!(t.state, SuspicionState::Failed { .. }))
            .map(|(&p, _)| p)
    }

    /// Scan heartbeat knowledge and advance the state machine. Returns the
    /// transitions that fired this check.
    pub fn check_peers(
        &mut self,
        self_id: AgentId,
        store: &Store,
        now_round: u64,
        now: Tick,
        config: &HealthConfig,
    ) -> Vec<(AgentId, SuspicionState)> {
        // Absorb heartbeat progress.
        for key in store.keys() {
            let Some(peer) = key.strip_prefix("hb/").and_then(|s| s.parse::<u64>().ok()) else {
                continue;
            };
            let peer = AgentId(peer);
            if peer == self_id {
                continue;
            }
            let Some(Value::Counter(counter)) = store.get(key).map(|e| e.effective_value().clone())
            else {
                continue;
            };
            match self.peers.get_mut(&peer) {
                None => {
                    self.peers.insert(
                        peer,
                        PeerTrack {
                            last_counter: counter,
                            last_progress_round: now_round,
                            state: SuspicionState::Alive,
                        },
                    );
                }
                Some(track) => {
                    if counter > track.last_counter {
                        track.last_counter = counter;
                        track.last_progress_round = now_round;
                    }
                }
            }
        }
        // Advance states.
        let mut transitions = Vec::new();
        for (&peer, track) in &mut self.peers {
            let silence = now_round.saturating_sub(track.last_progress_round);
            let next = match track.state {
                SuspicionState::Failed { .. } => continue,
                SuspicionState::Alive if silence > config.t_suspect => {
                    Some(SuspicionState::Suspect { since: now })
                }
                SuspicionState::Suspect { .. } if silence > config.t_confirm => {
                    Some(SuspicionState::Failed { since: now })
                }
                SuspicionState::Suspect { .. } if silence <= config.t_suspect => {
                    Some(SuspicionState::Alive)
                }
                _ => None,
            };
            if let Some(next) = next {
                track.state = next;
                transitions.push((peer, next));
            }
        }
        transitions
    }
}
