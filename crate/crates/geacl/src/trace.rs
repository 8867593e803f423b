//! Append-only event trace. Every metric is a pure function of this record:
//! recomputing a report from a persisted trace reproduces the live report
//! byte for byte.

use crate::envelope::PriorityClass;
use crate::store::ApplyOutcome;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsgKind {
    Rumor,
    DigestRequest,
    Delta,
    PushPullExchange,
    ShuffleRequest,
    ShuffleReply,
    PollRequest,
    PollReply,
}

impl MsgKind {
    pub fn is_gossip(self) -> bool {
        matches!(
            self,
            MsgKind::Rumor | MsgKind::DigestRequest | MsgKind::Delta | MsgKind::PushPullExchange
        )
    }
}

/// Per-round tallies of high-volume outcomes, kept aggregate so the trace
/// stays compact while still containing everything the report needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundCounters {
    pub applied_new: u64,
    pub applied_updated: u64,
    pub duplicates: u64,
    pub rejects: u64,
    pub held: u64,
    pub committed_after_hold: u64,
    pub corroboration_expired: u64,
    pub critical_overflow: u64,
    pub isolated_rounds: u64,
    pub protocol_errors: u64,
    pub rumors_deactivated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev")]
pub enum TraceEvent {
    RoundStart { round: u64, tick: u64, alive: u64 },
    RoundEnd { round: u64, tick: u64, counters: RoundCounters },
    /// A tracked key entered the system at its origin.
    Injected { key: String, origin: u64, seq: u64, round: u64, tick: u64, priority: PriorityClass },
    Sent { from: u64, to: u64, kind: MsgKind, bytes: u64, envs: u64, reply: bool, round: u64, tick: u64 },
    Dropped { from: u64, to: u64, kind: MsgKind, round: u64, tick: u64 },
    Blocked { from: u64, to: u64, kind: MsgKind, round: u64, tick: u64 },
    /// One tracked envelope rode in one message.
    EnvTx { key: String, origin: u64, seq: u64, round: u64 },
    /// Application of a tracked key at an agent; `now_*` is the entry
    /// identity after the merge.
    Apply {
        agent: u64,
        key: String,
        origin: u64,
        seq: u64,
        outcome: ApplyOutcome,
        now_origin: u64,
        now_seq: u64,
        round: u64,
        tick: u64,
    },
    Crash { agent: u64, round: u64, tick: u64 },
    PartitionStart { index: usize, round: u64, tick: u64 },
    PartitionEnd { index: usize, round: u64, tick: u64 },
    SuspicionChange { observer: u64, peer: u64, state: String, round: u64, tick: u64 },
    CorroborationHeld { agent: u64, origin: u64, seq: u64, round: u64 },
    CorroborationCommitted { agent: u64, origin: u64, seq: u64, round: u64 },
    CorroborationExpired { agent: u64, origin: u64, seq: u64, round: u64 },
    VerifyFailed { agent: u64, sender: u64, origin: u64, round: u64 },
    /// Age of the remote information consulted for one decision, in ticks.
    Decision { agent: u64, info_age_ticks: u64, round: u64 },
    DivergenceSample { round: u64, d: f64 },
    /// Fraction of honest agents whose population-mean effective
    /// reputation fell below 0.3.
    DistrustSample { round: u64, fraction: f64 },
    ScenarioNote { agent: u64, label: String, detail: String, round: u64, tick: u64 },
}

#[derive(Debug, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, ev: TraceEvent) {
        self.events.push(ev);
    }

    /// Newline-delimited JSON rendering, one event per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for ev in &self.events {
            out.push_str(&serde_json::to_string(ev).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn hash_hex(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_ndjson().as_bytes());
        hex(&hasher.finalize())
    }

    pub fn from_ndjson(text: &str) -> Result<Trace, serde_json::Error> {
        let mut events = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(line)?);
        }
        Ok(Trace { events })
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trips_and_hashes_stably() {
        let mut trace = Trace::default();
        trace.push(TraceEvent::RoundStart { round: 0, tick: 0, alive: 4 });
        trace.push(TraceEvent::Sent {
            from: 0,
            to: 1,
            kind: MsgKind::Rumor,
            bytes: 80,
            envs: 1,
            reply: false,
            round: 0,
            tick: 0,
        });
        let text = trace.to_ndjson();
        let back = Trace::from_ndjson(&text).unwrap();
        assert_eq!(back.events, trace.events);
        assert_eq!(back.hash_hex(), trace.hash_hex());
    }
}
