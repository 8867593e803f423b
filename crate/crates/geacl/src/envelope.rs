//! Identifiers, priorities, values, and the signed state-update envelope that
//! gossip moves around, together with its canonical byte encoding.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Stable identity of one agent for the lifetime of a run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulation time unit. Ticks only move forward.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Tick(pub u64);

/// Event weight classes, totally ordered: Critical > High > Routine > Low.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum PriorityClass {
    Low,
    Routine,
    High,
    Critical,
}

impl PriorityClass {
    /// Fixed single-byte tag used by the canonical encoding.
    pub fn wire_tag(self) -> u8 {
        match self {
            PriorityClass::Critical => 0,
            PriorityClass::High => 1,
            PriorityClass::Routine => 2,
            PriorityClass::Low => 3,
        }
    }

    pub const ALL: [PriorityClass; 4] = [
        PriorityClass::Critical,
        PriorityClass::High,
        PriorityClass::Routine,
        PriorityClass::Low,
    ];
}

/// Payload of a state entry.
///
/// Vector values within one run share a single dimension; fact symbols are
/// non-empty. Equality and ordering are total (floats compare by bit pattern
/// via `total_cmp`) so values can live in ordered sets deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Scalar(f64),
    Fact(String, String, String),
    Vector(Vec<f64>),
    Counter(u64),
}

impl Value {
    fn rank(&self) -> u8 {
        match self {
            Value::Scalar(_) => 0,
            Value::Fact(..) => 1,
            Value::Vector(_) => 2,
            Value::Counter(_) => 3,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        use Value::*;
        match (self, other) {
            (Scalar(a), Scalar(b)) => a.total_cmp(b),
            (Fact(a1, a2, a3), Fact(b1, b2, b3)) => {
                (a1, a2, a3).cmp(&(b1, b2, b3))
            }
            (Vector(a), Vector(b)) => {
                for (x, y) in a.iter().zip(b.iter()) {
                    match x.total_cmp(y) {
                        Ordering::Equal => {}
                        ord => return ord,
                    }
                }
                a.len().cmp(&b.len())
            }
            (Counter(a), Counter(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

/// Identity of one update: globally unique per run.
pub type EnvelopeId = (AgentId, u64);

/// A signed, versioned, priority-tagged state update — the unit of gossip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub origin: AgentId,
    pub seq: u64,
    pub key: String,
    pub value: Value,
    pub priority: PriorityClass,
    pub created_tick: Tick,
    pub ttl_rounds: u64,
    pub hop_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Vec<u8>>,
}

impl Envelope {
    pub fn id(&self) -> EnvelopeId {
        (self.origin, self.seq)
    }

    /// Canonical encoding used for signing and byte accounting. The signature
    /// field is excluded; everything else appears in declared order: integers
    /// as 8-byte big-endian, strings length-prefixed (4-byte big-endian)
    /// UTF-8, floats IEEE-754 binary64 big-endian, the value tagged by one
    /// leading byte (0 = Scalar, 1 = Fact, 2 = Vector, 3 = Counter), the
    /// priority as its single wire tag byte.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.key.len());
        out.extend_from_slice(&self.origin.0.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        put_str(&mut out, &self.key);
        match &self.value {
            Value::Scalar(x) => {
                out.push(0);
                out.extend_from_slice(&x.to_bits().to_be_bytes());
            }
            Value::Fact(a, b, c) => {
                out.push(1);
                put_str(&mut out, a);
                put_str(&mut out, b);
                put_str(&mut out, c);
            }
            Value::Vector(xs) => {
                out.push(2);
                out.extend_from_slice(&(xs.len() as u32).to_be_bytes());
                for x in xs {
                    out.extend_from_slice(&x.to_bits().to_be_bytes());
                }
            }
            Value::Counter(n) => {
                out.push(3);
                out.extend_from_slice(&n.to_be_bytes());
            }
        }
        out.push(self.priority.wire_tag());
        out.extend_from_slice(&self.created_tick.0.to_be_bytes());
        out.extend_from_slice(&self.ttl_rounds.to_be_bytes());
        out.extend_from_slice(&self.hop_count.to_be_bytes());
        out
    }

    /// Wire size charged by the byte-cost metrics: canonical bytes plus a
    /// one-byte signature-presence flag and the signature itself.
    pub fn wire_len(&self) -> u64 {
        self.canonical_bytes().len() as u64
            + 1
            + self.signature.as_ref().map_or(0, |s| s.len() as u64)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Envelope {
        Envelope {
            origin: AgentId(1),
            seq: 1,
            key: "k".to_string(),
            value: Value::Scalar(0.0),
            priority: PriorityClass::Routine,
            created_tick: Tick(0),
            ttl_rounds: 8,
            hop_count: 0,
            signature: None,
        }
    }

    // Independent byte-by-byte reference encoder for the fixture, kept apart
    // from the implementation so the two can disagree.
    fn reference_fixture_bytes() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&1u64.to_be_bytes()); // origin
        b.extend_from_slice(&1u64.to_be_bytes()); // seq
        b.extend_from_slice(&1u32.to_be_bytes()); // key length
        b.push(b'k');
        b.push(0); // Scalar tag
        b.extend_from_slice(&0u64.to_be_bytes()); // 0.0 bits
        b.push(2); // Routine
        b.extend_from_slice(&0u64.to_be_bytes()); // created_tick
        b.extend_from_slice(&8u64.to_be_bytes()); // ttl_rounds
        b.extend_from_slice(&0u64.to_be_bytes()); // hop_count
        b
    }

    #[test]
    fn golden_fixture_encoding() {
        let golden_hex = include_str!("../tests/golden/envelope_fixture.hex");
        let got: String = fixture()
            .canonical_bytes()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(got, golden_hex.trim());
        let reference: String = reference_fixture_bytes()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(got, reference);
    }

    #[test]
    fn equal_envelopes_encode_identically() {
        assert_eq!(fixture().canonical_bytes(), fixture().canonical_bytes());
    }

    #[test]
    fn signature_is_excluded_from_encoding() {
        let mut signed = fixture();
        signed.signature = Some(vec![0xAB; 32]);
        assert_eq!(signed.canonical_bytes(), fixture().canonical_bytes());
    }

    #[test]
    fn seq_difference_is_localized_to_the_seq_field() {
        let a = fixture().canonical_bytes();
        let mut env = fixture();
        env.seq = 2;
        let b = env.canonical_bytes();
        assert_eq!(a.len(), b.len());
        for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
            if (8..16).contains(&i) {
                continue; // seq field region
            }
            assert_eq!(x, y, "byte {i} outside the seq region differs");
        }
        assert_ne!(a[8..16], b[8..16]);
    }

    #[test]
    fn distinct_identities_encode_distinctly() {
        let mut ids = std::collections::HashSet::new();
        for origin in 0..10u64 {
            for seq in 1..10u64 {
                let mut env = fixture();
                env.origin = AgentId(origin);
                env.seq = seq;
                assert!(ids.insert(env.canonical_bytes()));
            }
        }
    }

    #[test]
    fn priority_order_is_critical_down_to_low() {
        assert!(PriorityClass::Critical > PriorityClass::High);
        assert!(PriorityClass::High > PriorityClass::Routine);
        assert!(PriorityClass::Routine > PriorityClass::Low);
    }
}
