//! Version vectors: per-origin maximum sequence numbers, used as store
//! digests and to compute anti-entropy deltas.

use crate::envelope::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Map from origin to the highest sequence number observed from it.
/// An absent origin is equivalent to sequence 0; stored entries are >= 1.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionVector {
    entries: BTreeMap<AgentId, u64>,
}

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, origin: AgentId) -> u64 {
        self.entries.get(&origin).copied().unwrap_or(0)
    }

    /// Record `seq` for `origin` if it is higher than what is known.
    pub fn record(&mut self, origin: AgentId, seq: u64) {
        if seq == 0 {
            return;
        }
        let slot = self.entries.entry(origin).or_insert(0);
        if seq > *slot {
            *slot = seq;
        }
    }

    pub fn covers(&self, origin: AgentId, seq: u64) -> bool {
        seq <= self.get(origin)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, u64)> + '_ {
        self.entries.iter().map(|(&a, &s)| (a, s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Encoded size on the wire: 4-byte count plus 16 bytes per entry.
    pub fn wire_len(&self) -> u64 {
        4 + 16 * self.entries.len() as u64
    }
}

impl FromIterator<(AgentId, u64)> for VersionVector {
    fn from_iter<T: IntoIterator<Item = (AgentId, u64)>>(iter: T) -> Self {
        let mut vv = VersionVector::new();
        for (a, s) in iter {
            vv.record(a, s);
        }
        vv
    }
}

/// Pointwise maximum. Commutative, associative, idempotent.
pub fn vv_merge(a: &VersionVector, b: &VersionVector) -> VersionVector {
    let mut out = a.clone();
    for (origin, seq) in b.iter() {
        out.record(origin, seq);
    }
    out
}

/// Every origin where `remote` records a higher sequence than `local`,
/// paired with local's sequence as the exclusive lower bound.
pub fn vv_missing(local: &VersionVector, remote: &VersionVector) -> Vec<(AgentId, u64)> {
    remote
        .iter()
        .filter(|&(origin, seq)| seq > local.get(origin))
        .map(|(origin, _)| (origin, local.get(origin)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vv(pairs: &[(u64, u64)]) -> VersionVector {
        pairs.iter().map(|&(a, s)| (AgentId(a), s)).collect()
    }

    #[test]
    fn merge_is_pointwise_max() {
        let out = vv_merge(&vv(&[(1, 3), (2, 1)]), &vv(&[(1, 2), (3, 4)]));
        assert_eq!(out, vv(&[(1, 3), (2, 1), (3, 4)]));
    }

    #[test]
    fn empty_is_the_identity_element() {
        let x = vv(&[(1, 5)]);
        assert_eq!(vv_merge(&VersionVector::new(), &x), x);
        assert_eq!(vv_merge(&x, &VersionVector::new()), x);
    }

    #[test]
    fn missing_reports_exclusive_lower_bounds() {
        let local = vv(&[(1, 3)]);
        let remote = vv(&[(1, 5), (2, 2)]);
        assert_eq!(
            vv_missing(&local, &remote),
            vec![(AgentId(1), 3), (AgentId(2), 0)]
        );
    }

    #[test]
    fn missing_is_empty_iff_merge_is_a_noop() {
        let local = vv(&[(1, 5), (2, 2)]);
        assert!(vv_missing(&local, &local).is_empty());
        let bigger = vv_merge(&local, &vv(&[(3, 1)]));
        assert!(!vv_missing(&local, &bigger).is_empty());
        assert!(vv_missing(&bigger, &local).is_empty());
    }
}
