//! Bounded, aged partial views of the agent population, maintained by
//! CYCLON-style shuffles, plus gossip-partner selection.

use crate::envelope::AgentId;
use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One known peer and how many shuffle rounds ago it was refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub peer: AgentId,
    pub age: u64,
}

/// An agent's bounded sample of the population. Never contains the owner,
/// never contains duplicates, never exceeds its capacity.
#[derive(Debug, Clone)]
pub struct PartialView {
    pub owner: AgentId,
    pub capacity: usize,
    entries: Vec<ViewEntry>,
}

impl PartialView {
    /// An empty view, for agents with no usable bootstrap or for ad-hoc
    /// candidate lists fed to `select_peers`.
    pub fn detached(owner: AgentId, capacity: usize) -> Self {
        PartialView { owner, capacity: capacity.max(1), entries: Vec::new() }
    }

    pub fn push_entry(&mut self, entry: ViewEntry) {
        debug_assert!(entry.peer != self.owner);
        debug_assert!(!self.contains(entry.peer));
        debug_assert!(self.entries.len() < self.capacity);
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[ViewEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn peers(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.entries.iter().map(|e| e.peer)
    }

    pub fn contains(&self, peer: AgentId) -> bool {
        self.entries.iter().any(|e| e.peer == peer)
    }

    fn debug_check(&self) {
        debug_assert!(self.entries.len() <= self.capacity);
        debug_assert!(!self.entries.iter().any(|e| e.peer == self.owner));
        let mut ids: Vec<_> = self.entries.iter().map(|e| e.peer).collect();
        ids.sort_unstable();
        ids.dedup();
        debug_assert_eq!(ids.len(), self.entries.len());
    }
}

/// Build an initial view from a bootstrap list: owner filtered out,
/// duplicates removed, the first `capacity` survivors taken at age 0.
pub fn init_view(owner: AgentId, bootstrap: &[AgentId], capacity: usize) -> Result<PartialView> {
    assert!(capacity >= 1, "view capacity must be >= 1");
    let mut seen = Vec::new();
    for &p in bootstrap {
        if p != owner && !seen.contains(&p) {
            seen.push(p);
            if seen.len() == capacity {
                break;
            }
        }
    }
    if seen.is_empty() {
        return Err(Error::IsolatedAgent(owner));
    }
    let view = PartialView {
        owner,
        capacity,
        entries: seen.into_iter().map(|peer| ViewEntry { peer, age: 0 }).collect(),
    };
    view.debug_check();
    Ok(view)
}

/// Select up to `fanout` distinct gossip partners.
///
/// Without weights the draw is uniform without replacement. With weights the
/// draw is proportional without replacement; zero-weight peers are excluded
/// unless every weight is zero, which falls back to uniform. Peers absent
/// from the weight map count as zero-weight.
pub fn select_peers(
    view: &PartialView,
    fanout: usize,
    rng: &mut Rng,
    weights: Option<&BTreeMap<AgentId, f64>>,
) -> Vec<AgentId> {
    assert!(fanout >= 1, "fanout must be >= 1");
    if view.is_empty() {
        return Vec::new();
    }
    let peers: Vec<AgentId> = view.peers().collect();
    match weights {
        None => rng
            .sample_indices(peers.len(), fanout)
            .into_iter()
            .map(|i| peers[i])
            .collect(),
        Some(w) => {
            let mut pool: Vec<(AgentId, f64)> = peers
                .iter()
                .map(|&p| (p, w.get(&p).copied().unwrap_or(0.0).max(0.0)))
                .filter(|&(_, wt)| wt > 0.0)
                .collect();
            if pool.is_empty() {
                return select_peers(view, fanout, rng, None);
            }
            let mut out = Vec::new();
            while out.len() < fanout && !pool.is_empty() {
                let total: f64 = pool.iter().map(|&(_, wt)| wt).sum();
                let mut roll = rng.next_f64() * total;
                let mut picked = pool.len() - 1;
                for (i, &(_, wt)) in pool.iter().enumerate() {
                    roll -= wt;
                    if roll < 0.0 {
                        picked = i;
                        break;
                    }
                }
                out.push(pool.remove(picked).0);
            }
            out
        }
    }
}

/// Age every entry by one round, pick the oldest entry as shuffle target
/// (ties to the smaller id), and assemble the outgoing sample: a random
/// subset of the other entries of size min(l-1, view-1) plus a fresh
/// self-entry.
pub fn shuffle_initiate(
    view: &mut PartialView,
    shuffle_len: usize,
    rng: &mut Rng,
) -> Result<(AgentId, Vec<ViewEntry>)> {
    if view.is_empty() {
        return Err(Error::NothingToShuffle);
    }
    for e in &mut view.entries {
        e.age += 1;
    }
    let target = view
        .entries
        .iter()
        .max_by(|a, b| a.age.cmp(&b.age).then(b.peer.cmp(&a.peer)))
        .map(|e| e.peer)
        .expect("non-empty view");
    let others: Vec<ViewEntry> = view
        .entries
        .iter()
        .copied()
        .filter(|e| e.peer != target)
        .collect();
    let take = shuffle_len.saturating_sub(1).min(others.len());
    let mut sample: Vec<ViewEntry> = rng
        .sample_indices(others.len(), take)
        .into_iter()
        .map(|i| others[i])
        .collect();
    sample.push(ViewEntry { peer: view.owner, age: 0 });
    Ok((target, sample))
}

/// The responder side of a shuffle: a random subset of up to `shuffle_len`
/// entries. No aging, no self-entry.
pub fn shuffle_respond(view: &PartialView, shuffle_len: usize, rng: &mut Rng) -> Vec<ViewEntry> {
    rng.sample_indices(view.len(), shuffle_len)
        .into_iter()
        .map(|i| view.entries[i])
        .collect()
}

/// Merge received entries into the view. Self-entries and duplicates are
/// dropped (keeping the younger copy on a duplicate); when over capacity,
/// entries that were in `sent` are evicted first, then the oldest remaining
/// (ties to the smaller id).
pub fn shuffle_merge(view: &mut PartialView, sent: &[ViewEntry], received: &[ViewEntry]) {
    let mut refreshed: Vec<AgentId> = Vec::new();
    for r in received {
        if r.peer == view.owner {
            continue;
        }
        match view.entries.iter_mut().find(|e| e.peer == r.peer) {
            Some(existing) => {
                if r.age < existing.age {
                    existing.age = r.age;
                }
                refreshed.push(r.peer);
            }
            None => {
                view.entries.push(*r);
                refreshed.push(r.peer);
            }
        }
    }
    if view.entries.len() > view.capacity {
        let sent_ids: Vec<AgentId> = sent
            .iter()
            .map(|e| e.peer)
            .filter(|p| !refreshed.contains(p))
            .collect();
        // Oldest first, smaller id breaking ties, sent entries ahead of the rest.
        let mut order: Vec<usize> = (0..view.entries.len()).collect();
        order.sort_by(|&i, &j| {
            let (a, b) = (&view.entries[i], &view.entries[j]);
            let a_sent = sent_ids.contains(&a.peer);
            let b_sent = sent_ids.contains(&b.peer);
            b_sent
                .cmp(&a_sent)
                .then(b.age.cmp(&a.age))
                .then(a.peer.cmp(&b.peer))
        });
        let excess = view.entries.len() - view.capacity;
        let mut drop: Vec<usize> = order.into_iter().take(excess).collect();
        drop.sort_unstable_by(|a, b| b.cmp(a));
        for i in drop {
            view.entries.remove(i);
        }
    }
    view.debug_check();
}
