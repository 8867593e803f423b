//! Priority and relevance filtering: scores decide which active rumors enter
//! each outgoing message, and per-priority defaults set ttl budgets.

use crate::envelope::{Envelope, PriorityClass, Tick};
use serde::{Deserialize, Serialize};

/// Scoring and budget knobs. Weights must be strictly positive and ordered
/// by priority; the freshness decay applies per elapsed round.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterPolicy {
    pub weight_critical: f64,
    pub weight_high: f64,
    pub weight_routine: f64,
    pub weight_low: f64,
    pub freshness_decay: f64,
    pub ttl_critical: u64,
    pub ttl_high: u64,
    pub ttl_routine: u64,
    pub ttl_low: u64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            weight_critical: 8.0,
            weight_high: 4.0,
            weight_routine: 2.0,
            weight_low: 1.0,
            freshness_decay: 0.85,
            ttl_critical: 32,
            ttl_high: 16,
            ttl_routine: 8,
            ttl_low: 4,
        }
    }
}

impl FilterPolicy {
    pub fn weight(&self, p: PriorityClass) -> f64 {
        match p {
            PriorityClass::Critical => self.weight_critical,
            PriorityClass::High => self.weight_high,
            PriorityClass::Routine => self.weight_routine,
            PriorityClass::Low => self.weight_low,
        }
    }

    pub fn default_ttl(&self, p: PriorityClass) -> u64 {
        match p {
            PriorityClass::Critical => self.ttl_critical,
            PriorityClass::High => self.ttl_high,
            PriorityClass::Routine => self.ttl_routine,
            PriorityClass::Low => self.ttl_low,
        }
    }

    pub fn max_ttl(&self) -> u64 {
        self.ttl_critical
            .max(self.ttl_high)
            .max(self.ttl_routine)
            .max(self.ttl_low)
    }

    pub fn validate(&self) -> Result<(), String> {
        let w = [self.weight_low, self.weight_routine, self.weight_high, self.weight_critical];
        if w.iter().any(|&x| x <= 0.0) {
            return Err("priority weights must be strictly positive".into());
        }
        if !(w[0] < w[1] && w[1] < w[2] && w[2] < w[3]) {
            return Err("priority weights must increase with priority".into());
        }
        if !(self.freshness_decay > 0.0 && self.freshness_decay <= 1.0) {
            return Err("freshness_decay must be in (0,1]".into());
        }
        Ok(())
    }
}

/// Relevance score: priority weight decayed exponentially per elapsed round.
/// Strictly positive, non-increasing in age, increasing in priority.
pub fn score(env: &Envelope, now: Tick, round_len: u64, policy: &FilterPolicy) -> f64 {
    let rounds_elapsed = now.0.saturating_sub(env.created_tick.0) / round_len;
    policy.weight(env.priority) * policy.freshness_decay.powi(rounds_elapsed as i32)
}

/// Outcome of message selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub envelopes: Vec<Envelope>,
    /// How many Critical envelopes rode above the budget.
    pub critical_overflow: u64,
}

/// Pick the top-`budget` active rumors by (score desc, created asc, origin
/// asc, seq asc). Every active Critical envelope is included even beyond the
/// budget; the overflow is metered.
pub fn select_for_message(
    active: &[&Envelope],
    budget: usize,
    now: Tick,
    round_len: u64,
    policy: &FilterPolicy,
) -> Selection {
    assert!(budget >= 1, "budget must be >= 1");
    let mut order: Vec<(&Envelope, f64)> = active
        .iter()
        .map(|&e| (e, score(e, now, round_len, policy)))
        .collect();
    order.sort_by(|(a, sa), (b, sb)| {
        sb.total_cmp(sa)
            .then(a.created_tick.cmp(&b.created_tick))
            .then(a.origin.cmp(&b.origin))
            .then(a.seq.cmp(&b.seq))
    });
    let mut envelopes = Vec::new();
    for (i, (env, _)) in order.iter().enumerate() {
        if i < budget || env.priority == PriorityClass::Critical {
            envelopes.push((*env).clone());
        }
    }
    let critical_overflow = envelopes.len().saturating_sub(budget) as u64;
    Selection { envelopes, critical_overflow }
}
