//! The metric suite: propagation (PL, FCT, DW, PC), robustness (FPD, AUC,
//! NPR, RO), semantic divergence D(t) with its contraction rate, logistic
//! curve fitting, cost accounting (MPAR, bytes), and scenario extras. Every
//! number is a pure function of the event trace.

use crate::store::DivergenceValue;
use crate::trace::{RoundCounters, Trace, TraceEvent};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Pairwise semantic divergence over store snapshots: non-vector keys
/// contribute 1 per disagreeing pair (one-sided presence included), vector
/// keys contribute cosine distance.
pub fn semantic_divergence(snapshots: &[BTreeMap<String, DivergenceValue>]) -> f64 {
    let mut total = 0.0;
    for i in 0..snapshots.len() {
        for j in (i + 1)..snapshots.len() {
            total += pair_distance(&snapshots[i], &snapshots[j]);
        }
    }
    total
}

fn pair_distance(a: &BTreeMap<String, DivergenceValue>, b: &BTreeMap<String, DivergenceValue>) -> f64 {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let mut d = 0.0;
    for key in keys {
        d += match (a.get(key), b.get(key)) {
            (Some(DivergenceValue::Vector(x)), Some(DivergenceValue::Vector(y))) => {
                cosine_distance(x, y)
            }
            (Some(DivergenceValue::Token(x)), Some(DivergenceValue::Token(y))) => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
            (None, None) => 0.0,
            _ => 1.0,
        };
    }
    d
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        0.0
    } else if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        (1.0 - dot / (na * nb)).max(0.0)
    }
}

/// Least-squares line fit returning (slope, intercept, r_squared).
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sst: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let sse: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let r2 = if sst == 0.0 { 1.0 } else { 1.0 - sse / sst };
    Some((slope, intercept, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub beta_hat: f64,
    pub r_squared: f64,
    pub flagged_non_monotone: bool,
}

/// Fit the logistic solution I(t) = N / (1 + (N-1) e^{-beta t}) to an
/// observed informed-count curve (t in rounds from injection). Non-monotone
/// curves are fitted on their monotone envelope and flagged.
pub fn fit_beta(curve: &[f64], n: u64) -> Option<FitReport> {
    if curve.is_empty() || curve[0] < 1.0 || n < 2 {
        return None;
    }
    let mut monotone = curve.to_vec();
    let mut flagged = false;
    for i in 1..monotone.len() {
        if monotone[i] < monotone[i - 1] {
            monotone[i] = monotone[i - 1];
            flagged = true;
        }
    }
    let nf = n as f64;
    // Linearize ln((N - I)/I) = ln(N-1) - beta t on interior points.
    let interior: Vec<(f64, f64)> = monotone
        .iter()
        .enumerate()
        .filter(|(_, &i)| i >= 1.0 && i < nf)
        .map(|(t, &i)| (t as f64, ((nf - i) / i).ln()))
        .collect();
    let seed_beta = match linear_fit(&interior) {
        Some((slope, _, _)) if slope < 0.0 => -slope,
        _ => 1.0,
    };
    // Refine on the count scale.
    let sse = |beta: f64| -> f64 {
        monotone
            .iter()
            .enumerate()
            .map(|(t, &obs)| {
                let model = nf / (1.0 + (nf - 1.0) * (-beta * t as f64).exp());
                (obs - model).powi(2)
            })
            .sum()
    };
    let (mut lo, mut hi) = ((seed_beta / 4.0).max(1e-4), seed_beta * 4.0 + 1e-3);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..120 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if sse(m1) < sse(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let beta_hat = (lo + hi) / 2.0;
    let mean = monotone.iter().sum::<f64>() / monotone.len() as f64;
    let sst: f64 = monotone.iter().map(|&i| (i - mean).powi(2)).sum();
    if sst == 0.0 {
        return None;
    }
    let r_squared = 1.0 - sse(beta_hat) / sst;
    Some(FitReport { beta_hat, r_squared, flagged_non_monotone: flagged })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub series: Vec<f64>,
    pub eta_hat: Option<f64>,
    pub log_fit_r_squared: Option<f64>,
    pub converged_at_start: bool,
    pub reached_zero: bool,
}

/// Contraction rate: eta = 1 - geometric mean of D(t+1)/D(t) over
/// consecutive positive samples, with the R^2 of a line fit on log D.
pub fn estimate_eta(series: &[f64]) -> DivergenceReport {
    let report_base = DivergenceReport {
        series: series.to_vec(),
        reached_zero: series.iter().any(|&d| d == 0.0),
        ..DivergenceReport::default()
    };
    if series.iter().all(|&d| d == 0.0) {
        return DivergenceReport { converged_at_start: true, ..report_base };
    }
    let mut log_ratios = Vec::new();
    for w in series.windows(2) {
        if w[0] > 0.0 && w[1] > 0.0 {
            log_ratios.push((w[1] / w[0]).ln());
        }
    }
    let eta_hat = if log_ratios.is_empty() {
        None
    } else {
        let mean = log_ratios.iter().sum::<f64>() / log_ratios.len() as f64;
        Some(1.0 - mean.exp())
    };
    let log_points: Vec<(f64, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0.0)
        .map(|(t, &d)| (t as f64, d.ln()))
        .collect();
    let log_fit_r_squared = linear_fit(&log_points).map(|(_, _, r2)| r2);
    DivergenceReport { eta_hat, log_fit_r_squared, ..report_base }
}

/// Centered 3-sample moving average with clamped edges.
pub fn smooth3(xs: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(xs.len() - 1);
            xs[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Rises then falls (plateaus allowed, tiny numerical noise tolerated).
pub fn is_unimodal(xs: &[f64]) -> bool {
    const EPS: f64 = 1e-9;
    let Some(peak) = xs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    else {
        return true;
    };
    xs.windows(2).enumerate().all(|(i, w)| {
        if i < peak {
            w[1] >= w[0] - EPS
        } else {
            w[1] <= w[0] + EPS
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyReport {
    pub injected_round: u64,
    pub injected_tick: u64,
    pub final_origin: u64,
    pub final_seq: u64,
    pub priority: crate::envelope::PriorityClass,
    /// Agents holding the merge-final value at each round end.
    pub coverage: Vec<u64>,
    pub pl_rounds: Option<u64>,
    pub pl_quantile: f64,
    pub final_coverage_fraction: f64,
    pub fct_rounds: Option<u64>,
    pub dw_rounds: u64,
    pub pc_final: f64,
    pub final_holders: u64,
    pub transmissions: u64,
    pub redundancy_overhead: Option<f64>,
    pub full_coverage_tick: Option<u64>,
    pub full_coverage_delay_ticks: Option<u64>,
    pub beta: Option<FitReport>,
    /// Agents holding the merge-final value at run end.
    pub final_holder_agents: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub total_messages: u64,
    pub total_bytes: u64,
    pub bytes_by_kind: BTreeMap<String, u64>,
    pub messages_by_kind: BTreeMap<String, u64>,
    pub dropped: u64,
    pub blocked: u64,
    /// Envelope copies carried by all sent messages.
    pub envelopes_sent: u64,
    /// Gossip initiations per alive agent, per round.
    pub mpar_initiated: Vec<f64>,
    /// Gossip replies per alive agent, per round.
    pub mpar_replies: Vec<f64>,
    pub mpar_initiated_mean: f64,
    pub mpar_replies_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    pub agent: u64,
    pub crash_tick: u64,
    pub detected_by: u64,
    pub observers: u64,
    pub detection_fraction: f64,
    pub fpd_mean_ticks: Option<f64>,
    pub fpd_max_ticks: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub crashes: Vec<CrashReport>,
    pub false_confirmations: u64,
    pub suspect_events: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactoryReport {
    pub tasks_arrived: u64,
    pub tasks_completed: u64,
    pub task_redistribution_efficiency: Option<f64>,
    pub failure_recovery_latency_ticks: Option<u64>,
    pub adaptations: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DisasterReport {
    pub hazards_discovered: u64,
    pub hazard_coverage: Option<f64>,
    pub critical_alert_delay_ticks: Option<f64>,
    pub survivors_discovered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub n_agents: u64,
    pub round_len: u64,
    pub rounds_executed: u64,
    pub timed_out: bool,
    pub env_hash: String,
    pub trace_hash: String,
    pub config_digest: String,
    pub alive_per_round: Vec<u64>,
    pub tracked: BTreeMap<String, KeyReport>,
    pub primary_key: Option<String>,
    pub divergence: DivergenceReport,
    pub traffic: TrafficReport,
    pub counters: RoundCounters,
    pub health: HealthReport,
    pub availability_under_churn: Option<f64>,
    pub partition_recovery: Option<f64>,
    pub staleness_index_ticks: Option<f64>,
    /// Useful deliveries over total envelope transmissions; the
    /// selective-dissemination efficiency proxy.
    pub sde_proxy: Option<f64>,
    /// Final fraction of honest agents with effective reputation below 0.3
    /// (reputation-gossip runs only).
    pub low_trust_fraction: Option<f64>,
    pub alert_propagation_ticks: Option<u64>,
    pub alert_propagation_rounds: Option<u64>,
    pub factory: Option<FactoryReport>,
    pub disaster: Option<DisasterReport>,
}

/// Everything the trace alone cannot know: run identity and tolerances.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub scenario: String,
    pub mode: String,
    pub seed: u64,
    pub n_agents: u64,
    pub round_len: u64,
    pub pl_quantile: f64,
    pub config_digest: String,
    pub timed_out: bool,
    /// (start_tick, end_tick) partition windows, for NPR.
    pub partition_windows: Vec<(u64, u64)>,
}

struct KeyState {
    injected_round: u64,
    injected_tick: u64,
    final_id: (u64, u64),
    priority: crate::envelope::PriorityClass,
    holders: Vec<bool>,
    coverage: Vec<u64>,
    transmissions: u64,
    full_coverage_tick: Option<u64>,
}

/// Compute the full report from a trace.
pub fn compute(trace: &Trace, ctx: &RunContext) -> MetricsReport {
    let n = ctx.n_agents as usize;
    let mut alive = vec![true; n];
    let mut alive_per_round: Vec<u64> = Vec::new();
    let mut keys: BTreeMap<String, KeyState> = BTreeMap::new();
    let mut key_order: Vec<String> = Vec::new();
    let mut counters = RoundCounters::default();
    let mut traffic = TrafficReport::default();
    let mut init_per_round: Vec<u64> = Vec::new();
    let mut reply_per_round: Vec<u64> = Vec::new();
    let mut crashes: Vec<(u64, u64)> = Vec::new();
    let mut failed_events: Vec<(u64, u64, u64)> = Vec::new(); // observer, peer, tick
    let mut suspect_events = 0u64;
    let mut decisions: Vec<u64> = Vec::new();
    let mut d_series: Vec<f64> = Vec::new();
    let mut distrust_last: Option<f64> = None;
    let mut env_hash = String::new();
    let mut factory_summary: Option<FactoryReport> = None;
    let mut queues_before: Option<Vec<f64>> = None;
    let mut queues_after: Option<Vec<f64>> = None;
    let mut disaster_summary: Option<DisasterReport> = None;
    let mut rounds_executed = 0u64;

    // First pass: final identity per key comes from its injections.
    for ev in &trace.events {
        if let TraceEvent::Injected { key, origin, seq, round, tick, priority } = ev {
            let entry = keys.entry(key.clone()).or_insert_with(|| {
                key_order.push(key.clone());
                KeyState {
                    injected_round: *round,
                    injected_tick: *tick,
                    final_id: (*origin, *seq),
                    priority: *priority,
                    holders: vec![false; n],
                    coverage: Vec::new(),
                    transmissions: 0,
                    full_coverage_tick: None,
                }
            });
            // Later writer wins by (tick, origin, seq), matching the store.
            if (*tick, *origin, *seq) > (entry.injected_tick, entry.final_id.0, entry.final_id.1) {
                entry.final_id = (*origin, *seq);
            }
        }
    }

    let check_full = |state: &mut KeyState, alive: &[bool], tick: u64| {
        if state.full_coverage_tick.is_some() {
            return;
        }
        let alive_count = alive.iter().filter(|&&a| a).count();
        let holding = state
            .holders
            .iter()
            .zip(alive.iter())
            .filter(|(&h, &a)| h && a)
            .count();
        if alive_count > 0 && holding == alive_count {
            state.full_coverage_tick = Some(tick);
        }
    };

    for ev in &trace.events {
        match ev {
            TraceEvent::RoundStart { .. } => {
                init_per_round.push(0);
                reply_per_round.push(0);
            }
            TraceEvent::RoundEnd { round, tick, counters: rc } => {
                rounds_executed = round + 1;
                counters.absorb(rc);
                let alive_count = alive.iter().filter(|&&a| a).count() as u64;
                alive_per_round.push(alive_count);
                for state in keys.values_mut() {
                    let holding = state
                        .holders
                        .iter()
                        .zip(alive.iter())
                        .filter(|(&h, &a)| h && a)
                        .count() as u64;
                    state.coverage.push(holding);
                    check_full(state, &alive, *tick);
                }
            }
            TraceEvent::Sent { kind, bytes, envs, reply, round, .. } => {
                traffic.total_messages += 1;
                traffic.total_bytes += bytes;
                traffic.envelopes_sent += envs;
                *traffic.bytes_by_kind.entry(format!("{kind:?}")).or_insert(0) += bytes;
                *traffic.messages_by_kind.entry(format!("{kind:?}")).or_insert(0) += 1;
                if kind.is_gossip() {
                    let idx = *round as usize;
                    if idx < init_per_round.len() {
                        if *reply {
                            reply_per_round[idx] += 1;
                        } else {
                            init_per_round[idx] += 1;
                        }
                    }
                }
            }
            TraceEvent::Dropped { .. } => traffic.dropped += 1,
            TraceEvent::Blocked { .. } => traffic.blocked += 1,
            TraceEvent::EnvTx { key, .. } => {
                if let Some(state) = keys.get_mut(key) {
                    state.transmissions += 1;
                }
            }
            TraceEvent::Apply { agent, key, tick, now_origin, now_seq, .. } => {
                if let Some(state) = keys.get_mut(key) {
                    state.holders[*agent as usize] = (*now_origin, *now_seq) == state.final_id;
                    check_full(state, &alive, *tick);
                }
            }
            TraceEvent::Crash { agent, tick, .. } => {
                alive[*agent as usize] = false;
                crashes.push((*agent, *tick));
                let snapshot = alive.clone();
                for state in keys.values_mut() {
                    check_full(state, &snapshot, *tick);
                }
            }
            TraceEvent::SuspicionChange { observer, peer, state, tick, .. } => {
                if state == "Failed" {
                    failed_events.push((*observer, *peer, *tick));
                } else if state == "Suspect" {
                    suspect_events += 1;
                }
            }
            TraceEvent::Decision { info_age_ticks, .. } => decisions.push(*info_age_ticks),
            TraceEvent::DivergenceSample { d, .. } => d_series.push(*d),
            TraceEvent::DistrustSample { fraction, .. } => distrust_last = Some(*fraction),
            TraceEvent::ScenarioNote { label, detail, .. } => match label.as_str() {
                "env_hash" => env_hash = detail.clone(),
                "factory_summary" => {
                    factory_summary = serde_json::from_str(detail).ok();
                }
                "disaster_summary" => {
                    disaster_summary = serde_json::from_str(detail).ok();
                }
                "queues_before_shock" => queues_before = serde_json::from_str(detail).ok(),
                "queues_after_shock" => queues_after = serde_json::from_str(detail).ok(),
                _ => {}
            },
            _ => {}
        }
    }

    // MPAR normalization by alive agents per round.
    traffic.mpar_initiated = init_per_round
        .iter()
        .enumerate()
        .map(|(r, &c)| c as f64 / alive_per_round.get(r).copied().unwrap_or(1).max(1) as f64)
        .collect();
    traffic.mpar_replies = reply_per_round
        .iter()
        .enumerate()
        .map(|(r, &c)| c as f64 / alive_per_round.get(r).copied().unwrap_or(1).max(1) as f64)
        .collect();
    traffic.mpar_initiated_mean = mean(&traffic.mpar_initiated).unwrap_or(0.0);
    traffic.mpar_replies_mean = mean(&traffic.mpar_replies).unwrap_or(0.0);

    // Per-key propagation reports.
    let mut tracked = BTreeMap::new();
    for (key, state) in &keys {
        tracked.insert(key.clone(), key_report(state, &alive_per_round, ctx));
    }
    let primary_key = key_order.first().cloned();

    // Failure detection.
    let mut health = HealthReport { suspect_events, ..HealthReport::default() };
    let crashed_set: BTreeMap<u64, u64> = crashes.iter().copied().collect();
    for &(agent, crash_tick) in &crashes {
        let delays: Vec<u64> = failed_events
            .iter()
            .filter(|&&(observer, peer, _)| peer == agent && alive[observer as usize])
            .map(|&(_, _, tick)| tick.saturating_sub(crash_tick))
            .collect();
        let observers = alive.iter().filter(|&&a| a).count() as u64;
        health.crashes.push(CrashReport {
            agent,
            crash_tick,
            detected_by: delays.len() as u64,
            observers,
            detection_fraction: if observers == 0 {
                0.0
            } else {
                delays.len() as f64 / observers as f64
            },
            fpd_mean_ticks: mean(&delays.iter().map(|&d| d as f64).collect::<Vec<_>>()),
            fpd_max_ticks: delays.iter().max().copied(),
        });
    }
    health.false_confirmations = failed_events
        .iter()
        .filter(|&&(_, peer, tick)| match crashed_set.get(&peer) {
            None => true,
            Some(&crash_tick) => tick < crash_tick,
        })
        .count() as u64;

    // Availability under churn: tracked keys reaching every eventually-alive
    // agent.
    let availability_under_churn = if tracked.is_empty() {
        None
    } else {
        let reached = tracked
            .values()
            .filter(|k| k.fct_rounds.is_some())
            .count();
        Some(reached as f64 / tracked.len() as f64)
    };

    // Partition recovery: updates that predate the heal, fully known after
    // re-connection.
    let partition_recovery = ctx.partition_windows.first().map(|&(_, end)| {
        let pre: Vec<&KeyReport> =
            tracked.values().filter(|k| k.injected_tick < end).collect();
        if pre.is_empty() {
            1.0
        } else {
            pre.iter().filter(|k| k.fct_rounds.is_some()).count() as f64 / pre.len() as f64
        }
    });

    let staleness_index_ticks = mean(&decisions.iter().map(|&d| d as f64).collect::<Vec<_>>());
    let sde_proxy = (traffic.envelopes_sent > 0).then(|| {
        (counters.applied_new + counters.applied_updated) as f64 / traffic.envelopes_sent as f64
    });

    // System alert: the first Critical tracked key.
    let alert_key = key_order
        .iter()
        .find(|k| keys[*k].priority == crate::envelope::PriorityClass::Critical);
    let alert_propagation_ticks = alert_key
        .and_then(|k| tracked[k].full_coverage_delay_ticks);
    let alert_propagation_rounds = alert_propagation_ticks.map(|t| t.div_ceil(ctx.round_len.max(1)));

    let mut factory = factory_summary;
    if let Some(f) = factory.as_mut() {
        if let (Some(before), Some(after)) = (&queues_before, &queues_after) {
            let var = |xs: &[f64]| -> f64 {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
            };
            if !before.is_empty() && var(before) > 0.0 {
                f.task_redistribution_efficiency = Some(var(after) / var(before));
            }
        }
        f.failure_recovery_latency_ticks = crashes.first().and_then(|&(agent, crash_tick)| {
            let all: Vec<u64> = failed_events
                .iter()
                .filter(|&&(observer, peer, _)| peer == agent && alive[observer as usize])
                .map(|&(_, _, tick)| tick)
                .collect();
            let detected = all.len() as u64;
            let observers = alive.iter().filter(|&&a| a).count() as u64;
            (observers > 0 && detected == observers)
                .then(|| all.iter().max().map(|&t| t - crash_tick))
                .flatten()
        });
    }

    let mut disaster = disaster_summary;
    if let Some(d) = disaster.as_mut() {
        let hazard_keys: Vec<&KeyReport> = tracked
            .iter()
            .filter(|(k, _)| k.starts_with("hazard/"))
            .map(|(_, v)| v)
            .collect();
        if !hazard_keys.is_empty() {
            d.hazard_coverage = Some(
                hazard_keys.iter().filter(|k| k.fct_rounds.is_some()).count() as f64
                    / hazard_keys.len() as f64,
            );
            let delays: Vec<f64> = hazard_keys
                .iter()
                .filter_map(|k| k.full_coverage_delay_ticks.map(|t| t as f64))
                .collect();
            d.critical_alert_delay_ticks = mean(&delays);
        }
    }

    MetricsReport {
        scenario: ctx.scenario.clone(),
        mode: ctx.mode.clone(),
        seed: ctx.seed,
        n_agents: ctx.n_agents,
        round_len: ctx.round_len,
        rounds_executed,
        timed_out: ctx.timed_out,
        env_hash,
        trace_hash: trace.hash_hex(),
        config_digest: ctx.config_digest.clone(),
        alive_per_round,
        tracked,
        primary_key,
        divergence: estimate_eta(&d_series),
        traffic,
        counters,
        health,
        availability_under_churn,
        partition_recovery,
        staleness_index_ticks,
        sde_proxy,
        low_trust_fraction: distrust_last,
        alert_propagation_ticks,
        alert_propagation_rounds,
        factory,
        disaster,
    }
}

fn key_report(state: &KeyState, alive_per_round: &[u64], ctx: &RunContext) -> KeyReport {
    let inj = state.injected_round as usize;
    let q = ctx.pl_quantile;
    let mut pl_rounds = None;
    let mut fct_rounds = None;
    let mut dw_rounds = 0u64;
    for (r, &cov) in state.coverage.iter().enumerate().skip(inj) {
        let alive = alive_per_round.get(r).copied().unwrap_or(0);
        if pl_rounds.is_none() && alive > 0 && cov as f64 >= (q * alive as f64).ceil() {
            pl_rounds = Some((r - inj) as u64);
        }
        if fct_rounds.is_none() && alive > 0 && cov == alive {
            fct_rounds = Some((r - inj) as u64);
        }
        if fct_rounds.is_none() && cov > 0 && cov < alive {
            dw_rounds += 1;
        }
    }
    let final_cov = state.coverage.last().copied().unwrap_or(0);
    let final_alive = alive_per_round.last().copied().unwrap_or(0).max(1);
    let final_holders = state.holders.iter().filter(|&&h| h).count() as u64;
    let curve: Vec<f64> = state.coverage[inj.min(state.coverage.len())..]
        .iter()
        .map(|&c| c as f64)
        .collect();
    let fit_n = alive_per_round.get(inj).copied().unwrap_or(ctx.n_agents);
    KeyReport {
        injected_round: state.injected_round,
        injected_tick: state.injected_tick,
        final_origin: state.final_id.0,
        final_seq: state.final_id.1,
        priority: state.priority,
        pl_rounds,
        pl_quantile: q,
        final_coverage_fraction: final_cov as f64 / final_alive as f64,
        fct_rounds,
        dw_rounds,
        pc_final: final_cov as f64 / final_alive as f64,
        final_holders,
        transmissions: state.transmissions,
        redundancy_overhead: (final_holders >= 2)
            .then(|| state.transmissions as f64 / (final_holders - 1) as f64),
        full_coverage_tick: state.full_coverage_tick,
        full_coverage_delay_ticks: state
            .full_coverage_tick
            .map(|t| t.saturating_sub(state.injected_tick)),
        beta: fit_beta(&curve, fit_n),
        final_holder_agents: state
            .holders
            .iter()
            .enumerate()
            .filter(|(_, &h)| h)
            .map(|(i, _)| i as u64)
            .collect(),
        coverage: state.coverage.clone(),
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Propagation latency at an arbitrary quantile: rounds from injection
/// until coverage first reaches ceil(q * alive).
pub fn pl_at(coverage: &[u64], alive: &[u64], injected_round: u64, q: f64) -> Option<u64> {
    coverage
        .iter()
        .enumerate()
        .skip(injected_round as usize)
        .find(|(r, &c)| {
            let a = alive.get(*r).copied().unwrap_or(0);
            a > 0 && c as f64 >= (q * a as f64).ceil()
        })
        .map(|(r, _)| r as u64 - injected_round)
}

/// Uninformed-fraction series (round, fraction) from a coverage curve.
pub fn uninformed_series(coverage: &[u64], alive: &[u64], injected_round: u64) -> Vec<(u64, f64)> {
    coverage
        .iter()
        .enumerate()
        .skip(injected_round as usize)
        .filter_map(|(r, &c)| {
            let a = alive.get(r).copied().unwrap_or(0);
            (a > 0).then(|| (r as u64 - injected_round, 1.0 - c as f64 / a as f64))
        })
        .collect()
}
