//! Report serialization: pretty JSON for the full report, CSV with a stable
//! schema for sweeps and comparisons. The CSV column set is a function of
//! the scenario only, never of run outcomes.

use crate::metrics::MetricsReport;

pub fn to_json(report: &MetricsReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Flat (metric, value) pairs for the primary tracked key and the run-level
/// aggregates. Missing metrics serialize as empty strings.
pub fn metric_pairs(report: &MetricsReport) -> Vec<(&'static str, String)> {
    let primary = report.primary_key.as_ref().and_then(|k| report.tracked.get(k));
    let mut out: Vec<(&'static str, String)> = vec![
        ("rounds_executed", report.rounds_executed.to_string()),
        ("timed_out", report.timed_out.to_string()),
        ("pl_rounds", fmt_opt_u64(primary.and_then(|k| k.pl_rounds))),
        ("fct_rounds", fmt_opt_u64(primary.and_then(|k| k.fct_rounds))),
        ("dw_rounds", fmt_opt_u64(primary.map(|k| k.dw_rounds))),
        ("pc_final", fmt_opt_f64(primary.map(|k| k.pc_final))),
        ("final_coverage", fmt_opt_f64(primary.map(|k| k.final_coverage_fraction))),
        ("redundancy_overhead", fmt_opt_f64(primary.and_then(|k| k.redundancy_overhead))),
        ("transmissions", fmt_opt_u64(primary.map(|k| k.transmissions))),
        ("beta_hat", fmt_opt_f64(primary.and_then(|k| k.beta.map(|b| b.beta_hat)))),
        ("beta_r2", fmt_opt_f64(primary.and_then(|k| k.beta.map(|b| b.r_squared)))),
        ("eta_hat", fmt_opt_f64(report.divergence.eta_hat)),
        ("eta_log_r2", fmt_opt_f64(report.divergence.log_fit_r_squared)),
        ("availability_under_churn", fmt_opt_f64(report.availability_under_churn)),
        ("partition_recovery", fmt_opt_f64(report.partition_recovery)),
        ("staleness_index_ticks", fmt_opt_f64(report.staleness_index_ticks)),
        ("sde_proxy", fmt_opt_f64(report.sde_proxy)),
        ("low_trust_fraction", fmt_opt_f64(report.low_trust_fraction)),
        ("alert_propagation_ticks", fmt_opt_u64(report.alert_propagation_ticks)),
        ("alert_propagation_rounds", fmt_opt_u64(report.alert_propagation_rounds)),
        ("mpar_initiated_mean", format!("{}", report.traffic.mpar_initiated_mean)),
        ("mpar_replies_mean", format!("{}", report.traffic.mpar_replies_mean)),
        ("total_messages", report.traffic.total_messages.to_string()),
        ("total_bytes", report.traffic.total_bytes.to_string()),
        ("dropped", report.traffic.dropped.to_string()),
        ("blocked", report.traffic.blocked.to_string()),
        ("duplicates", report.counters.duplicates.to_string()),
        ("rejects", report.counters.rejects.to_string()),
        ("corroboration_expired", report.counters.corroboration_expired.to_string()),
        ("critical_overflow", report.counters.critical_overflow.to_string()),
        ("isolated_rounds", report.counters.isolated_rounds.to_string()),
        ("protocol_errors", report.counters.protocol_errors.to_string()),
        (
            "fpd_mean_ticks",
            fmt_opt_f64(report.health.crashes.first().and_then(|c| c.fpd_mean_ticks)),
        ),
        (
            "fpd_max_ticks",
            fmt_opt_u64(report.health.crashes.first().and_then(|c| c.fpd_max_ticks)),
        ),
        (
            "detection_fraction",
            fmt_opt_f64(report.health.crashes.first().map(|c| c.detection_fraction)),
        ),
        ("false_confirmations", report.health.false_confirmations.to_string()),
    ];
    match report.scenario.as_str() {
        "factory" => {
            let f = report.factory.as_ref();
            out.push(("tasks_arrived", fmt_opt_u64(f.map(|f| f.tasks_arrived))));
            out.push(("tasks_completed", fmt_opt_u64(f.map(|f| f.tasks_completed))));
            out.push((
                "task_redistribution_efficiency",
                fmt_opt_f64(f.and_then(|f| f.task_redistribution_efficiency)),
            ));
            out.push((
                "failure_recovery_latency_ticks",
                fmt_opt_u64(f.and_then(|f| f.failure_recovery_latency_ticks)),
            ));
            out.push(("adaptations", fmt_opt_u64(f.map(|f| f.adaptations))));
        }
        "disaster" => {
            let d = report.disaster.as_ref();
            out.push(("hazards_discovered", fmt_opt_u64(d.map(|d| d.hazards_discovered))));
            out.push(("hazard_coverage", fmt_opt_f64(d.and_then(|d| d.hazard_coverage))));
            out.push((
                "critical_alert_delay_ticks",
                fmt_opt_f64(d.and_then(|d| d.critical_alert_delay_ticks)),
            ));
            out.push(("survivors_discovered", fmt_opt_u64(d.map(|d| d.survivors_discovered))));
        }
        _ => {}
    }
    out.push(("env_hash", report.env_hash.clone()));
    out.push(("trace_hash", report.trace_hash.clone()));
    out
}

/// One row per metric: scenario, mode, seed, metric, value.
pub fn run_csv(report: &MetricsReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "mode", "seed", "metric", "value"]).expect("csv header");
    let seed = report.seed.to_string();
    for (metric, value) in metric_pairs(report) {
        w.write_record([&report.scenario, &report.mode, &seed, metric, &value])
            .expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}

/// Header for a sweep table: full parameterization then the metric columns.
pub fn sweep_header(scenario: &str, sample: &MetricsReport) -> Vec<String> {
    let mut cols = vec![
        "scenario".to_string(),
        "mode".to_string(),
        "axis".to_string(),
        "axis_value".to_string(),
        "seed".to_string(),
        "n_agents".to_string(),
        "config_digest".to_string(),
    ];
    debug_assert_eq!(scenario, sample.scenario);
    cols.extend(metric_pairs(sample).iter().map(|(name, _)| name.to_string()));
    cols
}

pub fn sweep_row(report: &MetricsReport, axis: &str, axis_value: &str) -> Vec<String> {
    let mut row = vec![
        report.scenario.clone(),
        report.mode.clone(),
        axis.to_string(),
        axis_value.to_string(),
        report.seed.to_string(),
        report.n_agents.to_string(),
        report.config_digest.clone(),
    ];
    row.extend(metric_pairs(report).into_iter().map(|(_, v)| v));
    row
}

pub fn write_csv(rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(row).expect("csv row");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("csv utf8")
}
