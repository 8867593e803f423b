//! Run assembly and execution: build a world from a config and seed, drive
//! the engine, compute the report. Batches of independent runs execute in
//! parallel when the `parallel` feature is enabled; a single run is always
//! sequential and deterministic.

use crate::config::{Mode, RunConfig, ScenarioKind};
use crate::envelope::AgentId;
use crate::gossip::Agent;
use crate::metrics::{self, MetricsReport, RunContext};
use crate::rng::Rng;
use crate::scenario::disaster::DisasterScenario;
use crate::scenario::factory::FactoryScenario;
use crate::scenario::synthetic::SyntheticScenario;
use crate::scenario::walkthrough::{self, StepRecord, WalkthroughScenario};
use crate::sim::net::{Net, Topology};
use crate::sim::{self, BaselinePolling, OwnedParams, Scenario, StopRule, World};
use crate::store::Store;
use crate::trust::{KeyRegistry, Signer};
use crate::view::{init_view, PartialView};

pub struct RunOutput {
    pub report: MetricsReport,
    pub trace_ndjson: Option<String>,
}

/// Build the world and scenario for one (config, seed) pair.
pub fn build(config: &RunConfig, seed: u64) -> Result<(World, Box<dyn Scenario>), String> {
    config.validate()?;
    let n = config.n_for_scenario();
    let scenario: Box<dyn Scenario> = match config.scenario {
        ScenarioKind::Synthetic => Box::new(SyntheticScenario::new(config, seed)),
        ScenarioKind::Factory => Box::new(FactoryScenario::new(config, seed)),
        ScenarioKind::Disaster => Box::new(DisasterScenario::new(config, seed)),
        ScenarioKind::Walkthrough => Box::new(WalkthroughScenario::new()),
    };
    let topology = effective_topology(config);
    let net = Net::new(&topology, config.faults.clone(), config.net.clone(), n, seed)?;

    let registry = config
        .trust
        .signing
        .then(|| KeyRegistry::generate((0..n).map(AgentId), seed));
    let ttl_ceiling = config.ttl_ceiling();
    let agents: Vec<Agent> = (0..n)
        .map(|i| {
            let id = AgentId(i);
            let mut bootstrap = net.neighbors(id);
            Rng::derive(seed, i ^ 0xB007_5742).shuffle(&mut bootstrap);
            let view = match init_view(id, &bootstrap, config.view.capacity) {
                Ok(v) => v,
                Err(_) => PartialView::detached(id, config.view.capacity),
            };
            let store = Store::new(id, config.vector_blend_alpha, ttl_ceiling);
            let signer = registry
                .as_ref()
                .and_then(|r| Signer::for_agent(r, id));
            Agent::new(id, store, view, signer, Rng::derive(seed, i))
        })
        .collect();

    let baseline = (config.mode == Mode::BaselineDirect).then(|| BaselinePolling {
        interval: config.baseline_poll_interval,
        pairs: baseline_pairs(config, n),
    });

    let params = OwnedParams {
        gossip: config.gossip.clone(),
        view: config.view.clone(),
        filter: config.filter.clone(),
        health: config.health.clone(),
        signing: config.trust.signing,
        corroboration: config.trust.corroboration.clone(),
        reputation: config.trust.reputation.clone(),
    };
    let (stop, max_rounds) = stop_rule(config);
    let mut world = World::new(
        params,
        registry,
        agents,
        net,
        baseline,
        max_rounds,
        stop,
        config.track_divergence,
    );
    world.adversaries = config.trust.adversaries.iter().map(|a| a.agent).collect();
    Ok((world, scenario))
}

fn effective_topology(config: &RunConfig) -> Topology {
    match config.scenario {
        ScenarioKind::Synthetic => config.topology.clone(),
        ScenarioKind::Factory | ScenarioKind::Walkthrough => Topology::Complete,
        ScenarioKind::Disaster => Topology::Grid {
            width: config.disaster.grid_width,
            height: config.disaster.grid_height,
            comm_range: config.disaster.robot_range.max(1),
        },
    }
}

fn stop_rule(config: &RunConfig) -> (StopRule, u64) {
    let cap = config.max_rounds();
    match config.scenario {
        ScenarioKind::Synthetic => (config.run_until.clone(), cap),
        ScenarioKind::Factory => (
            StopRule::Rounds { rounds: config.factory.horizon_rounds },
            cap.max(config.factory.horizon_rounds),
        ),
        ScenarioKind::Disaster => (
            StopRule::Rounds { rounds: config.disaster.horizon_rounds },
            cap.max(config.disaster.horizon_rounds),
        ),
        ScenarioKind::Walkthrough => (StopRule::TrackedConverged, cap),
    }
}

fn baseline_pairs(config: &RunConfig, n: u64) -> Vec<(AgentId, AgentId)> {
    match config.scenario {
        // Star: every spoke polls the hub.
        ScenarioKind::Factory => {
            let hub = config.factory.poll_hub;
            (0..n).filter(|&i| i != hub).map(|i| (AgentId(i), AgentId(hub))).collect()
        }
        // Fixed neighbor pairs.
        _ => (0..n / 2).map(|k| (AgentId(2 * k), AgentId(2 * k + 1))).collect(),
    }
}

fn scenario_name(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::Factory => "factory",
        ScenarioKind::Disaster => "disaster",
        ScenarioKind::Walkthrough => "walkthrough",
        ScenarioKind::Synthetic => "synthetic",
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::GossipAugmented => "GossipAugmented",
        Mode::BaselineDirect => "BaselineDirect",
    }
}

/// Execute one run and compute its report.
pub fn execute(config: &RunConfig, seed: u64, keep_trace: bool) -> Result<RunOutput, String> {
    let (mut world, mut scenario) = build(config, seed)?;
    sim::run(&mut world, scenario.as_mut());
    let ctx = RunContext {
        scenario: scenario_name(config.scenario).to_string(),
        mode: mode_name(config.mode).to_string(),
        seed,
        n_agents: config.n_for_scenario(),
        round_len: config.gossip.round_len,
        pl_quantile: config.pl_quantile,
        config_digest: config.digest(seed),
        timed_out: world.timed_out,
        partition_windows: world
            .net
            .faults
            .partitions
            .iter()
            .map(|p| (p.start_tick, p.end_tick))
            .collect(),
    };
    let report = metrics::compute(&world.trace, &ctx);
    Ok(RunOutput {
        report,
        trace_ndjson: keep_trace.then(|| world.trace.to_ndjson()),
    })
}

/// Execute one run and hand the finished world back, for tests that inspect
/// protocol state directly.
pub fn execute_world(config: &RunConfig, seed: u64) -> Result<(World, MetricsReport), String> {
    let (mut world, mut scenario) = build(config, seed)?;
    sim::run(&mut world, scenario.as_mut());
    let ctx = RunContext {
        scenario: scenario_name(config.scenario).to_string(),
        mode: mode_name(config.mode).to_string(),
        seed,
        n_agents: config.n_for_scenario(),
        round_len: config.gossip.round_len,
        pl_quantile: config.pl_quantile,
        config_digest: config.digest(seed),
        timed_out: world.timed_out,
        partition_windows: world
            .net
            .faults
            .partitions
            .iter()
            .map(|p| (p.start_tick, p.end_tick))
            .collect(),
    };
    let report = metrics::compute(&world.trace, &ctx);
    Ok((world, report))
}

/// The annotated walkthrough: each scripted step asserted against the run.
pub struct WalkthroughReport {
    pub steps: Vec<StepRecord>,
    pub report: MetricsReport,
    pub all_passed: bool,
}

pub fn execute_walkthrough(config: &RunConfig, seed: u64) -> Result<WalkthroughReport, String> {
    let mut config = config.clone();
    config.scenario = ScenarioKind::Walkthrough;
    config.track_divergence = true;
    // Rebuild with a concrete walkthrough scenario so its adaptation state
    // stays inspectable after the run.
    let (mut world, _) = build(&config, seed)?;
    let mut scenario = WalkthroughScenario::new();
    sim::run(&mut world, &mut scenario);

    let mut steps = Vec::new();
    let mut record = |step: &str, passed: bool, detail: String| {
        steps.push(StepRecord { step: step.to_string(), passed, detail });
    };

    // Step 1: the local observation landed in the quality agent's store.
    let stored = world
        .agent(AgentId(walkthrough::QUALITY))
        .store
        .get(walkthrough::DEFECT_KEY)
        .map(|e| e.effective_value().clone());
    record(
        "step1_local_semantic_update",
        stored.as_ref() == scenario.injected_value.as_ref(),
        format!("{stored:?}"),
    );

    // Step 2: push-pull spread reached every agent; Critical suppression
    // threshold is k * m.
    let everyone = (0..4).all(|i| {
        world
            .agent(AgentId(i))
            .store
            .get(walkthrough::DEFECT_KEY)
            .is_some()
    });
    let threshold = world.params.gossip.suppression_k
        * world.params.gossip.critical_suppression_multiplier;
    record(
        "step2_gossip_dissemination",
        everyone && threshold > world.params.gossip.suppression_k,
        format!("all informed: {everyone}, critical threshold {threshold}"),
    );

    // Step 3: behavioral adaptations, each exactly once.
    record(
        "step3_arm_speed_reduced",
        (scenario.arm_speed - 80.0).abs() < 1e-9,
        format!("speed {}", scenario.arm_speed),
    );
    record(
        "step3_material_rerouted",
        scenario.route == "alternate_path",
        scenario.route.clone(),
    );
    record(
        "step3_planner_deprioritized",
        scenario.planner_deprioritized,
        format!("{}", scenario.planner_deprioritized),
    );

    // Step 4: the structured protocol interaction was logged.
    let structured = world.trace.events.iter().any(|e| {
        matches!(e, crate::trace::TraceEvent::ScenarioNote { label, .. } if label == "structured_call")
    });
    record("step4_structured_call_logged", structured, format!("{structured}"));

    let ctx = RunContext {
        scenario: "walkthrough".to_string(),
        mode: mode_name(config.mode).to_string(),
        seed,
        n_agents: 4,
        round_len: config.gossip.round_len,
        pl_quantile: config.pl_quantile,
        config_digest: config.digest(seed),
        timed_out: world.timed_out,
        partition_windows: Vec::new(),
    };
    let report = metrics::compute(&world.trace, &ctx);

    // Step 5: divergence over tracked keys fell to zero and the uninformed
    // fraction never rose.
    let final_d = report.divergence.series.last().copied();
    let coverage_monotone = report
        .tracked
        .get(walkthrough::DEFECT_KEY)
        .map(|k| k.coverage.windows(2).all(|w| w[1] >= w[0]))
        .unwrap_or(false);
    record(
        "step5_divergence_reaches_zero",
        final_d == Some(0.0),
        format!("final D = {final_d:?}"),
    );
    record(
        "step5_uninformed_fraction_non_increasing",
        coverage_monotone,
        format!("{coverage_monotone}"),
    );

    let all_passed = steps.iter().all(|s| s.passed);
    Ok(WalkthroughReport { steps, report, all_passed })
}

/// Run many independent (config, seed) jobs, preserving input order.
/// Parallel across runs when built with the `parallel` feature and
/// `jobs != 1`; each run stays internally sequential either way.
pub fn execute_batch(
    jobs: &[(RunConfig, u64)],
    keep_trace: bool,
    parallelism: usize,
) -> Vec<Result<RunOutput, String>> {
    #[cfg(feature = "parallel")]
    {
        if parallelism != 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build();
            if let Ok(pool) = pool {
                use rayon::prelude::*;
                return pool.install(|| {
                    jobs.par_iter()
                        .map(|(config, seed)| execute(config, *seed, keep_trace))
                        .collect()
                });
            }
        }
    }
    let _ = parallelism;
    execute_batch_sequential(jobs, keep_trace)
}

/// Always-sequential batch execution; the comparison baseline for the
/// parallel path and the fallback when the feature is off.
pub fn execute_batch_sequential(
    jobs: &[(RunConfig, u64)],
    keep_trace: bool,
) -> Vec<Result<RunOutput, String>> {
    jobs.iter()
        .map(|(config, seed)| execute(config, *seed, keep_trace))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn tiny_config(n: u64) -> RunConfig {
        let mut config = RunConfig::default();
        config.n_agents = n;
        config.max_ticks = 2000;
        config
    }

    #[test]
    fn a_default_synthetic_run_converges() {
        let out = execute(&tiny_config(8), 7, false).unwrap();
        assert!(!out.report.timed_out);
        let key = &out.report.tracked["alert/default"];
        assert_eq!(key.pc_final, 1.0);
        assert!(key.fct_rounds.is_some());
    }

    #[test]
    fn identical_seeds_give_identical_reports_and_traces() {
        let config = tiny_config(8);
        let a = execute(&config, 42, true).unwrap();
        let b = execute(&config, 42, true).unwrap();
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
        assert_eq!(a.trace_ndjson, b.trace_ndjson);
        assert_eq!(a.report.trace_hash, b.report.trace_hash);
    }

    #[test]
    fn different_seeds_change_the_trace() {
        let config = tiny_config(8);
        let a = execute(&config, 1, false).unwrap();
        let b = execute(&config, 2, false).unwrap();
        assert_ne!(a.report.trace_hash, b.report.trace_hash);
    }

    #[test]
    fn parallel_and_sequential_batches_agree() {
        let config = tiny_config(8);
        let jobs: Vec<(RunConfig, u64)> = (0..6).map(|s| (config.clone(), s)).collect();
        let par = execute_batch(&jobs, false, 0);
        let seq = execute_batch_sequential(&jobs, false);
        for (p, s) in par.iter().zip(seq.iter()) {
            let (p, s) = (p.as_ref().unwrap(), s.as_ref().unwrap());
            assert_eq!(p.report.trace_hash, s.report.trace_hash);
            assert_eq!(
                serde_json::to_string(&p.report).unwrap(),
                serde_json::to_string(&s.report).unwrap()
            );
        }
    }
}
