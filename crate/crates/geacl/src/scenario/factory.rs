//! Smart-factory floor: five machine agents share workload, queue length,
//! and status while tasks arrive stochastically; a defect spike at one
//! workstation must reach everyone so each role can adapt.

use crate::config::{FactoryConfig, RunConfig};
use crate::envelope::{AgentId, Envelope, PriorityClass, Value};
use crate::rng::Rng;
use crate::sim::{Scenario, World};
use serde::Serialize;

const N: usize = 5;
pub const ARM: u64 = 0;
pub const MATERIAL: u64 = 1;
pub const QUALITY: u64 = 2;
pub const PLANNER: u64 = 3;

/// Time to do one task, in speed units; a machine at speed 100 completes
/// one task per round.
const TASK_COST: f64 = 100.0;

#[derive(Debug, Clone, Serialize)]
struct Environment {
    arrivals: Vec<(u64, u64)>,
    slowdowns: Vec<(u64, u64, f64)>,
    spike_tick: Option<u64>,
    crashes: Vec<(u64, u64)>,
    seed: u64,
}

pub struct FactoryScenario {
    cfg: FactoryConfig,
    round_len: u64,
    horizon: u64,
    env: Environment,
    env_hash: String,
    arrival_idx: usize,
    speed: [f64; N],
    queue: [u64; N],
    progress: [f64; N],
    adapted: [bool; N],
    route: String,
    planner_deprioritized: bool,
    defect_key: String,
    defect_injected: bool,
    shock_tick: Option<u64>,
    queues_before_done: bool,
    queues_after_done: bool,
    tasks_arrived: u64,
    tasks_completed: u64,
    adaptations: u64,
}

impl FactoryScenario {
    pub fn new(config: &RunConfig, seed: u64) -> Self {
        let cfg = config.factory.clone();
        let round_len = config.gossip.round_len;
        let horizon = cfg.horizon_rounds;
        // Pre-generate the task arrival schedule from the environment
        // stream, so baseline and gossip runs at one seed see one world.
        let mut env_rng = Rng::derive(seed, 0xFAC7);
        let mut arrivals = Vec::new();
        for tick in 0..horizon * round_len {
            if env_rng.chance(cfg.task_rate) {
                arrivals.push((tick, env_rng.below(N as u64)));
            }
        }
        let env = Environment {
            arrivals,
            slowdowns: cfg.slowdowns.iter().map(|s| (s.tick, s.agent, s.factor)).collect(),
            spike_tick: cfg.defect_spike.as_ref().map(|s| s.tick),
            crashes: config.faults.crashes.iter().map(|c| (c.tick, c.agent)).collect(),
            seed,
        };
        let env_hash = super::env_hash(&env);
        let defect_key = format!(
            "defect/{}",
            cfg.defect_spike.as_ref().map_or("WS4".to_string(), |s| s.workstation.clone())
        );
        FactoryScenario {
            cfg,
            round_len,
            horizon,
            env,
            env_hash,
            arrival_idx: 0,
            speed: [100.0; N],
            queue: [0; N],
            progress: [0.0; N],
            adapted: [false; N],
            route: "primary".into(),
            planner_deprioritized: false,
            defect_key,
            defect_injected: false,
            shock_tick: None,
            queues_before_done: false,
            queues_after_done: false,
            tasks_arrived: 0,
            tasks_completed: 0,
            adaptations: 0,
        }
    }

    pub fn horizon_rounds(&self) -> u64 {
        self.horizon
    }

    /// Route a task to the agent with the minimum believed queue length
    /// (ties to the smaller id). Beliefs come from the receiver's own store,
    /// except its own queue which it knows exactly.
    fn route_task(&mut self, world: &mut World, receiver: AgentId) {
        let mut best: Option<(f64, u64)> = None;
        let mut consulted_ages: Vec<u64> = Vec::new();
        let monitor_failed: Vec<u64> = {
            let agent = world.agent(receiver);
            agent.monitor.failed_peers().map(|p| p.0).collect()
        };
        for candidate in 0..N as u64 {
            if monitor_failed.contains(&candidate) {
                continue;
            }
            let believed = if candidate == receiver.0 {
                self.queue[candidate as usize] as f64
            } else {
                let agent = world.agent(receiver);
                match agent.store.get(&format!("load/{candidate}")) {
                    Some(entry) => {
                        consulted_ages
                            .push(world.now.0.saturating_sub(entry.envelope.created_tick.0));
                        match entry.effective_value() {
                            Value::Scalar(q) => *q,
                            _ => 0.0,
                        }
                    }
                    None => 0.0,
                }
            };
            let better = match best {
                None => true,
                Some((best_q, best_id)) => {
                    believed < best_q || (believed == best_q && candidate < best_id)
                }
            };
            if better {
                best = Some((believed, candidate));
            }
        }
        let Some((_, target)) = best else { return };
        if !world.is_alive(AgentId(target)) {
            // Routed into a crashed machine on stale beliefs; the task is
            // lost. Failure detection exists to shrink this window.
            return;
        }
        self.queue[target as usize] += 1;
        self.tasks_arrived += 1;
        if !consulted_ages.is_empty() {
            let mean = consulted_ages.iter().sum::<u64>() / consulted_ages.len() as u64;
            world.decision(receiver, mean);
        }
    }
}

impl Scenario for FactoryScenario {
    fn on_round_start(&mut self, world: &mut World) {
        let round = world.round;
        let window = (round * self.round_len, (round + 1) * self.round_len);
        if round == 0 {
            let hash = self.env_hash.clone();
            world.note(AgentId(0), "env_hash", hash);
        }

        for &(tick, agent, factor) in &self.env.slowdowns.clone() {
            if tick >= window.0 && tick < window.1 {
                self.speed[agent as usize] *= factor;
                world.note(AgentId(agent), "slowdown", format!("{factor}"));
                if self.shock_tick.is_none() {
                    self.shock_tick = Some(tick);
                }
            }
        }
        if let Some(spike_tick) = self.env.spike_tick {
            if !self.defect_injected && spike_tick >= window.0 && spike_tick < window.1 {
                self.defect_injected = true;
                let station = self
                    .cfg
                    .defect_spike
                    .as_ref()
                    .map_or("WS4".to_string(), |s| s.workstation.clone());
                world.put_local_at(
                    AgentId(QUALITY),
                    &self.defect_key.clone(),
                    Value::Fact("defect_spike".into(), station, "high_severity".into()),
                    PriorityClass::Critical,
                    self.cfg.defect_ttl_rounds,
                    true,
                );
                if self.shock_tick.is_none() {
                    self.shock_tick = Some(spike_tick);
                }
            }
        }
        // Record the queue picture the moment the shock lands, and again
        // ten rounds later, for the redistribution-efficiency ratio.
        if let Some(shock) = self.shock_tick {
            let shock_round = shock / self.round_len;
            if !self.queues_before_done && round == shock_round {
                self.queues_before_done = true;
                let detail = serde_json::to_string(
                    &self.queue.iter().map(|&q| q as f64).collect::<Vec<f64>>(),
                )
                .expect("queue vector serializes");
                world.note(AgentId(0), "queues_before_shock", detail);
            }
            if !self.queues_after_done && round == shock_round + 10 {
                self.queues_after_done = true;
                let detail = serde_json::to_string(
                    &self.queue.iter().map(|&q| q as f64).collect::<Vec<f64>>(),
                )
                .expect("queue vector serializes");
                world.note(AgentId(0), "queues_after_shock", detail);
            }
        }

        // Task arrivals scheduled inside this round.
        while self.arrival_idx < self.env.arrivals.len()
            && self.env.arrivals[self.arrival_idx].0 < window.1
        {
            let (_, receiver) = self.env.arrivals[self.arrival_idx];
            self.arrival_idx += 1;
            if world.is_alive(AgentId(receiver)) {
                self.route_task(world, AgentId(receiver));
            }
        }

        // Work the queues and publish load beliefs.
        for i in 0..N {
            let id = AgentId(i as u64);
            if !world.is_alive(id) {
                continue;
            }
            self.progress[i] += self.speed[i] / TASK_COST;
            while self.progress[i] >= 1.0 && self.queue[i] > 0 {
                self.progress[i] -= 1.0;
                self.queue[i] -= 1;
                self.tasks_completed += 1;
            }
            self.progress[i] = self.progress[i].min(2.0);
            world.put_local_at(
                id,
                &format!("load/{i}"),
                Value::Scalar(self.queue[i] as f64),
                PriorityClass::Routine,
                self.cfg.load_ttl_rounds,
                false,
            );
        }
    }

    fn on_commit(&mut self, world: &mut World, agent: AgentId, env: &Envelope) {
        if env.key != self.defect_key || self.adapted[agent.0 as usize] {
            return;
        }
        self.adapted[agent.0 as usize] = true;
        match agent.0 {
            ARM => {
                let before = self.speed[ARM as usize];
                self.speed[ARM as usize] = 0.8 * before;
                self.adaptations += 1;
                world.note(agent, "arm_slowdown", format!("{before}->{}", self.speed[ARM as usize]));
            }
            MATERIAL => {
                self.route = "alternate_path".into();
                self.adaptations += 1;
                world.note(agent, "reroute", self.route.clone());
            }
            PLANNER => {
                self.planner_deprioritized = true;
                self.adaptations += 1;
                world.note(agent, "planner_deprioritize", "WS4-dependent tasks".into());
                world.note(agent, "structured_call", "maintenance diagnostic request".into());
            }
            _ => {}
        }
    }

    fn on_round_end(&mut self, world: &mut World) {
        if world.round + 1 == self.horizon {
            let summary = serde_json::json!({
                "tasks_arrived": self.tasks_arrived,
                "tasks_completed": self.tasks_completed,
                "task_redistribution_efficiency": null,
                "failure_recovery_latency_ticks": null,
                "adaptations": self.adaptations,
            });
            world.note(AgentId(0), "factory_summary", summary.to_string());
        }
    }
}

/// Scripted inspectors used by the walkthrough and tests.
impl FactoryScenario {
    pub fn arm_speed(&self) -> f64 {
        self.speed[ARM as usize]
    }
    pub fn route(&self) -> &str {
        &self.route
    }
    pub fn planner_deprioritized(&self) -> bool {
        self.planner_deprioritized
    }
}
