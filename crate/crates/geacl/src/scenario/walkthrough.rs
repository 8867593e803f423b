//! Scripted four-agent walkthrough: a quality agent observes a defect
//! spike, the update spreads with minimal suppression, each role adapts
//! exactly once, a structured call is logged, and divergence over the
//! tracked keys falls to zero.

use crate::envelope::{AgentId, Envelope, PriorityClass, Value};
use crate::sim::{Scenario, World};
use serde::Serialize;

pub const ARM: u64 = 0;
pub const MATERIAL: u64 = 1;
pub const QUALITY: u64 = 2;
pub const PLANNER: u64 = 3;

pub const DEFECT_KEY: &str = "defect/WS4";

pub struct WalkthroughScenario {
    pub arm_speed: f64,
    pub route: String,
    pub planner_deprioritized: bool,
    pub structured_call_logged: bool,
    adapted: [bool; 4],
    injected: bool,
    pub injected_value: Option<Value>,
}

impl Default for WalkthroughScenario {
    fn default() -> Self {
        WalkthroughScenario {
            arm_speed: 100.0,
            route: "primary".into(),
            planner_deprioritized: false,
            structured_call_logged: false,
            adapted: [false; 4],
            injected: false,
            injected_value: None,
        }
    }
}

impl WalkthroughScenario {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: String,
    pub passed: bool,
    pub detail: String,
}

impl Scenario for WalkthroughScenario {
    fn on_round_start(&mut self, world: &mut World) {
        if world.round == 0 {
            world.note(AgentId(0), "env_hash", super::env_hash(&"walkthrough"));
        }
        if world.round == 1 && !self.injected {
            self.injected = true;
            let value =
                Value::Fact("defect_spike".into(), "WS4".into(), "high_severity".into());
            self.injected_value = Some(value.clone());
            world.put_local_at(AgentId(QUALITY), DEFECT_KEY, value, PriorityClass::Critical, 16, true);
        }
    }

    fn on_commit(&mut self, world: &mut World, agent: AgentId, env: &Envelope) {
        if env.key != DEFECT_KEY || self.adapted[agent.0 as usize] {
            return;
        }
        self.adapted[agent.0 as usize] = true;
        match agent.0 {
            ARM => {
                let before = self.arm_speed;
                self.arm_speed = 0.8 * before;
                world.note(agent, "arm_slowdown", format!("{before}->{}", self.arm_speed));
            }
            MATERIAL => {
                self.route = "alternate_path".into();
                world.note(agent, "reroute", self.route.clone());
            }
            PLANNER => {
                self.planner_deprioritized = true;
                self.structured_call_logged = true;
                world.note(agent, "planner_deprioritize", "WS4-dependent tasks".into());
                world.note(agent, "structured_call", "maintenance diagnostic request".into());
            }
            _ => {}
        }
    }
}
