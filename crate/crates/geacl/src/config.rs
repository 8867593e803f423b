//! Run configuration: one JSON document drives a whole simulation. Unknown
//! fields are rejected; every default is overridable; dotted-path overrides
//! patch the document before it is parsed.

use crate::envelope::{PriorityClass, Value};
use crate::filter::FilterPolicy;
use crate::gossip::{GossipConfig, ReputationSettings, ViewConfig};
use crate::health::HealthConfig;
use crate::sim::net::{FaultSchedule, NetConfig, Topology};
use crate::sim::StopRule;
use crate::trust::CorroborationPolicy;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Factory,
    Disaster,
    Walkthrough,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    GossipAugmented,
    BaselineDirect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionSpec {
    pub round: u64,
    pub origin: u64,
    pub key: String,
    pub value: Value,
    pub priority: PriorityClass,
    #[serde(default = "default_injection_ttl")]
    pub ttl_rounds: u64,
}

fn default_injection_ttl() -> u64 {
    32
}

/// Deterministically expanded burst of scalar injections, for divergence
/// experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstSpec {
    pub count: u64,
    pub start_round: u64,
    pub end_round: u64,
    #[serde(default = "default_burst_priority")]
    pub priority: PriorityClass,
    #[serde(default = "default_injection_ttl")]
    pub ttl_rounds: u64,
}

fn default_burst_priority() -> PriorityClass {
    PriorityClass::Routine
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "behavior", deny_unknown_fields)]
pub enum AdversaryBehavior {
    /// Signs envelopes with its own key while claiming another origin.
    ForgeSignature { victim: u64 },
    /// Publishes a well-signed false claim under its own identity and
    /// pushes it aggressively.
    InjectFalseClaim { key: String, round: u64, priority: PriorityClass },
    /// Relays the injected false claim as if it had learned it honestly.
    Colluder,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub agent: u64,
    #[serde(flatten)]
    pub behavior: AdversaryBehavior,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    pub signing: bool,
    pub corroboration: Option<CorroborationPolicy>,
    pub reputation: ReputationSettings,
    pub adversaries: Vec<AdversarySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowdownSpec {
    pub tick: u64,
    pub agent: u64,
    pub factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectSpikeSpec {
    pub tick: u64,
    pub workstation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactoryConfig {
    /// Bernoulli task-arrival probability per tick.
    pub task_rate: f64,
    pub defect_spike: Option<DefectSpikeSpec>,
    pub slowdowns: Vec<SlowdownSpec>,
    /// Star hub for the baseline polling topology.
    pub poll_hub: u64,
    pub horizon_rounds: u64,
    pub defect_ttl_rounds: u64,
    pub load_ttl_rounds: u64,
}

impl Default for FactoryConfig {
    fn default() -> Self {
        FactoryConfig {
            task_rate: 0.08,
            defect_spike: Some(DefectSpikeSpec { tick: 150, workstation: "WS4".into() }),
            slowdowns: vec![SlowdownSpec { tick: 100, agent: 4, factor: 0.5 }],
            poll_hub: 3,
            horizon_rounds: 60,
            defect_ttl_rounds: 64,
            load_ttl_rounds: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisasterConfig {
    pub grid_width: i64,
    pub grid_height: i64,
    pub drones: u64,
    pub robots: u64,
    pub drone_speed: u64,
    pub drone_range: u64,
    pub robot_speed: u64,
    pub robot_range: u64,
    pub hazards: u64,
    pub survivors: u64,
    pub blocked_cells: u64,
    pub sensing_range: u64,
    pub waypoints_per_agent: u64,
    pub horizon_rounds: u64,
    pub fact_ttl_rounds: u64,
}

impl Default for DisasterConfig {
    fn default() -> Self {
        DisasterConfig {
            grid_width: 20,
            grid_height: 20,
            drones: 4,
            robots: 6,
            drone_speed: 2,
            drone_range: 4,
            robot_speed: 1,
            robot_range: 2,
            hazards: 6,
            survivors: 5,
            blocked_cells: 12,
            sensing_range: 1,
            waypoints_per_agent: 6,
            horizon_rounds: 80,
            fact_ttl_rounds: 96,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub mode: Mode,
    pub seed: u64,
    pub seeds: Option<Vec<u64>>,
    /// Population size; synthetic runs only (the scenarios fix their own).
    pub n_agents: u64,
    pub max_ticks: u64,
    pub gossip: GossipConfig,
    pub view: ViewConfig,
    pub filter: FilterPolicy,
    pub health: HealthConfig,
    pub trust: TrustConfig,
    pub topology: Topology,
    pub faults: FaultSchedule,
    pub net: NetConfig,
    pub injections: Vec<InjectionSpec>,
    pub burst: Option<BurstSpec>,
    pub run_until: StopRule,
    pub track_divergence: bool,
    pub vector_blend_alpha: f64,
    pub baseline_poll_interval: u64,
    pub pl_quantile: f64,
    pub factory: FactoryConfig,
    pub disaster: DisasterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: ScenarioKind::Synthetic,
            mode: Mode::GossipAugmented,
            seed: 0,
            seeds: None,
            n_agents: 16,
            max_ticks: 4000,
            gossip: GossipConfig::default(),
            view: ViewConfig::default(),
            filter: FilterPolicy::default(),
            health: HealthConfig::default(),
            trust: TrustConfig::default(),
            topology: Topology::Complete,
            faults: FaultSchedule::default(),
            net: NetConfig::default(),
            injections: vec![InjectionSpec {
                round: 1,
                origin: 0,
                key: "alert/default".into(),
                value: Value::Scalar(1.0),
                priority: PriorityClass::Critical,
                ttl_rounds: 32,
            }],
            burst: None,
            run_until: StopRule::TrackedConverged,
            track_divergence: false,
            vector_blend_alpha: 1.0,
            baseline_poll_interval: 5,
            pl_quantile: 0.95,
            factory: FactoryConfig::default(),
            disaster: DisasterConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, String> {
        let config: RunConfig = serde_json::from_value(value)
            .map_err(|e| format!("config error: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn n_for_scenario(&self) -> u64 {
        match self.scenario {
            ScenarioKind::Factory => 5,
            ScenarioKind::Disaster => self.disaster.drones + self.disaster.robots,
            ScenarioKind::Walkthrough => 4,
            ScenarioKind::Synthetic => self.n_agents,
        }
    }

    pub fn max_rounds(&self) -> u64 {
        (self.max_ticks / self.gossip.round_len).max(1)
    }

    /// Highest envelope ttl this run can produce; drives digest compaction.
    pub fn ttl_ceiling(&self) -> u64 {
        let mut ceiling = self.filter.max_ttl().max(self.health.heartbeat_ttl());
        match self.scenario {
            ScenarioKind::Factory => {
                ceiling = ceiling
                    .max(self.factory.defect_ttl_rounds)
                    .max(self.factory.load_ttl_rounds);
            }
            ScenarioKind::Disaster => {
                ceiling = ceiling.max(self.disaster.fact_ttl_rounds);
            }
            ScenarioKind::Walkthrough | ScenarioKind::Synthetic => {}
        }
        for inj in &self.injections {
            ceiling = ceiling.max(inj.ttl_rounds);
        }
        if let Some(burst) = &self.burst {
            ceiling = ceiling.max(burst.ttl_rounds);
        }
        ceiling
    }

    pub fn validate(&self) -> Result<(), String> {
        self.gossip.validate()?;
        self.filter.validate()?;
        self.health.validate()?;
        self.net.validate()?;
        let n = self.n_for_scenario();
        if n < 1 {
            return Err("population must be at least 1".into());
        }
        self.faults.validate(n)?;
        if !(self.vector_blend_alpha > 0.0 && self.vector_blend_alpha <= 1.0) {
            return Err("vector_blend_alpha must be in (0,1]".into());
        }
        if !(0.0 < self.pl_quantile && self.pl_quantile <= 1.0) {
            return Err("pl_quantile must be in (0,1]".into());
        }
        if self.baseline_poll_interval < 1 {
            return Err("baseline_poll_interval must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.factory.task_rate) {
            return Err("factory.task_rate must be in [0,1]".into());
        }
        if self.disaster.drones < 1 || self.disaster.robots < 1 {
            return Err("disaster needs at least one drone and one robot".into());
        }
        for inj in &self.injections {
            if inj.origin >= n {
                return Err(format!("injection origin {} out of range", inj.origin));
            }
            if inj.ttl_rounds < 1 {
                return Err("injection ttl_rounds must be >= 1".into());
            }
        }
        for adv in &self.trust.adversaries {
            if adv.agent >= n {
                return Err(format!("adversary agent {} out of range", adv.agent));
            }
            if let AdversaryBehavior::ForgeSignature { victim } = adv.behavior {
                if victim >= n {
                    return Err(format!("forgery victim {victim} out of range"));
                }
            }
        }
        if matches!(self.scenario, ScenarioKind::Factory) && self.factory.poll_hub >= 5 {
            return Err("factory.poll_hub must name one of the five agents".into());
        }
        Ok(())
    }

    /// Stable digest of the effective configuration (including the seed).
    pub fn digest(&self, seed: u64) -> String {
        let mut effective = self.clone();
        effective.seed = seed;
        effective.seeds = None;
        let text = serde_json::to_string(&effective).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        crate::trace::hex(&hasher.finalize())
    }
}

/// Patch a JSON document at a dotted path. The value is parsed as JSON when
/// possible, otherwise taken as a string.
pub fn apply_override(doc: &mut serde_json::Value, dotted: &str, raw: &str) -> Result<(), String> {
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = doc;
    let segments: Vec<&str> = dotted.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(format!("bad override path {dotted:?}"));
    }
    for (i, segment) in segments.iter().enumerate() {
        if i + 1 == segments.len() {
            match cursor {
                serde_json::Value::Object(map) => {
                    map.insert(segment.to_string(), parsed);
                    return Ok(());
                }
                _ => return Err(format!("override path {dotted:?} does not land in an object")),
            }
        }
        cursor = match cursor {
            serde_json::Value::Object(map) => map
                .entry(segment.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default())),
            _ => return Err(format!("override path {dotted:?} crosses a non-object")),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Sweepable axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    Fanout,
    Mode,
    DropP,
    SuppressionK,
    KCorroboration,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "N" | "n" => Ok(SweepAxis::N),
            "fanout" => Ok(SweepAxis::Fanout),
            "mode" => Ok(SweepAxis::Mode),
            "drop_p" => Ok(SweepAxis::DropP),
            "suppression_k" => Ok(SweepAxis::SuppressionK),
            "k_corroboration" => Ok(SweepAxis::KCorroboration),
            other => Err(format!(
                "unknown sweep axis {other:?} (expected N, fanout, mode, drop_p, suppression_k, k_corroboration)"
            )),
        }
    }
}

impl SweepAxis {
    pub fn dotted_path(self) -> &'static str {
        match self {
            SweepAxis::N => "n_agents",
            SweepAxis::Fanout => "gossip.fanout",
            SweepAxis::Mode => "gossip.mode",
            SweepAxis::DropP => "net.drop_p",
            SweepAxis::SuppressionK => "gossip.suppression_k",
            SweepAxis::KCorroboration => "trust.corroboration.k",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::from_json(r#"{"scenario":"synthetic","bogus":1}"#).unwrap_err();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn overrides_patch_nested_fields() {
        let mut doc = serde_json::json!({"scenario": "synthetic"});
        apply_override(&mut doc, "gossip.fanout", "4").unwrap();
        apply_override(&mut doc, "mode", "BaselineDirect").unwrap();
        let config = RunConfig::from_value(doc).unwrap();
        assert_eq!(config.gossip.fanout, 4);
        assert_eq!(config.mode, Mode::BaselineDirect);
    }

    #[test]
    fn digest_depends_on_seed_and_config() {
        let config = RunConfig::default();
        assert_ne!(config.digest(1), config.digest(2));
        let mut other = config.clone();
        other.gossip.fanout = 3;
        assert_ne!(config.digest(1), other.digest(1));
        assert_eq!(config.digest(1), RunConfig::default().digest(1));
    }

    #[test]
    fn bad_values_fail_validation() {
        let mut config = RunConfig::default();
        config.net.drop_p = 1.5;
        assert!(config.validate().is_err());
        let mut config = RunConfig::default();
        config.injections[0].origin = 99;
        assert!(config.validate().is_err());
    }
}
