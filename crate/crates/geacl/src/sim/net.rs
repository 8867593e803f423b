//! Simulated network: topology variants, fault schedule (partitions,
//! crashes, link outages), latency and drop models.

use crate::envelope::{AgentId, Tick};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum Topology {
    Complete,
    RandomEdges { p: f64 },
    Grid { width: i64, height: i64, comm_range: u64 },
    Explicit { edges: Vec<(u64, u64)> },
}

impl Default for Topology {
    fn default() -> Self {
        Topology::Complete
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionWindow {
    pub start_tick: u64,
    pub end_tick: u64,
    /// Disjoint agent blocks covering the whole population.
    pub blocks: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashEvent {
    pub tick: u64,
    pub agent: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOutage {
    pub start_tick: u64,
    pub end_tick: u64,
    pub a: u64,
    pub b: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSchedule {
    pub partitions: Vec<PartitionWindow>,
    pub crashes: Vec<CrashEvent>,
    pub link_outages: Vec<LinkOutage>,
}

impl FaultSchedule {
    pub fn validate(&self, n: u64) -> Result<(), String> {
        for p in &self.partitions {
            if p.start_tick >= p.end_tick {
                return Err("partition window must have start < end".into());
            }
            let mut seen = BTreeSet::new();
            for block in &p.blocks {
                for &a in block {
                    if a >= n {
                        return Err(format!("partition names unknown agent {a}"));
                    }
                    if !seen.insert(a) {
                        return Err(format!("agent {a} appears in two partition blocks"));
                    }
                }
            }
            if seen.len() as u64 != n {
                return Err("partition blocks must cover all agents".into());
            }
        }
        for o in &self.link_outages {
            if o.start_tick >= o.end_tick {
                return Err("link outage must have start < end".into());
            }
        }
        for c in &self.crashes {
            if c.agent >= n {
                return Err(format!("crash names unknown agent {}", c.agent));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum LatencyModel {
    Constant { ticks: u64 },
    Uniform { min: u64, max: u64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Constant { ticks: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub drop_p: f64,
    pub latency: LatencyModel,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { drop_p: 0.0, latency: LatencyModel::default() }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.drop_p) {
            return Err("drop_p must be in [0,1]".into());
        }
        if let LatencyModel::Uniform { min, max } = self.latency {
            if min < 1 || max < min {
                return Err("uniform latency requires 1 <= min <= max".into());
            }
        }
        if let LatencyModel::Constant { ticks } = self.latency {
            if ticks < 1 {
                return Err("constant latency must be >= 1 tick".into());
            }
        }
        Ok(())
    }
}

/// Connectivity oracle for the engine: structural edges, positions for
/// range-based topologies, and the fault windows layered on top.
#[derive(Debug, Clone)]
pub struct Net {
    pub config: NetConfig,
    pub faults: FaultSchedule,
    n: u64,
    kind: NetKind,
    positions: Vec<(i64, i64)>,
    ranges: Vec<u64>,
}

#[derive(Debug, Clone)]
enum NetKind {
    Complete,
    Static(BTreeSet<(u64, u64)>),
    Range { width: i64, height: i64 },
}

fn norm_edge(a: u64, b: u64) -> (u64, u64) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Net {
    pub fn new(
        topology: &Topology,
        faults: FaultSchedule,
        config: NetConfig,
        n: u64,
        seed: u64,
    ) -> Result<Self, String> {
        faults.validate(n)?;
        config.validate()?;
        let mut positions = vec![(0i64, 0i64); n as usize];
        let mut ranges = vec![0u64; n as usize];
        let kind = match topology {
            Topology::Complete => NetKind::Complete,
            Topology::Explicit { edges } => {
                let mut set = BTreeSet::new();
                for &(a, b) in edges {
                    if a == b || a >= n || b >= n {
                        return Err(format!("bad explicit edge ({a},{b})"));
                    }
                    set.insert(norm_edge(a, b));
                }
                NetKind::Static(set)
            }
            Topology::RandomEdges { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err("edge probability must be in [0,1]".into());
                }
                let mut rng = Rng::derive(seed, 0x7090);
                let mut set = BTreeSet::new();
                for a in 0..n {
                    for b in (a + 1)..n {
                        if rng.chance(*p) {
                            set.insert((a, b));
                        }
                    }
                }
                NetKind::Static(set)
            }
            Topology::Grid { width, height, comm_range } => {
                if *width < 1 || *height < 1 || *comm_range < 1 {
                    return Err("grid needs width, height, comm_range >= 1".into());
                }
                for i in 0..n {
                    positions[i as usize] = (i as i64 % width, i as i64 / width % height);
                    ranges[i as usize] = *comm_range;
                }
                NetKind::Range { width: *width, height: *height }
            }
        };
        Ok(Net { config, faults, n, kind, positions, ranges })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn grid_bounds(&self) -> Option<(i64, i64)> {
        match self.kind {
            NetKind::Range { width, height } => Some((width, height)),
            _ => None,
        }
    }

    pub fn position(&self, a: AgentId) -> (i64, i64) {
        self.positions[a.0 as usize]
    }

    pub fn set_position(&mut self, a: AgentId, pos: (i64, i64)) {
        self.positions[a.0 as usize] = pos;
    }

    pub fn set_range(&mut self, a: AgentId, range: u64) {
        self.ranges[a.0 as usize] = range;
    }

    fn structural_edge(&self, a: u64, b: u64) -> bool {
        if a == b {
            return false;
        }
        match &self.kind {
            NetKind::Complete => true,
            NetKind::Static(set) => set.contains(&norm_edge(a, b)),
            NetKind::Range { .. } => {
                let (ax, ay) = self.positions[a as usize];
                let (bx, by) = self.positions[b as usize];
                let dist = (ax - bx).unsigned_abs() + (ay - by).unsigned_abs();
                dist <= self.ranges[a as usize].min(self.ranges[b as usize])
            }
        }
    }

    fn partition_blocks(&self, a: u64, b: u64, now: Tick) -> bool {
        for p in &self.faults.partitions {
            if now.0 >= p.start_tick && now.0 < p.end_tick {
                let block_of = |x: u64| p.blocks.iter().position(|blk| blk.contains(&x));
                if block_of(a) != block_of(b) {
                    return true;
                }
            }
        }
        false
    }

    fn link_down(&self, a: u64, b: u64, now: Tick) -> bool {
        self.faults.link_outages.iter().any(|o| {
            now.0 >= o.start_tick && now.0 < o.end_tick && norm_edge(o.a, o.b) == norm_edge(a, b)
        })
    }

    /// Can a message pass between a and b right now?
    pub fn edge_open(&self, a: AgentId, b: AgentId, now: Tick) -> bool {
        self.structural_edge(a.0, b.0)
            && !self.link_down(a.0, b.0, now)
            && !self.partition_blocks(a.0, b.0, now)
    }

    /// Draw a delivery latency from the sender's stream.
    pub fn latency(&self, rng: &mut Rng) -> u64 {
        match self.config.latency {
            LatencyModel::Constant { ticks } => ticks,
            LatencyModel::Uniform { min, max } => rng.in_range(min, max),
        }
    }

    /// All structural neighbors of `a` at tick 0, for view bootstrap.
    pub fn neighbors(&self, a: AgentId) -> Vec<AgentId> {
        (0..self.n)
            .filter(|&b| self.structural_edge(a.0, b))
            .map(AgentId)
            .collect()
    }

    /// Agents currently in contact with `a` (structural and fault-free).
    pub fn reachable(&self, a: AgentId, now: Tick, alive: impl Fn(u64) -> bool) -> BTreeSet<AgentId> {
        (0..self.n)
            .filter(|&b| b != a.0 && alive(b) && self.edge_open(a, AgentId(b), now))
            .map(AgentId)
            .collect()
    }

    pub fn partition_active(&self, index: usize, now: Tick) -> bool {
        self.faults
            .partitions
            .get(index)
            .is_some_and(|p| now.0 >= p.start_tick && now.0 < p.end_tick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(topology: Topology, faults: FaultSchedule, n: u64) -> Net {
        Net::new(&topology, faults, NetConfig::default(), n, 7).unwrap()
    }

    #[test]
    fn complete_topology_connects_everyone_but_self() {
        let net = net(Topology::Complete, FaultSchedule::default(), 4);
        assert!(net.edge_open(AgentId(0), AgentId(3), Tick(0)));
        assert!(!net.edge_open(AgentId(2), AgentId(2), Tick(0)));
    }

    #[test]
    fn partitions_block_exactly_inside_their_window() {
        let faults = FaultSchedule {
            partitions: vec![PartitionWindow {
                start_tick: 10,
                end_tick: 20,
                blocks: vec![vec![0, 1], vec![2, 3]],
            }],
            ..FaultSchedule::default()
        };
        let net = net(Topology::Complete, faults, 4);
        assert!(net.edge_open(AgentId(0), AgentId(2), Tick(9)));
        assert!(!net.edge_open(AgentId(0), AgentId(2), Tick(10)));
        assert!(net.edge_open(AgentId(0), AgentId(1), Tick(15)), "intra-block stays open");
        assert!(net.edge_open(AgentId(0), AgentId(2), Tick(20)), "heals at end");
    }

    #[test]
    fn link_outages_block_one_edge_only() {
        let faults = FaultSchedule {
            link_outages: vec![LinkOutage { start_tick: 0, end_tick: 100, a: 1, b: 2 }],
            ..FaultSchedule::default()
        };
        let net = net(Topology::Complete, faults, 4);
        assert!(!net.edge_open(AgentId(2), AgentId(1), Tick(50)));
        assert!(net.edge_open(AgentId(1), AgentId(3), Tick(50)));
    }

    #[test]
    fn grid_range_uses_manhattan_distance_and_the_smaller_range() {
        let mut net = net(
            Topology::Grid { width: 10, height: 10, comm_range: 2 },
            FaultSchedule::default(),
            4,
        );
        net.set_position(AgentId(0), (0, 0));
        net.set_position(AgentId(1), (1, 1));
        net.set_position(AgentId(2), (4, 0));
        assert!(net.edge_open(AgentId(0), AgentId(1), Tick(0)));
        assert!(!net.edge_open(AgentId(0), AgentId(2), Tick(0)));
        net.set_range(AgentId(1), 1);
        assert!(!net.edge_open(AgentId(0), AgentId(1), Tick(0)), "min of the two ranges");
    }

    #[test]
    fn invalid_partitions_are_rejected() {
        let faults = FaultSchedule {
            partitions: vec![PartitionWindow {
                start_tick: 10,
                end_tick: 20,
                blocks: vec![vec![0, 1], vec![1, 2, 3]],
            }],
            ..FaultSchedule::default()
        };
        assert!(faults.validate(4).is_err());
    }
}
