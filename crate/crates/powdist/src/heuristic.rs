//! Online power-redistribution engine. Maintains the online dependency graph
//! built from report messages, turns blocked nodes' headroom into a power
//! budget, ranks running nodes by how many nodes they block, and emits new
//! per-node power bounds.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::PowerTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Running,
    Blocked,
}

/// Report sent by a node's block detector on every state change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportMessage {
    pub state: NodeState,
    pub node_id: u32,
    /// Nodes this one is waiting on; empty when running.
    pub blockers: BTreeSet<u32>,
    pub power_gain_mw: u32,
}

impl ReportMessage {
    pub fn running(node_id: u32) -> Self {
        ReportMessage {
            state: NodeState::Running,
            node_id,
            blockers: BTreeSet::new(),
            power_gain_mw: 0,
        }
    }

    pub fn blocked(node_id: u32, blockers: BTreeSet<u32>, power_gain_mw: u32) -> Self {
        ReportMessage {
            state: NodeState::Blocked,
            node_id,
            blockers,
            power_gain_mw,
        }
    }
}

/// New power bound for one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributeMessage {
    pub node_id: u32,
    pub power_bound_mw: u32,
}

/// How the controller turns blocked nodes into a distributable budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BudgetMode {
    /// Credit each blocked node with `p_o - p_s`, so the cluster bound holds
    /// regardless of what bound the node held when it blocked.
    #[default]
    Safe,
    /// Credit the power gain the node reported, as in the original
    /// formulation. Can transiently exceed the cluster bound when a node
    /// blocks while boosted.
    PaperFaithful,
}

#[derive(Debug, Clone)]
struct OnlineNode {
    state: NodeState,
    reported_gain_mw: u32,
    rank: u32,
    bound_mw: u32,
    /// Nodes this vertex is blocked on (its outgoing edges).
    blocking: BTreeSet<u32>,
}

/// The controller state machine. One message at a time; callers serialize.
#[derive(Debug, Clone)]
pub struct PowerEngine {
    cluster_bound_mw: u32,
    node_count: u32,
    share_mw: u32,
    mode: BudgetMode,
    idle_mw: BTreeMap<u32, u32>,
    vertices: BTreeMap<u32, OnlineNode>,
}

impl PowerEngine {
    /// `idle_mw` must cover every node id that will ever report; in safe
    /// mode it feeds the recomputed gain.
    pub fn new(
        cluster_bound_mw: u32,
        node_count: u32,
        mode: BudgetMode,
        idle_mw: BTreeMap<u32, u32>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Validation("node count must be at least 1".into()));
        }
        Ok(PowerEngine {
            cluster_bound_mw,
            node_count,
            share_mw: cluster_bound_mw / node_count,
            mode,
            idle_mw,
            vertices: BTreeMap::new(),
        })
    }

    pub fn from_table(
        cluster_bound_mw: u32,
        node_count: u32,
        mode: BudgetMode,
        table: &PowerTable,
    ) -> Result<Self> {
        let mut idle = BTreeMap::new();
        for node in 1..=node_count {
            idle.insert(node, table.idle_power(node)?);
        }
        Self::new(cluster_bound_mw, node_count, mode, idle)
    }

    /// Equal share of the cluster bound, the baseline every node starts at.
    pub fn share_mw(&self) -> u32 {
        self.share_mw
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn current_bound(&self, node_id: u32) -> u32 {
        self.vertices
            .get(&node_id)
            .map(|v| v.bound_mw)
            .unwrap_or(self.share_mw)
    }

    pub fn state_of(&self, node_id: u32) -> Option<NodeState> {
        self.vertices.get(&node_id).map(|v| v.state)
    }

    fn ensure_vertex(&mut self, node_id: u32) {
        self.vertices.entry(node_id).or_insert(OnlineNode {
            state: NodeState::Running,
            reported_gain_mw: 0,
            rank: 0,
            bound_mw: self.share_mw,
            blocking: BTreeSet::new(),
        });
    }

    fn gain_of(&self, node_id: u32, vertex: &OnlineNode) -> u64 {
        match self.mode {
            BudgetMode::PaperFaithful => vertex.reported_gain_mw as u64,
            BudgetMode::Safe => {
                let idle = self.idle_mw.get(&node_id).copied().unwrap_or(0);
                self.share_mw.saturating_sub(idle) as u64
            }
        }
    }

    /// Applies one report: updates the vertex and its edges, recomputes the
    /// budget and the ranks, and returns the bound changes for running nodes
    /// whose share moved.
    pub fn process_message(&mut self, report: &ReportMessage) -> Result<Vec<DistributeMessage>> {
        if report.node_id == 0 || report.node_id > self.node_count {
            return Err(Error::Validation(format!(
                "report from unknown node {} (cluster has {})",
                report.node_id, self.node_count
            )));
        }
        if report.state == NodeState::Running
            && (!report.blockers.is_empty() || report.power_gain_mw != 0)
        {
            return Err(Error::Validation(
                "running report must carry no blockers and zero gain".into(),
            ));
        }

        self.ensure_vertex(report.node_id);
        for &blocker in &report.blockers {
            self.ensure_vertex(blocker);
        }
        let vertex = self.vertices.get_mut(&report.node_id).unwrap();
        vertex.state = report.state;
        vertex.reported_gain_mw = report.power_gain_mw;
        vertex.blocking = report.blockers.clone();

        let budget: u64 = self
            .vertices
            .iter()
            .filter(|(_, v)| v.state == NodeState::Blocked)
            .map(|(&id, v)| self.gain_of(id, v))
            .sum();
        let total_rank = self.rank_graph();
        Ok(self.distribute_power(budget, total_rank))
    }

    /// Recomputes every running vertex's rank (its in-degree in the online
    /// graph) and returns the sum of ranks.
    pub fn rank_graph(&mut self) -> u32 {
        let mut indegree: BTreeMap<u32, u32> = BTreeMap::new();
        for vertex in self.vertices.values() {
            for &blocker in &vertex.blocking {
                *indegree.entry(blocker).or_insert(0) += 1;
            }
        }
        let mut total = 0;
        for (&id, vertex) in self.vertices.iter_mut() {
            if vertex.state == NodeState::Running {
                vertex.rank = indegree.get(&id).copied().unwrap_or(0);
                total += vertex.rank;
            } else {
                vertex.rank = 0;
            }
        }
        total
    }

    /// Splits the budget over running nodes in proportion to rank; when no
    /// running node blocks anyone, splits it equally instead. Emits a message
    /// only where the bound actually changes, ascending node id.
    pub fn distribute_power(&mut self, budget_mw: u64, total_rank: u32) -> Vec<DistributeMessage> {
        let running: Vec<u32> = self
            .vertices
            .iter()
            .filter(|(_, v)| v.state == NodeState::Running)
            .map(|(&id, _)| id)
            .collect();
        let mut messages = Vec::new();
        for id in running.iter().copied() {
            let vertex = &self.vertices[&id];
            let extra = if total_rank > 0 {
                budget_mw * vertex.rank as u64 / total_rank as u64
            } else if !running.is_empty() {
                budget_mw / running.len() as u64
            } else {
                0
            };
            let new_bound = (self.share_mw as u64 + extra).min(u32::MAX as u64) as u32;
            let vertex = self.vertices.get_mut(&id).unwrap();
            if vertex.bound_mw != new_bound {
                vertex.bound_mw = new_bound;
                messages.push(DistributeMessage {
                    node_id: id,
                    power_bound_mw: new_bound,
                });
            }
        }
        messages
    }

    /// Text dump of the online graph for status inspection.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "cluster_bound={} mW nodes={} share={} mW\n",
            self.cluster_bound_mw, self.node_count, self.share_mw
        );
        for (&id, v) in &self.vertices {
            let state = match v.state {
                NodeState::Running => "running",
                NodeState::Blocked => "blocked",
            };
            let blocking: Vec<String> = v.blocking.iter().map(u32::to_string).collect();
            out.push_str(&format!(
                "node {id}: {state} bound={} mW rank={} gain={} mW blocked_on=[{}]\n",
                v.bound_mw,
                v.rank,
                v.reported_gain_mw,
                blocking.join(",")
            ));
        }
        out
    }
}

/// Reclaimable power when a node blocks: the draw at its pre-block operating
/// point minus idle. With more than one core active, the difference from
/// idling one core.
pub fn power_gain(table: &PowerTable, node: u32, active_cores: u32, freq_mhz: u32) -> Result<u32> {
    if active_cores == 0 {
        return Err(Error::Validation("active core count must be > 0".into()));
    }
    let busy = if active_cores == 1 {
        table.power(node, 1, freq_mhz)?
    } else {
        table.power(node, active_cores - 1, freq_mhz)?
    };
    let idle = table.idle_power(node)?;
    Ok(busy.saturating_sub(idle))
}
