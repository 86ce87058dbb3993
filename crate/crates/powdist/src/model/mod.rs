//! Core data model: jobs, dependency graphs, power tables, and
//! total-execution-time evaluation.

mod parse;
mod power;

pub use parse::parse_graph;
pub use power::{parse_power_table, PowerBoundSet, PowerEntry, PowerTable};

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

/// Identifies one job: node index and position in that node's sequence, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId {
    pub node: u32,
    pub index: u32,
}

impl JobId {
    pub fn new(node: u32, index: u32) -> Self {
        JobId { node, index }
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J_{{{},{}}}", self.node, self.index)
    }
}

/// A block of one node's execution between blocking communication points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub id: JobId,
    /// Abstract work units; execution time is work divided by the admitted frequency.
    pub work: f64,
    /// Fraction of the work that does not scale with frequency (0 = fully CPU-bound).
    pub serial_fraction: f64,
}

/// Validated job dependency graph. Immutable after construction.
#[derive(Debug, Clone)]
pub struct DependencyGraph {
    node_count: u32,
    jobs: BTreeMap<JobId, Job>,
    edges: BTreeSet<(JobId, JobId)>,
    parents: BTreeMap<JobId, Vec<JobId>>,
    children: BTreeMap<JobId, Vec<JobId>>,
    topo: Vec<JobId>,
}

impl DependencyGraph {
    /// Builds and validates a graph. `edges` holds (prerequisite, dependent)
    /// pairs; serial edges between consecutive jobs of a node are added
    /// implicitly and duplicates are ignored.
    pub fn new(node_count: u32, jobs: Vec<Job>, edges: Vec<(JobId, JobId)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Validation("node count must be at least 1".into()));
        }
        let mut job_map: BTreeMap<JobId, Job> = BTreeMap::new();
        for job in jobs {
            if job.id.node == 0 || job.id.node > node_count {
                return Err(Error::Validation(format!(
                    "{} references node outside 1..={}",
                    job.id, node_count
                )));
            }
            if job.id.index == 0 {
                return Err(Error::Validation(format!("{} job index must be 1-based", job.id)));
            }
            if !(job.work > 0.0) {
                return Err(Error::Validation(format!("{} work must be > 0", job.id)));
            }
            if !(0.0..=1.0).contains(&job.serial_fraction) {
                return Err(Error::Validation(format!(
                    "{} serial_fraction must lie in [0,1]",
                    job.id
                )));
            }
            if job_map.insert(job.id, job).is_some() {
                return Err(Error::Validation(format!("duplicate job {}", job.id)));
            }
        }
        if job_map.is_empty() {
            return Err(Error::Validation("graph declares no jobs".into()));
        }
        // Per-node sequences must be contiguous from 1, so every serial
        // predecessor exists.
        let mut per_node: BTreeMap<u32, u32> = BTreeMap::new();
        for id in job_map.keys() {
            *per_node.entry(id.node).or_insert(0) += 1;
        }
        for (&node, &count) in &per_node {
            for index in 1..=count {
                if !job_map.contains_key(&JobId::new(node, index)) {
                    return Err(Error::Validation(format!(
                        "node {} has {} jobs but is missing index {}",
                        node, count, index
                    )));
                }
            }
        }

        let mut edge_set: BTreeSet<(JobId, JobId)> = BTreeSet::new();
        for (src, dst) in edges {
            for id in [src, dst] {
                if !job_map.contains_key(&id) {
                    return Err(Error::Validation(format!("dependency references unknown job {id}")));
                }
            }
            if src == dst {
                return Err(Error::Cycle(format!("{src} -> {dst}")));
            }
            edge_set.insert((src, dst));
        }
        // Implicit serial edges: every job depends on its predecessor.
        for id in job_map.keys() {
            if id.index > 1 {
                edge_set.insert((JobId::new(id.node, id.index - 1), *id));
            }
        }

        // A job may depend on at most one job of any given other node.
        for (&id, _) in &job_map {
            let mut seen: BTreeSet<u32> = BTreeSet::new();
            for &(src, dst) in edge_set.iter().filter(|(_, dst)| *dst == id) {
                let _ = dst;
                if src.node == id.node {
                    continue;
                }
                if !seen.insert(src.node) {
                    return Err(Error::Validation(format!(
                        "{id} depends on multiple jobs of node {}",
                        src.node
                    )));
                }
            }
        }

        let mut parents: BTreeMap<JobId, Vec<JobId>> = BTreeMap::new();
        let mut children: BTreeMap<JobId, Vec<JobId>> = BTreeMap::new();
        for id in job_map.keys() {
            parents.insert(*id, Vec::new());
            children.insert(*id, Vec::new());
        }
        for &(src, dst) in &edge_set {
            parents.get_mut(&dst).unwrap().push(src);
            children.get_mut(&src).unwrap().push(dst);
        }

        let topo = topological_order(&job_map, &parents, &children)?;

        Ok(DependencyGraph {
            node_count,
            jobs: job_map,
            edges: edge_set,
            parents,
            children,
            topo,
        })
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn job_count(&self) -> usize {
        self.jobs.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn job(&self, id: JobId) -> Option<&Job> {
        self.jobs.get(&id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.jobs.values()
    }

    pub fn job_ids(&self) -> impl Iterator<Item = JobId> + '_ {
        self.jobs.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (JobId, JobId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, src: JobId, dst: JobId) -> bool {
        self.edges.contains(&(src, dst))
    }

    pub fn parents(&self, id: JobId) -> &[JobId] {
        self.parents.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn children(&self, id: JobId) -> &[JobId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Jobs in a valid topological order (parents before children).
    pub fn topo_order(&self) -> &[JobId] {
        &self.topo
    }

    /// Jobs with no incoming edges.
    pub fn initial_jobs(&self) -> Vec<JobId> {
        self.jobs
            .keys()
            .copied()
            .filter(|id| self.parents[id].is_empty())
            .collect()
    }

    /// Jobs with no outgoing edges.
    pub fn final_jobs(&self) -> Vec<JobId> {
        self.jobs
            .keys()
            .copied()
            .filter(|id| self.children[id].is_empty())
            .collect()
    }

    /// The job sequence of one node, in index order.
    pub fn node_jobs(&self, node: u32) -> Vec<JobId> {
        self.jobs
            .keys()
            .copied()
            .filter(|id| id.node == node)
            .collect()
    }
}

fn topological_order(
    jobs: &BTreeMap<JobId, Job>,
    parents: &BTreeMap<JobId, Vec<JobId>>,
    children: &BTreeMap<JobId, Vec<JobId>>,
) -> Result<Vec<JobId>> {
    let mut indegree: BTreeMap<JobId, usize> = jobs.keys().map(|id| (*id, parents[id].len())).collect();
    let mut queue: VecDeque<JobId> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut order = Vec::with_capacity(jobs.len());
    while let Some(id) = queue.pop_front() {
        order.push(id);
        for &child in &children[&id] {
            let d = indegree.get_mut(&child).unwrap();
            *d -= 1;
            if *d == 0 {
                queue.push_back(child);
            }
        }
    }
    if order.len() == jobs.len() {
        return Ok(order);
    }
    // Recover one concrete cycle for the diagnostic: walk parent links among
    // the unresolved jobs until a repeat.
    let leftover: BTreeSet<JobId> = jobs
        .keys()
        .copied()
        .filter(|id| !order.contains(id))
        .collect();
    let start = *leftover.iter().next().unwrap();
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let next = parents[&cur]
            .iter()
            .copied()
            .find(|p| leftover.contains(p))
            .unwrap();
        if let Some(pos) = path.iter().position(|&id| id == next) {
            let mut cycle: Vec<String> = path[pos..].iter().rev().map(|id| id.to_string()).collect();
            cycle.push(next.to_string());
            return Err(Error::Cycle(cycle.join(" -> ")));
        }
        path.push(next);
        cur = next;
    }
}

/// Maps every job to the power bound its node honours while running it.
pub type BoundAssignment = BTreeMap<JobId, u32>;

/// Execution time of `job` under power bound `bound_mw`.
///
/// The job runs at the highest frequency whose single-core power fits under
/// the bound; the optional serial fraction is charged at the node's top
/// frequency regardless of the bound.
pub fn execution_time_of_job(job: &Job, bound_mw: u32, table: &PowerTable) -> Result<f64> {
    let freq = table.max_freq_within(job.id.node, bound_mw)?;
    let top = table.top_freq(job.id.node)?;
    let s = job.serial_fraction;
    Ok(job.work * (s / top as f64 + (1.0 - s) / freq as f64))
}

/// Sum of execution times along a dependency-chained path.
pub fn path_time(
    path: &[JobId],
    graph: &DependencyGraph,
    assignment: &BoundAssignment,
    table: &PowerTable,
) -> Result<f64> {
    for pair in path.windows(2) {
        if !graph.has_edge(pair[0], pair[1]) {
            return Err(Error::Validation(format!(
                "path is not dependency-chained at {} -> {}",
                pair[0], pair[1]
            )));
        }
    }
    let mut total = 0.0;
    for id in path {
        let job = graph
            .job(*id)
            .ok_or_else(|| Error::Validation(format!("path references unknown job {id}")))?;
        let bound = assignment.get(id).copied().ok_or(Error::UnmappedJob {
            node: id.node,
            index: id.index,
        })?;
        total += execution_time_of_job(job, bound, table)?;
    }
    Ok(total)
}

/// Execution time of the longest path through the graph, by dynamic
/// programming over the topological order.
pub fn total_execution_time(
    graph: &DependencyGraph,
    assignment: &BoundAssignment,
    table: &PowerTable,
) -> Result<f64> {
    let mut finish: BTreeMap<JobId, f64> = BTreeMap::new();
    let mut makespan = 0.0f64;
    for &id in graph.topo_order() {
        let job = graph.job(id).unwrap();
        let bound = assignment.get(&id).copied().ok_or(Error::UnmappedJob {
            node: id.node,
            index: id.index,
        })?;
        let tau = execution_time_of_job(job, bound, table)?;
        let start = graph
            .parents(id)
            .iter()
            .map(|p| finish[p])
            .fold(0.0f64, f64::max);
        let end = start + tau;
        finish.insert(id, end);
        makespan = makespan.max(end);
    }
    Ok(makespan)
}

/// Equal share of the cluster bound per node, remainder discarded.
pub fn nominal_power_bound(cluster_bound_mw: u32, node_count: u32) -> Result<u32> {
    if node_count == 0 {
        return Err(Error::Validation("node count must be at least 1".into()));
    }
    Ok(cluster_bound_mw / node_count)
}

/// Constant assignment mapping every job to the same bound.
pub fn uniform_assignment(graph: &DependencyGraph, bound_mw: u32) -> BoundAssignment {
    graph.job_ids().map(|id| (id, bound_mw)).collect()
}
