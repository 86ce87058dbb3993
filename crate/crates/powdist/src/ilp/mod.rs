//! Integer program for optimal job-to-power-bound assignment: one binary
//! variable per (job, candidate bound), a continuous makespan variable, and
//! three constraint families (unique assignment per job, cluster power bound
//! per depth level, per-node makespan).

mod export;
mod solve;

pub use export::write_lp;
pub use solve::{exhaustive_oracle, solve_branch_and_bound};

use std::collections::BTreeMap;

use crate::depth::{concurrency_sets, DepthRange};
use crate::error::{Error, Result};
use crate::model::{execution_time_of_job, BoundAssignment, DependencyGraph, JobId, PowerBoundSet, PowerTable};

/// One decision variable: assign `job` to `bound_mw`. Execution time is
/// materialized at build time so the solver never consults the power table.
#[derive(Debug, Clone, Copy)]
pub struct Variable {
    pub job: JobId,
    pub bound_mw: u32,
    pub time: f64,
}

/// The built instance. Jobs are ordered by (max-depth, node, index); bounds
/// per job descending. The solver and the oracle both follow this order, so
/// tie-breaking is reproducible.
#[derive(Debug, Clone)]
pub struct IlpInstance {
    pub cluster_bound_mw: u32,
    pub node_count: u32,
    /// Job order used for search and tie-breaking.
    pub jobs: Vec<JobId>,
    /// Candidate bounds per job, descending, parallel to `jobs`.
    pub candidates: Vec<Vec<Variable>>,
    /// Depth levels each job occupies, parallel to `jobs`.
    pub levels: Vec<Vec<u32>>,
    /// Jobs (by position) occupying each depth level.
    pub level_members: Vec<Vec<usize>>,
}

impl IlpInstance {
    pub fn variable_count(&self) -> usize {
        self.candidates.iter().map(Vec::len).sum()
    }

    /// Rows per family: (unique-assignment, power-bound, makespan).
    pub fn constraint_counts(&self) -> (usize, usize, usize) {
        (self.jobs.len(), self.level_members.len(), self.node_count as usize)
    }

    pub fn constraint_count(&self) -> usize {
        let (a, p, m) = self.constraint_counts();
        a + p + m
    }

    fn position(&self, job: JobId) -> Option<usize> {
        self.jobs.iter().position(|&j| j == job)
    }

    /// Checks a complete assignment against every depth-level power row.
    pub fn is_feasible(&self, assignment: &BoundAssignment) -> bool {
        for members in &self.level_members {
            let mut total: u64 = 0;
            for &pos in members {
                match assignment.get(&self.jobs[pos]) {
                    Some(&b) => total += b as u64,
                    None => return false,
                }
            }
            if total > self.cluster_bound_mw as u64 {
                return false;
            }
        }
        true
    }

    /// The objective value of an assignment: the maximum over nodes of the
    /// per-node serial execution time.
    pub fn objective(&self, assignment: &BoundAssignment) -> Result<f64> {
        let mut per_node: BTreeMap<u32, f64> = BTreeMap::new();
        for (pos, &job) in self.jobs.iter().enumerate() {
            let bound = assignment.get(&job).copied().ok_or(Error::UnmappedJob {
                node: job.node,
                index: job.index,
            })?;
            let var = self.candidates[pos]
                .iter()
                .find(|v| v.bound_mw == bound)
                .ok_or_else(|| {
                    Error::Validation(format!("{job}: {bound} mW is not a candidate bound"))
                })?;
            *per_node.entry(job.node).or_insert(0.0) += var.time;
        }
        Ok(per_node.values().fold(0.0f64, |a, &b| a.max(b)))
    }
}

/// Solved assignment: the power bound per job and the objective it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub bounds: BoundAssignment,
    pub objective_time: f64,
    /// False when the solver stopped on its time limit with the incumbent.
    pub proved_optimal: bool,
}

/// Builds the instance from the graph, its depth ranges, and the candidate
/// bound sets. Fails fast when some node cannot operate under the cluster
/// bound at all.
pub fn build_instance(
    graph: &DependencyGraph,
    ranges: &BTreeMap<JobId, DepthRange>,
    bounds: &PowerBoundSet,
    table: &PowerTable,
    cluster_bound_mw: u32,
) -> Result<IlpInstance> {
    for node in 1..=graph.node_count() {
        if graph.node_jobs(node).is_empty() {
            continue;
        }
        let min = *bounds
            .bounds(node)?
            .first()
            .ok_or_else(|| Error::Validation(format!("node {node}: empty power bound set")))?;
        if min > cluster_bound_mw {
            return Err(Error::Infeasible(format!(
                "node {node}: minimum bound {min} mW exceeds the cluster bound {cluster_bound_mw} mW"
            )));
        }
    }

    let depths = crate::depth::max_depths(graph);
    let mut jobs: Vec<JobId> = graph.job_ids().collect();
    jobs.sort_by_key(|id| (depths[id], id.node, id.index));

    let mut candidates = Vec::with_capacity(jobs.len());
    let mut levels = Vec::with_capacity(jobs.len());
    for &job in &jobs {
        let mut vars = Vec::new();
        for &b in bounds.bounds(job.node)?.iter().rev() {
            let time = execution_time_of_job(graph.job(job).unwrap(), b, table)?;
            vars.push(Variable { job, bound_mw: b, time });
        }
        candidates.push(vars);
        let range = ranges[&job];
        levels.push((range.lo..=range.hi).collect());
    }

    let sets = concurrency_sets(ranges);
    let mut level_members = Vec::with_capacity(sets.len());
    for set in &sets {
        let members: Vec<usize> = set
            .iter()
            .map(|id| jobs.iter().position(|j| j == id).unwrap())
            .collect();
        level_members.push(members);
    }

    Ok(IlpInstance {
        cluster_bound_mw,
        node_count: graph.node_count(),
        jobs,
        candidates,
        levels,
        level_members,
    })
}

/// Frequency and execution time for each assigned job, for reporting.
pub fn assignment_csv(
    instance: &IlpInstance,
    assignment: &Assignment,
    table: &PowerTable,
) -> Result<String> {
    let mut rows: Vec<(JobId, u32)> = assignment.bounds.iter().map(|(&j, &b)| (j, b)).collect();
    rows.sort();
    let mut out = String::from("node,job,bound_mw,freq_mhz,time\n");
    for (job, bound) in rows {
        let freq = table.max_freq_within(job.node, bound)?;
        let pos = instance
            .position(job)
            .ok_or_else(|| Error::Validation(format!("unknown job {job}")))?;
        let time = instance.candidates[pos]
            .iter()
            .find(|v| v.bound_mw == bound)
            .map(|v| v.time)
            .unwrap();
        out.push_str(&format!("{},{},{},{},{}\n", job.node, job.index, bound, freq, time));
    }
    Ok(out)
}
