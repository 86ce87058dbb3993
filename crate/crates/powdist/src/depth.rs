//! Job concurrency analysis: max-depths, depth ranges, and the per-level
//! concurrency sets that drive the power-bound rows of the ILP.

use std::collections::BTreeMap;

use crate::model::{DependencyGraph, JobId};

/// Integer interval of depth levels a job may occupy. A job whose range is
/// wider than a single level can be stretched across the extra levels at a
/// lower power bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepthRange {
    pub lo: u32,
    pub hi: u32,
}

impl DepthRange {
    pub fn contains(&self, level: u32) -> bool {
        self.lo <= level && level <= self.hi
    }
}

/// Length of the longest path from any initial job to each job, computed in
/// one topological pass.
pub fn max_depths(graph: &DependencyGraph) -> BTreeMap<JobId, u32> {
    let mut depths: BTreeMap<JobId, u32> = BTreeMap::new();
    for &id in graph.topo_order() {
        let depth = graph
            .parents(id)
            .iter()
            .map(|p| depths[p] + 1)
            .max()
            .unwrap_or(0);
        depths.insert(id, depth);
    }
    depths
}

/// Depth range per job: from its max-depth up to one short of the minimum
/// max-depth among its children. Final jobs get the degenerate range
/// `[depth, depth]`.
pub fn depth_ranges(
    graph: &DependencyGraph,
    depths: &BTreeMap<JobId, u32>,
) -> BTreeMap<JobId, DepthRange> {
    let mut ranges = BTreeMap::new();
    for id in graph.job_ids() {
        let lo = depths[&id];
        let beta = graph
            .children(id)
            .iter()
            .map(|c| depths[c])
            .min()
            .unwrap_or(lo + 1);
        ranges.insert(id, DepthRange { lo, hi: beta - 1 });
    }
    ranges
}

/// For each depth level, the set of jobs whose range covers it. Jobs in the
/// same set may execute concurrently.
pub fn concurrency_sets(ranges: &BTreeMap<JobId, DepthRange>) -> Vec<Vec<JobId>> {
    let max_level = ranges.values().map(|r| r.hi).max().unwrap_or(0);
    let mut sets = vec![Vec::new(); (max_level + 1) as usize];
    for (&id, range) in ranges {
        for level in range.lo..=range.hi {
            sets[level as usize].push(id);
        }
    }
    sets
}

/// Both depth tables formatted as aligned text, jobs as rows and nodes as
/// columns.
pub fn tables_text(
    graph: &DependencyGraph,
    depths: &BTreeMap<JobId, u32>,
    ranges: &BTreeMap<JobId, DepthRange>,
) -> String {
    let render_depth = |id: JobId| depths.get(&id).map(|d| d.to_string());
    let render_range = |id: JobId| ranges.get(&id).map(|r| format!("[{},{}]", r.lo, r.hi));
    let mut out = table_text(graph, "Max-depths", &render_depth);
    out.push('\n');
    out.push_str(&table_text(graph, "Depth ranges", &render_range));
    out
}

fn table_text(
    graph: &DependencyGraph,
    title: &str,
    cell: &dyn Fn(JobId) -> Option<String>,
) -> String {
    let n = graph.node_count();
    let max_index = graph.job_ids().map(|id| id.index).max().unwrap_or(0);
    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&format!("{:<8}", "Job"));
    for node in 1..=n {
        out.push_str(&format!("{:<10}", format!("Node {node}")));
    }
    out.push('\n');
    for index in 1..=max_index {
        out.push_str(&format!("{:<8}", index));
        for node in 1..=n {
            let text = cell(JobId::new(node, index)).unwrap_or_else(|| "-".into());
            out.push_str(&format!("{:<10}", text));
        }
        out.push('\n');
    }
    out
}

/// CSV form of the depth analysis: `node,job,delta,range_lo,range_hi`.
pub fn tables_csv(
    graph: &DependencyGraph,
    depths: &BTreeMap<JobId, u32>,
    ranges: &BTreeMap<JobId, DepthRange>,
) -> String {
    let mut out = String::from("node,job,delta,range_lo,range_hi\n");
    for id in graph.job_ids() {
        let r = &ranges[&id];
        out.push_str(&format!("{},{},{},{},{}\n", id.node, id.index, depths[&id], r.lo, r.hi));
    }
    out
}
