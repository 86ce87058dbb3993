//! Writer for the standard LP text format, so instances can be cross-checked
//! with external solvers.

use std::fmt::Write as _;

use super::IlpInstance;

fn var_name(job: crate::model::JobId, bound: u32) -> String {
    format!("x_n{}_j{}_b{}", job.node, job.index, bound)
}

/// Renders the instance as an LP file: minimize t, assignment equalities,
/// power rows, makespan rows, and the binaries section.
pub fn write_lp(inst: &IlpInstance) -> String {
    let mut out = String::new();
    out.push_str("\\ job-to-power-bound assignment\n");
    out.push_str("Minimize\n obj: t\nSubject To\n");

    for (pos, &job) in inst.jobs.iter().enumerate() {
        let terms: Vec<String> = inst.candidates[pos]
            .iter()
            .map(|v| var_name(job, v.bound_mw))
            .collect();
        let _ = writeln!(
            out,
            " assign_n{}_j{}: {} = 1",
            job.node,
            job.index,
            terms.join(" + ")
        );
    }

    for (level, members) in inst.level_members.iter().enumerate() {
        let mut terms: Vec<String> = Vec::new();
        for &pos in members {
            for v in &inst.candidates[pos] {
                terms.push(format!("{} {}", v.bound_mw, var_name(inst.jobs[pos], v.bound_mw)));
            }
        }
        let _ = writeln!(
            out,
            " power_d{}: {} <= {}",
            level,
            terms.join(" + "),
            inst.cluster_bound_mw
        );
    }

    for node in 1..=inst.node_count {
        let mut terms: Vec<String> = Vec::new();
        for (pos, &job) in inst.jobs.iter().enumerate() {
            if job.node != node {
                continue;
            }
            for v in &inst.candidates[pos] {
                terms.push(format!("{} {}", v.time, var_name(job, v.bound_mw)));
            }
        }
        if terms.is_empty() {
            continue;
        }
        let _ = writeln!(out, " makespan_n{}: {} - t <= 0", node, terms.join(" + "));
    }

    out.push_str("Bounds\n t >= 0\nBinaries\n");
    for (pos, &job) in inst.jobs.iter().enumerate() {
        for v in &inst.candidates[pos] {
            let _ = writeln!(out, " {}", var_name(job, v.bound_mw));
        }
    }
    out.push_str("End\n");
    out
}
