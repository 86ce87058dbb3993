//! Line-oriented graph file parser.
//!
//! ```text
//! # comment
//! nodes <n>
//! job <node_id> <job_index> <work> [serial_fraction]
//! dep <node_id> <job_index> <- <node_id> <job_index>
//! ```
//!
//! A `dep` line declares that the left-hand job depends on the right-hand
//! job. Serial edges between consecutive jobs of one node are implicit.

use crate::error::{Error, Result};
use crate::model::{DependencyGraph, Job, JobId};

pub fn parse_graph(text: &str) -> Result<DependencyGraph> {
    let mut node_count: Option<u32> = None;
    let mut jobs: Vec<Job> = Vec::new();
    let mut edges: Vec<(JobId, JobId)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens[0] {
            "nodes" => {
                if node_count.is_some() {
                    return syntax(line, "duplicate 'nodes' declaration");
                }
                if tokens.len() != 2 {
                    return syntax(line, "expected: nodes <n>");
                }
                let n = parse_u32(tokens[1], line, "node count")?;
                if n == 0 {
                    return syntax(line, "node count must be at least 1");
                }
                node_count = Some(n);
            }
            "job" => {
                if node_count.is_none() {
                    return syntax(line, "'job' before 'nodes' declaration");
                }
                if tokens.len() != 4 && tokens.len() != 5 {
                    return syntax(line, "expected: job <node_id> <job_index> <work> [serial_fraction]");
                }
                let node = parse_u32(tokens[1], line, "node id")?;
                let index = parse_u32(tokens[2], line, "job index")?;
                let work = parse_f64(tokens[3], line, "work")?;
                if !(work > 0.0) {
                    return syntax(line, "work must be > 0");
                }
                let serial_fraction = if tokens.len() == 5 {
                    let s = parse_f64(tokens[4], line, "serial_fraction")?;
                    if !(0.0..=1.0).contains(&s) {
                        return syntax(line, "serial_fraction must lie in [0,1]");
                    }
                    s
                } else {
                    0.0
                };
                jobs.push(Job {
                    id: JobId::new(node, index),
                    work,
                    serial_fraction,
                });
            }
            "dep" => {
                if tokens.len() != 6 || tokens[3] != "<-" {
                    return syntax(line, "expected: dep <node_id> <job_index> <- <node_id> <job_index>");
                }
                let dependent = JobId::new(
                    parse_u32(tokens[1], line, "node id")?,
                    parse_u32(tokens[2], line, "job index")?,
                );
                let prerequisite = JobId::new(
                    parse_u32(tokens[4], line, "node id")?,
                    parse_u32(tokens[5], line, "job index")?,
                );
                edges.push((prerequisite, dependent));
            }
            other => {
                return syntax(line, &format!("unknown directive '{other}'"));
            }
        }
    }

    let node_count = node_count.ok_or(Error::Parse {
        line: 1,
        msg: "missing 'nodes' declaration".into(),
    })?;
    DependencyGraph::new(node_count, jobs, edges)
}

fn syntax<T>(line: usize, msg: &str) -> Result<T> {
    Err(Error::Parse {
        line,
        msg: msg.to_string(),
    })
}

fn parse_u32(token: &str, line: usize, what: &str) -> Result<u32> {
    token.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} '{token}'"),
    })
}

fn parse_f64(token: &str, line: usize, what: &str) -> Result<f64> {
    token.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {what} '{token}'"),
    })
}
