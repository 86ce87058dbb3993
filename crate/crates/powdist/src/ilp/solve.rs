//! Exact solvers for the assignment instance: a depth-first branch-and-bound
//! and a brute-force enumeration oracle for cross-checking.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::BoundAssignment;

use super::{Assignment, IlpInstance};

struct Search<'a> {
    inst: &'a IlpInstance,
    /// committed serial time per node (indexed node-1)
    node_time: Vec<f64>,
    /// committed power per depth level
    level_power: Vec<u64>,
    /// chosen candidate index per job position
    choice: Vec<usize>,
    /// min remaining time per node over positions >= k
    min_rest_time: Vec<Vec<f64>>,
    /// min remaining power per level over positions >= k
    min_rest_power: Vec<Vec<u64>>,
    incumbent: Option<(Vec<usize>, f64)>,
    deadline: Option<Instant>,
    timed_out: bool,
    nodes_visited: u64,
}

impl<'a> Search<'a> {
    fn new(inst: &'a IlpInstance, time_limit: Option<Duration>) -> Self {
        let n_jobs = inst.jobs.len();
        let n_nodes = inst.node_count as usize;
        let n_levels = inst.level_members.len();

        // Suffix tables: fastest possible completion of the not-yet-assigned
        // jobs, per node, and the lowest possible power draw per level.
        let mut min_rest_time = vec![vec![0.0; n_nodes]; n_jobs + 1];
        let mut min_rest_power = vec![vec![0u64; n_levels]; n_jobs + 1];
        for pos in (0..n_jobs).rev() {
            let job = inst.jobs[pos];
            let best_time = inst.candidates[pos]
                .iter()
                .map(|v| v.time)
                .fold(f64::INFINITY, f64::min);
            let min_bound = inst.candidates[pos]
                .iter()
                .map(|v| v.bound_mw)
                .min()
                .unwrap_or(0) as u64;
            for node in 0..n_nodes {
                min_rest_time[pos][node] = min_rest_time[pos + 1][node]
                    + if job.node as usize - 1 == node { best_time } else { 0.0 };
            }
            for level in 0..n_levels {
                min_rest_power[pos][level] = min_rest_power[pos + 1][level]
                    + if inst.levels[pos].contains(&(level as u32)) { min_bound } else { 0 };
            }
        }

        Search {
            inst,
            node_time: vec![0.0; n_nodes],
            level_power: vec![0; n_levels],
            choice: vec![0; n_jobs],
            min_rest_time,
            min_rest_power,
            incumbent: None,
            deadline: time_limit.map(|l| Instant::now() + l),
            timed_out: false,
            nodes_visited: 0,
        }
    }

    fn lower_bound(&self, pos: usize) -> f64 {
        self.node_time
            .iter()
            .zip(&self.min_rest_time[pos])
            .map(|(&committed, &rest)| committed + rest)
            .fold(0.0f64, f64::max)
    }

    fn dfs(&mut self, pos: usize) {
        self.nodes_visited += 1;
        if self.nodes_visited % 4096 == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() >= deadline {
                    self.timed_out = true;
                }
            }
        }
        if self.timed_out {
            return;
        }
        if pos == self.inst.jobs.len() {
            let objective = self.node_time.iter().fold(0.0f64, |a, &b| a.max(b));
            match &self.incumbent {
                Some((_, best)) if objective >= *best => {}
                _ => self.incumbent = Some((self.choice.clone(), objective)),
            }
            return;
        }

        // Prune on the optimistic completion bound. Strict improvement only,
        // so the first optimum found in search order is kept.
        if let Some((_, best)) = &self.incumbent {
            if self.lower_bound(pos) >= *best {
                return;
            }
        }

        let node = self.inst.jobs[pos].node as usize - 1;
        for (ci, var) in self.inst.candidates[pos].iter().enumerate() {
            let bound = var.bound_mw as u64;
            let fits = self.inst.levels[pos].iter().all(|&level| {
                let l = level as usize;
                self.level_power[l] + bound + self.min_rest_power[pos + 1][l]
                    <= self.inst.cluster_bound_mw as u64
            });
            if !fits {
                continue;
            }
            self.choice[pos] = ci;
            self.node_time[node] += var.time;
            for &level in &self.inst.levels[pos] {
                self.level_power[level as usize] += bound;
            }
            self.dfs(pos + 1);
            self.node_time[node] -= var.time;
            for &level in &self.inst.levels[pos] {
                self.level_power[level as usize] -= bound;
            }
            if self.timed_out {
                return;
            }
        }
    }
}

/// Depth-first branch-and-bound over the fixed job order, trying higher
/// bounds first. Deterministic; returns the lexicographically first optimum
/// in that order. With a time limit, returns the best incumbent and clears
/// the optimality flag.
pub fn solve_branch_and_bound(
    inst: &IlpInstance,
    time_limit: Option<Duration>,
) -> Result<Assignment> {
    let mut search = Search::new(inst, time_limit);
    search.dfs(0);
    let (choice, objective) = search
        .incumbent
        .ok_or_else(|| Error::Infeasible("no bound combination satisfies every depth-level power row".into()))?;
    let bounds: BoundAssignment = choice
        .iter()
        .enumerate()
        .map(|(pos, &ci)| (inst.jobs[pos], inst.candidates[pos][ci].bound_mw))
        .collect();
    Ok(Assignment {
        bounds,
        objective_time: objective,
        proved_optimal: !search.timed_out,
    })
}

const ORACLE_LIMIT: f64 = 1e7;

/// Provably optimal assignment by full enumeration in the same variable and
/// value order as the branch-and-bound. Test oracle only; refuses instances
/// with more than 10^7 combinations.
pub fn exhaustive_oracle(inst: &IlpInstance) -> Result<Assignment> {
    let combos: f64 = inst.candidates.iter().map(|c| c.len() as f64).product();
    if combos > ORACLE_LIMIT {
        return Err(Error::Validation(format!(
            "instance too large for exhaustive enumeration ({combos:.0} combinations)"
        )));
    }

    let n_jobs = inst.jobs.len();
    let n_levels = inst.level_members.len();
    let mut choice = vec![0usize; n_jobs];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut exhausted = false;

    while !exhausted {
        let mut level_power = vec![0u64; n_levels];
        let mut node_time = vec![0.0f64; inst.node_count as usize];
        for pos in 0..n_jobs {
            let var = &inst.candidates[pos][choice[pos]];
            node_time[inst.jobs[pos].node as usize - 1] += var.time;
            for &level in &inst.levels[pos] {
                level_power[level as usize] += var.bound_mw as u64;
            }
        }
        let feasible = level_power
            .iter()
            .all(|&p| p <= inst.cluster_bound_mw as u64);
        if feasible {
            let objective = node_time.iter().fold(0.0f64, |a, &b| a.max(b));
            match &best {
                Some((_, b)) if objective >= *b => {}
                _ => best = Some((choice.clone(), objective)),
            }
        }

        // Odometer increment over candidate indices, last position fastest.
        exhausted = true;
        for pos in (0..n_jobs).rev() {
            choice[pos] += 1;
            if choice[pos] < inst.candidates[pos].len() {
                exhausted = false;
                break;
            }
            choice[pos] = 0;
        }
    }

    let (choice, objective) = best.ok_or_else(|| {
        Error::Infeasible("no bound combination satisfies every depth-level power row".into())
    })?;
    let bounds: BoundAssignment = choice
        .iter()
        .enumerate()
        .map(|(p, &ci)| (inst.jobs[p], inst.candidates[p][ci].bound_mw))
        .collect();
    Ok(Assignment {
        bounds,
        objective_time: objective,
        proved_optimal: true,
    })
}
