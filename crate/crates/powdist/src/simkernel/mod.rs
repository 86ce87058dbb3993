//! Deterministic discrete-event simulator. Executes a dependency graph under
//! equal-share, precomputed-assignment, or online-heuristic power
//! distribution, producing the makespan, per-job intervals, and the cluster
//! power trace.

mod sweep;

pub use sweep::{spearman_rank_correlation, sweep_stddev, SweepRow, SweepTrial};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::heuristic::{BudgetMode, NodeState, PowerEngine, ReportMessage};
use crate::model::{nominal_power_bound, BoundAssignment, DependencyGraph, JobId, PowerTable};

/// Simulation parameters beyond the graph and power table.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub cluster_bound_mw: u32,
    /// Delay between a report reaching the controller and the resulting
    /// bound taking effect on the node.
    pub latency: f64,
    pub budget_mode: BudgetMode,
    /// Extra delay for a frequency switch itself.
    pub dvfs_delay: f64,
}

impl SimConfig {
    pub fn new(cluster_bound_mw: u32) -> Self {
        SimConfig {
            cluster_bound_mw,
            latency: 0.0,
            budget_mode: BudgetMode::Safe,
            dvfs_delay: 0.0,
        }
    }
}

/// What happened to one job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobRecord {
    pub job: JobId,
    pub start: f64,
    pub finish: f64,
    /// Bound in effect when the job started.
    pub bound_mw: u32,
    pub freq_mhz: u32,
}

/// One step of the cluster power trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSegment {
    pub start: f64,
    pub end: f64,
    pub total_mw: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEventKind {
    Start,
    Finish,
    Block,
    Unblock,
    BoundChange,
    Done,
}

impl SimEventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimEventKind::Start => "start",
            SimEventKind::Finish => "finish",
            SimEventKind::Block => "block",
            SimEventKind::Unblock => "unblock",
            SimEventKind::BoundChange => "bound_change",
            SimEventKind::Done => "done",
        }
    }
}

/// Timeline entry for the events CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub node: u32,
    /// Job index when the event concerns a specific job, 0 otherwise.
    pub job_index: u32,
    pub kind: SimEventKind,
    pub bound_mw: u32,
    pub freq_mhz: u32,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub makespan: f64,
    pub jobs: Vec<JobRecord>,
    pub trace: Vec<PowerSegment>,
    pub peak_power_mw: u64,
    pub avg_power_mw: f64,
    /// Trace segments whose draw exceeded the cluster bound.
    pub violations: Vec<PowerSegment>,
    pub events: Vec<SimEvent>,
}

impl SimResult {
    pub fn speedup_over(&self, baseline: &SimResult) -> f64 {
        baseline.makespan / self.makespan
    }

    /// Events CSV: `time,node,job,event,bound_mw,freq_mhz`.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("time,node,job,event,bound_mw,freq_mhz\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.time,
                e.node,
                e.job_index,
                e.kind.as_str(),
                e.bound_mw,
                e.freq_mhz
            ));
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "makespan={} avg_power_mw={:.1} peak_power_mw={} violations={}",
            self.makespan,
            self.avg_power_mw,
            self.peak_power_mw,
            self.violations.len()
        )
    }
}

/// Every job at the equal share of the cluster bound.
pub fn run_equal_share(
    graph: &DependencyGraph,
    table: &PowerTable,
    cluster_bound_mw: u32,
) -> Result<SimResult> {
    let share = nominal_power_bound(cluster_bound_mw, graph.node_count())?;
    for node in 1..=graph.node_count() {
        if !graph.node_jobs(node).is_empty() {
            table.max_freq_within(node, share)?;
        }
    }
    let assignment = crate::model::uniform_assignment(graph, share);
    let mut sim = Simulator::new(graph, table, cluster_bound_mw, Driver::Static(&assignment))?;
    sim.run()
}

/// Jobs at their individually assigned bounds. Instants where the true
/// concurrent draw exceeds the cluster bound are recorded as violations.
pub fn run_with_assignment(
    graph: &DependencyGraph,
    table: &PowerTable,
    cluster_bound_mw: u32,
    assignment: &BoundAssignment,
) -> Result<SimResult> {
    for id in graph.job_ids() {
        if !assignment.contains_key(&id) {
            return Err(Error::UnmappedJob {
                node: id.node,
                index: id.index,
            });
        }
    }
    let mut sim = Simulator::new(graph, table, cluster_bound_mw, Driver::Static(assignment))?;
    sim.run()
}

/// Online power redistribution: emulated block detectors feed the heuristic
/// engine, whose distribute messages retune node frequencies after the
/// configured latency.
pub fn run_heuristic(
    graph: &DependencyGraph,
    table: &PowerTable,
    cfg: &SimConfig,
) -> Result<SimResult> {
    let share = nominal_power_bound(cfg.cluster_bound_mw, graph.node_count())?;
    for node in 1..=graph.node_count() {
        if !graph.node_jobs(node).is_empty() {
            table.max_freq_within(node, share)?;
        }
    }
    let engine = PowerEngine::from_table(
        cfg.cluster_bound_mw,
        graph.node_count(),
        cfg.budget_mode,
        table,
    )?;
    let mut sim = Simulator::new(
        graph,
        table,
        cfg.cluster_bound_mw,
        Driver::Online {
            engine,
            apply_delay: cfg.latency + cfg.dvfs_delay,
        },
    )?;
    sim.run()
}

enum Driver<'a> {
    /// Fixed job-to-bound mapping; no reports, no engine.
    Static(&'a BoundAssignment),
    Online { engine: PowerEngine, apply_delay: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activity {
    /// Executing its current job.
    Running,
    /// Between jobs within an instant, not yet settled.
    Idle,
    /// Waiting for dependencies of its next job; in online mode the block
    /// has been reported.
    Blocked,
    /// All jobs complete.
    Done,
}

struct NodeSim {
    node: u32,
    jobs: Vec<JobId>,
    /// Position of the job currently running or waiting to run.
    cursor: usize,
    activity: Activity,
    /// Current DVFS cap in mW.
    bound_mw: u32,
    /// Remaining work of the running job and the time it was last retimed.
    remaining_work: f64,
    retimed_at: f64,
    freq_mhz: u32,
    start_of_current: f64,
    /// Invalidates stale finish events after a retime.
    generation: u64,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    ApplyBound { node: u32, bound_mw: u32 },
    JobFinish { node: u32, generation: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn order_key(&self) -> (f64, u8, u32, u64) {
        match self.kind {
            EventKind::ApplyBound { node, .. } => (self.time, 0, node, self.seq),
            EventKind::JobFinish { node, .. } => (self.time, 1, node, self.seq),
        }
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.order_key() == other.order_key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the BinaryHeap pops the earliest event first.
        let (ta, ka, na, sa) = self.order_key();
        let (tb, kb, nb, sb) = other.order_key();
        tb.total_cmp(&ta)
            .then(kb.cmp(&ka))
            .then(nb.cmp(&na))
            .then(sb.cmp(&sa))
    }
}

struct Simulator<'a> {
    graph: &'a DependencyGraph,
    table: &'a PowerTable,
    cluster_bound_mw: u32,
    driver: Driver<'a>,
    nodes: BTreeMap<u32, NodeSim>,
    finished: BTreeSet<JobId>,
    heap: BinaryHeap<Event>,
    seq: u64,
    records: Vec<JobRecord>,
    events: Vec<SimEvent>,
    /// (time, node, draw) change points for the power trace.
    draw_changes: Vec<(f64, u32, u32)>,
}

impl<'a> Simulator<'a> {
    fn new(
        graph: &'a DependencyGraph,
        table: &'a PowerTable,
        cluster_bound_mw: u32,
        driver: Driver<'a>,
    ) -> Result<Self> {
        let share = nominal_power_bound(cluster_bound_mw, graph.node_count())?;
        let mut nodes = BTreeMap::new();
        for node in 1..=graph.node_count() {
            nodes.insert(
                node,
                NodeSim {
                    node,
                    jobs: graph.node_jobs(node),
                    cursor: 0,
                    activity: Activity::Idle,
                    bound_mw: share,
                    remaining_work: 0.0,
                    retimed_at: 0.0,
                    freq_mhz: 0,
                    start_of_current: 0.0,
                    generation: 0,
                },
            );
        }
        Ok(Simulator {
            graph,
            table,
            cluster_bound_mw,
            driver,
            nodes,
            finished: BTreeSet::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            records: Vec::new(),
            events: Vec::new(),
            draw_changes: Vec::new(),
        })
    }

    fn push_event(&mut self, time: f64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    fn deps_met(&self, job: JobId) -> bool {
        self.graph
            .parents(job)
            .iter()
            .all(|p| self.finished.contains(p))
    }

    fn unmet_dep_owners(&self, job: JobId) -> BTreeSet<u32> {
        self.graph
            .parents(job)
            .iter()
            .filter(|p| !self.finished.contains(p))
            .map(|p| p.node)
            .collect()
    }

    fn record_draw(&mut self, time: f64, node: u32, draw_mw: u32) {
        self.draw_changes.push((time, node, draw_mw));
    }

    fn log(&mut self, time: f64, node: u32, job_index: u32, kind: SimEventKind) {
        let ns = &self.nodes[&node];
        self.events.push(SimEvent {
            time,
            node,
            job_index,
            kind,
            bound_mw: ns.bound_mw,
            freq_mhz: ns.freq_mhz,
        });
    }

    /// Bound the node runs its next job at: static mapping or the current
    /// DVFS cap under the online driver.
    fn bound_for(&self, node: u32, job: JobId) -> u32 {
        match &self.driver {
            Driver::Static(assignment) => assignment[&job],
            Driver::Online { .. } => self.nodes[&node].bound_mw,
        }
    }

    fn start_job(&mut self, time: f64, node: u32) -> Result<()> {
        let job_id = {
            let ns = &self.nodes[&node];
            ns.jobs[ns.cursor]
        };
        let bound = self.bound_for(node, job_id);
        let freq = self.table.max_freq_within(node, bound)?;
        let job = self.graph.job(job_id).unwrap();
        let ns = self.nodes.get_mut(&node).unwrap();
        ns.activity = Activity::Running;
        ns.bound_mw = bound;
        ns.freq_mhz = freq;
        ns.remaining_work = job.work;
        ns.retimed_at = time;
        ns.start_of_current = time;
        ns.generation += 1;
        let generation = ns.generation;
        let duration = job_duration(job.work, job.serial_fraction, freq, self.table.top_freq(node)?);
        self.push_event(time + duration, EventKind::JobFinish { node, generation });
        let draw = self.table.power_at_freq(node, freq)?;
        self.record_draw(time, node, draw);
        self.log(time, node, job_id.index, SimEventKind::Start);
        Ok(())
    }

    /// Work-conserving retime of a running job after a bound change.
    fn apply_bound(&mut self, time: f64, node: u32, bound_mw: u32) -> Result<()> {
        let ns = self.nodes.get_mut(&node).unwrap();
        if ns.bound_mw == bound_mw {
            return Ok(());
        }
        ns.bound_mw = bound_mw;
        if ns.activity != Activity::Running {
            // Takes effect when the node next starts a job.
            return Ok(());
        }
        let job_id = ns.jobs[ns.cursor];
        let job = *self.graph.job(job_id).unwrap();
        let old_freq = ns.freq_mhz;
        let top = self.table.top_freq(node)?;
        // Progress so far at the old operating point.
        let elapsed = time - ns.retimed_at;
        let old_duration_full = job_duration(1.0, job.serial_fraction, old_freq, top);
        let consumed = elapsed / old_duration_full;
        ns.remaining_work = (ns.remaining_work - consumed).max(0.0);
        ns.retimed_at = time;
        let freq = self.table.max_freq_within(node, bound_mw)?;
        ns.freq_mhz = freq;
        ns.generation += 1;
        let generation = ns.generation;
        let remaining = ns.remaining_work;
        let duration = job_duration(remaining, job.serial_fraction, freq, top);
        self.push_event(time + duration, EventKind::JobFinish { node, generation });
        if freq != old_freq {
            let draw = self.table.power_at_freq(node, freq)?;
            self.record_draw(time, node, draw);
        }
        self.log(time, node, job_id.index, SimEventKind::BoundChange);
        Ok(())
    }

    fn send_report(&mut self, time: f64, report: ReportMessage) -> Result<()> {
        if let Driver::Online { engine, apply_delay } = &mut self.driver {
            let messages = engine.process_message(&report)?;
            let delay = *apply_delay;
            for m in messages {
                self.push_event(
                    time + delay,
                    EventKind::ApplyBound {
                        node: m.node_id,
                        bound_mw: m.power_bound_mw,
                    },
                );
            }
        }
        Ok(())
    }

    fn is_online(&self) -> bool {
        matches!(self.driver, Driver::Online { .. })
    }

    /// Power the node would reclaim by idling, per its current cap.
    fn report_gain(&self, node: u32) -> Result<u32> {
        let bound = self.nodes[&node].bound_mw;
        let freq = self.table.max_freq_within(node, bound)?;
        let busy = self.table.power_at_freq(node, freq)?;
        Ok(busy.saturating_sub(self.table.idle_power(node)?))
    }

    fn run(&mut self) -> Result<SimResult> {
        // Initial placement: try to start every node's first job.
        let node_ids: Vec<u32> = self.nodes.keys().copied().collect();
        for &node in &node_ids {
            self.record_draw(0.0, node, self.table.idle_power(node)?);
        }
        for &node in &node_ids {
            self.settle_node(0.0, node)?;
        }

        let mut makespan = 0.0f64;
        while let Some(event) = self.heap.pop() {
            let time = event.time;
            match event.kind {
                EventKind::ApplyBound { node, bound_mw } => {
                    self.apply_bound(time, node, bound_mw)?;
                }
                EventKind::JobFinish { node, generation } => {
                    if self.nodes[&node].generation != generation {
                        continue;
                    }
                    // Collect every finish scheduled for this same instant so
                    // simultaneous completions unblock dependents together.
                    let mut finished_nodes = vec![node];
                    while let Some(next) = self.heap.peek() {
                        if next.time != time {
                            break;
                        }
                        if let EventKind::JobFinish { node: n2, generation: g2 } = next.kind {
                            if self.nodes[&n2].generation == g2 {
                                finished_nodes.push(n2);
                            }
                            self.heap.pop();
                        } else {
                            break;
                        }
                    }
                    finished_nodes.sort_unstable();
                    for &n in &finished_nodes {
                        makespan = makespan.max(self.finish_job(time, n)?);
                    }
                    // Previously blocked nodes whose dependencies are now met
                    // resume first, then just-finished nodes settle.
                    let blocked: Vec<u32> = self
                        .nodes
                        .values()
                        .filter(|ns| ns.activity == Activity::Blocked)
                        .map(|ns| ns.node)
                        .collect();
                    for n in blocked {
                        let pending = self.nodes[&n].jobs[self.nodes[&n].cursor];
                        if self.deps_met(pending) {
                            if self.is_online() {
                                self.log(time, n, pending.index, SimEventKind::Unblock);
                                self.send_report(time, ReportMessage::running(n))?;
                            }
                            self.start_job(time, n)?;
                        }
                    }
                    for &n in &finished_nodes {
                        self.settle_node(time, n)?;
                    }
                }
            }
        }

        if self.finished.len() != self.graph.job_count() {
            return Err(Error::Validation(format!(
                "simulation stalled with {} of {} jobs finished",
                self.finished.len(),
                self.graph.job_count()
            )));
        }

        let trace = build_trace(&self.draw_changes, makespan);
        let peak = trace.iter().map(|s| s.total_mw).max().unwrap_or(0);
        let energy: f64 = trace
            .iter()
            .map(|s| (s.end - s.start) * s.total_mw as f64)
            .sum();
        let violations: Vec<PowerSegment> = trace
            .iter()
            .copied()
            .filter(|s| s.total_mw > self.cluster_bound_mw as u64)
            .collect();
        Ok(SimResult {
            makespan,
            jobs: std::mem::take(&mut self.records),
            trace,
            peak_power_mw: peak,
            avg_power_mw: if makespan > 0.0 { energy / makespan } else { 0.0 },
            violations,
            events: std::mem::take(&mut self.events),
        })
    }

    fn finish_job(&mut self, time: f64, node: u32) -> Result<f64> {
        let (job_id, start, bound, freq) = {
            let ns = &self.nodes[&node];
            (ns.jobs[ns.cursor], ns.start_of_current, ns.bound_mw, ns.freq_mhz)
        };
        self.finished.insert(job_id);
        self.records.push(JobRecord {
            job: job_id,
            start,
            finish: time,
            bound_mw: bound,
            freq_mhz: freq,
        });
        self.log(time, node, job_id.index, SimEventKind::Finish);
        let ns = self.nodes.get_mut(&node).unwrap();
        ns.cursor += 1;
        ns.generation += 1;
        ns.activity = Activity::Idle;
        let idle = self.table.idle_power(node)?;
        self.record_draw(time, node, idle);
        Ok(time)
    }

    /// Starts the node's next job, or reports why it cannot run.
    fn settle_node(&mut self, time: f64, node: u32) -> Result<()> {
        let ns = &self.nodes[&node];
        if ns.activity != Activity::Idle {
            return Ok(());
        }
        if ns.cursor >= ns.jobs.len() {
            self.nodes.get_mut(&node).unwrap().activity = Activity::Done;
            self.log(time, node, 0, SimEventKind::Done);
            if self.is_online() {
                // The node idles from here on; hand its share back.
                let gain = self.report_gain(node)?;
                self.send_report(time, ReportMessage::blocked(node, BTreeSet::new(), gain))?;
            }
            return Ok(());
        }
        let pending = ns.jobs[ns.cursor];
        if self.deps_met(pending) {
            self.start_job(time, node)?;
        } else {
            self.nodes.get_mut(&node).unwrap().activity = Activity::Blocked;
            if self.is_online() {
                let owners = self.unmet_dep_owners(pending);
                let gain = self.report_gain(node)?;
                self.log(time, node, pending.index, SimEventKind::Block);
                self.send_report(time, ReportMessage::blocked(node, owners, gain))?;
            }
        }
        Ok(())
    }
}

/// Duration of `work` units at `freq`, with the serial fraction charged at
/// the node's top frequency.
fn job_duration(work: f64, serial_fraction: f64, freq_mhz: u32, top_freq_mhz: u32) -> f64 {
    work * (serial_fraction / top_freq_mhz as f64 + (1.0 - serial_fraction) / freq_mhz as f64)
}

fn build_trace(changes: &[(f64, u32, u32)], makespan: f64) -> Vec<PowerSegment> {
    let mut per_node: BTreeMap<u32, u32> = BTreeMap::new();
    let mut sorted: Vec<&(f64, u32, u32)> = changes.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut segments: Vec<PowerSegment> = Vec::new();
    let mut cursor = 0.0f64;
    let mut idx = 0;
    while idx < sorted.len() {
        let t = sorted[idx].0;
        if t > cursor {
            let total: u64 = per_node.values().map(|&d| d as u64).sum();
            segments.push(PowerSegment {
                start: cursor,
                end: t,
                total_mw: total,
            });
            cursor = t;
        }
        while idx < sorted.len() && sorted[idx].0 == t {
            per_node.insert(sorted[idx].1, sorted[idx].2);
            idx += 1;
        }
    }
    if makespan > cursor {
        let total: u64 = per_node.values().map(|&d| d as u64).sum();
        segments.push(PowerSegment {
            start: cursor,
            end: makespan,
            total_mw: total,
        });
    }
    // Merge adjacent equal-draw segments.
    let mut merged: Vec<PowerSegment> = Vec::new();
    for seg in segments {
        match merged.last_mut() {
            Some(last) if last.total_mw == seg.total_mw && last.end == seg.start => {
                last.end = seg.end;
            }
            _ => merged.push(seg),
        }
    }
    merged
}
