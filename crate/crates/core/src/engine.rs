//! Deterministic discrete-event core.
//!
//! Transfers progress as a fluid: every change in the set of active
//! transfers triggers a fresh bandwidth allocation, and completion times are
//! re-derived from the remaining bytes at the new rates. Fixed costs (tool
//! overheads, link latency, restore, reconnect) are plain timers.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::model::PhaseKind;
use crate::model::{perturb, repetition_seed, validate_scenario, InstanceSpec, NodeRole, Scenario};
use crate::patterns::{GrantId, RegistryError, ReservationRegistry, ReserveOutcome, TaskGraph, TaskId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid rate {0} B/s: transfer phases need a rate > 0")]
    InvalidRate(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("plan covers {plan} instances but the chain has {chain}")]
    PlanMismatch { plan: usize, chain: usize },
    #[error("simulation stalled at t={time_s}s with {pending} unfinished tasks")]
    Stalled { time_s: f64, pending: usize },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransferId(pub usize);

/// One in-flight byte stream on the link.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub id: TransferId,
    pub instance: usize,
    pub phase: PhaseKind,
    pub remaining_bytes: f64,
    pub allocated_rate_bytes_per_s: f64,
    /// Exact rate guaranteed by a reservation grant.
    pub reserved_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub capacity: f64,
    /// Cap on the pool shared by unreserved migration transfers.
    pub migration_limit: Option<f64>,
    pub transfers: Vec<Transfer>,
    pub total_reserved_bytes_per_s: f64,
    pub background_flow_count: u32,
}

/// Splits link capacity between reserved, unreserved and background flows.
///
/// Reserved transfers get exactly their reservation. What is left after all
/// reservations is divided equally between unreserved migration transfers and
/// background flows; the migration side is further capped by the configured
/// limit.
pub fn allocate_shares(link: &LinkState) -> BTreeMap<TransferId, f64> {
    let mut out = BTreeMap::new();
    let reserved_in_use: f64 = link.transfers.iter().filter_map(|t| t.reserved_rate).sum();
    let reserved = link.total_reserved_bytes_per_s.max(reserved_in_use);
    let pool = (link.capacity - reserved).max(0.0);

    let unreserved = link
        .transfers
        .iter()
        .filter(|t| t.reserved_rate.is_none())
        .count();
    let flows = unreserved + link.background_flow_count as usize;
    let mut share = if flows > 0 { pool / flows as f64 } else { 0.0 };
    if let (Some(limit), true) = (link.migration_limit, unreserved > 0) {
        share = share.min(limit / unreserved as f64);
    }

    for t in &link.transfers {
        out.insert(t.id, t.reserved_rate.unwrap_or(share));
    }
    out
}

/// Byte volumes of an iterative pre-copy.
#[derive(Debug, Clone, PartialEq)]
pub struct PredumpSchedule {
    /// Bytes shipped by each iteration, starting with the initial memory set.
    pub iterations: Vec<f64>,
    /// First dirty set that was not shipped; it rides along with the dump.
    pub final_dirty_bytes: f64,
    pub converged: bool,
}

impl PredumpSchedule {
    pub fn shipped_bytes(&self) -> f64 {
        self.iterations.iter().sum()
    }
}

/// Iterates the pre-dump at a constant rate.
///
/// Each iteration ships what the previous one left dirty. Stops once the next
/// dirty set is at or below `threshold` (converged) or after `max_iters`
/// iterations (not converged).
pub fn predump_schedule(
    m0: f64,
    dirty_rate: f64,
    rate: f64,
    threshold: f64,
    max_iters: u32,
) -> Result<PredumpSchedule, EngineError> {
    if !(rate > 0.0) {
        return Err(EngineError::InvalidRate(rate));
    }
    let max_iters = max_iters.max(1);
    let mut iterations = Vec::new();
    let mut current = m0;
    loop {
        iterations.push(current);
        let next = dirty_rate * (current / rate);
        if next <= threshold {
            return Ok(PredumpSchedule {
                iterations,
                final_dirty_bytes: next,
                converged: true,
            });
        }
        if iterations.len() as u32 == max_iters {
            return Ok(PredumpSchedule {
                iterations,
                final_dirty_bytes: next,
                converged: false,
            });
        }
        current = next;
    }
}

/// Same schedule as [`predump_schedule`], derived from the geometric closed
/// form `m0 * (dirty_rate / rate)^i` and a logarithmic stop index.
pub fn predump_closed_form(
    m0: f64,
    dirty_rate: f64,
    rate: f64,
    threshold: f64,
    max_iters: u32,
) -> Result<PredumpSchedule, EngineError> {
    if !(rate > 0.0) {
        return Err(EngineError::InvalidRate(rate));
    }
    let max_iters = max_iters.max(1);
    let q = dirty_rate / rate;
    let term = |i: u32| m0 * q.powi(i as i32);

    let converges_at = if term(1) <= threshold {
        Some(1)
    } else if q < 1.0 && threshold > 0.0 {
        // smallest i with m0 q^i <= threshold
        let guess = ((threshold / m0).ln() / q.ln()).ceil().max(1.0);
        if guess > f64::from(max_iters) {
            None
        } else {
            let mut k = guess as u32;
            while k > 1 && term(k - 1) <= threshold {
                k -= 1;
            }
            while k <= max_iters && term(k) > threshold {
                k += 1;
            }
            (k <= max_iters).then_some(k)
        }
    } else {
        None
    };

    let (stop, converged) = match converges_at {
        Some(k) => (k, true),
        None => (max_iters, false),
    };
    Ok(PredumpSchedule {
        iterations: (0..stop).map(term).collect(),
        final_dirty_bytes: term(stop),
        converged,
    })
}

/// Wall time of one phase in isolation.
///
/// Transfer phases take `bytes / rate + overhead_s + latency_s`. For
/// `Restore` and `Reconnect` the fixed duration is passed as `overhead_s`
/// (restore time, reconnect delay) and rate, bytes and latency are ignored.
pub fn phase_duration(
    phase: PhaseKind,
    bytes: f64,
    rate: f64,
    overhead_s: f64,
    latency_s: f64,
) -> Result<f64, EngineError> {
    if phase.is_transfer() {
        if !(rate > 0.0) {
            return Err(EngineError::InvalidRate(rate));
        }
        Ok(bytes / rate + overhead_s + latency_s)
    } else {
        Ok(overhead_s)
    }
}

/// Memory re-dirtied while an instance idles before its dump, capped at `cap`.
pub fn accumulate_dirty(dirty_rate: f64, wait_s: f64, cap: f64) -> f64 {
    (dirty_rate * wait_s.max(0.0)).min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    TransferComplete,
    TaskEnd,
    RestoreComplete,
    ReservationReleased,
    BarrierRelease,
    TaskReady,
    QueuedStart,
    ReservationGranted,
    TaskStart,
    FreezeStart,
    Warning,
    AllocationChange,
    ReconnectComplete,
}

impl EventKind {
    /// Tie-break rank among events sharing a timestamp.
    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TransferComplete => "transfer_complete",
            EventKind::TaskEnd => "task_end",
            EventKind::RestoreComplete => "restore_complete",
            EventKind::ReservationReleased => "reservation_released",
            EventKind::BarrierRelease => "barrier_release",
            EventKind::TaskReady => "task_ready",
            EventKind::QueuedStart => "queued_start",
            EventKind::ReservationGranted => "reservation_granted",
            EventKind::TaskStart => "task_start",
            EventKind::FreezeStart => "freeze_start",
            EventKind::Warning => "warning",
            EventKind::AllocationChange => "allocation_change",
            EventKind::ReconnectComplete => "reconnect_complete",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time_s: f64,
    pub kind: EventKind,
    /// Chain index; `None` for chain-level or link-level events.
    pub instance: Option<usize>,
    pub phase: Option<PhaseKind>,
    pub detail: String,
}

/// Link-wide allocation right after a re-allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSample {
    pub time_s: f64,
    pub total_rate_bytes_per_s: f64,
    pub active_transfers: usize,
    pub total_reserved_bytes_per_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub instance: usize,
    pub phase: PhaseKind,
    pub requested_bytes: f64,
    pub shipped_bytes: f64,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub instances: Vec<String>,
    pub events: Vec<Event>,
    pub cpu_cost_pct: BTreeMap<PhaseKind, f64>,
    pub source_cpu_capacity_pct: f64,
    pub destination_cpu_capacity_pct: f64,
    pub link_capacity_bytes_per_s: f64,
    pub reservable_bytes_per_s: f64,
    pub allocation_trace: Vec<AllocationSample>,
    pub transfers: Vec<TransferRecord>,
    /// Grants issued and released over the run.
    pub grants_issued: usize,
    pub grants_released: usize,
    pub cpu_source: Vec<(f64, f64)>,
    pub cpu_destination: Vec<(f64, f64)>,
}

impl EventLog {
    pub fn new(instances: Vec<String>, cpu_cost_pct: BTreeMap<PhaseKind, f64>) -> Self {
        Self {
            instances,
            events: Vec::new(),
            cpu_cost_pct,
            source_cpu_capacity_pct: 100.0,
            destination_cpu_capacity_pct: 100.0,
            link_capacity_bytes_per_s: 0.0,
            reservable_bytes_per_s: 0.0,
            allocation_trace: Vec::new(),
            transfers: Vec::new(),
            grants_issued: 0,
            grants_released: 0,
            cpu_source: vec![(0.0, 0.0)],
            cpu_destination: vec![(0.0, 0.0)],
        }
    }

    pub fn push(
        &mut self,
        time_s: f64,
        kind: EventKind,
        instance: Option<usize>,
        phase: Option<PhaseKind>,
        detail: impl Into<String>,
    ) {
        self.events.push(Event {
            time_s,
            kind,
            instance,
            phase,
            detail: detail.into(),
        });
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn has_warnings(&self) -> bool {
        self.events_of(EventKind::Warning).next().is_some()
    }

    /// CSV with header `time_s,kind,instance,phase,detail`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time_s", "kind", "instance", "phase", "detail"])
            .expect("in-memory write");
        for e in &self.events {
            let instance = e
                .instance
                .and_then(|i| self.instances.get(i))
                .map(String::as_str)
                .unwrap_or("");
            let phase = e.phase.map(PhaseKind::as_str).unwrap_or("");
            w.write_record([
                e.time_s.to_string().as_str(),
                e.kind.as_str(),
                instance,
                phase,
                e.detail.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

fn node_of(phase: PhaseKind) -> Option<NodeRole> {
    match phase {
        PhaseKind::DiskCopy | PhaseKind::PreDump | PhaseKind::Dump => Some(NodeRole::Source),
        PhaseKind::Restore => Some(NodeRole::Destination),
        PhaseKind::Reconnect => None,
    }
}

/// Right-continuous CPU load step function of one node, in percent.
///
/// Load is the sum of the costs of the tasks active on that node, scaled by
/// the node capacity and clamped to 100. Points are emitted only where the
/// load changes; the first point is always at t = 0.
pub fn cpu_series(log: &EventLog, node: NodeRole) -> Vec<(f64, f64)> {
    let capacity = match node {
        NodeRole::Source => log.source_cpu_capacity_pct,
        NodeRole::Destination => log.destination_cpu_capacity_pct,
    };
    let scale = if capacity > 0.0 { 100.0 / capacity } else { 0.0 };

    let mut deltas: Vec<(f64, f64)> = Vec::new();
    for e in &log.events {
        let sign = match e.kind {
            EventKind::TaskStart => 1.0,
            EventKind::TaskEnd => -1.0,
            _ => continue,
        };
        let Some(phase) = e.phase else { continue };
        if node_of(phase) != Some(node) {
            continue;
        }
        let cost = log.cpu_cost_pct.get(&phase).copied().unwrap_or(0.0);
        deltas.push((e.time_s, sign * cost));
    }
    deltas.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut series = vec![(0.0, 0.0)];
    let mut raw = 0.0;
    let mut i = 0;
    while i < deltas.len() {
        let t = deltas[i].0;
        while i < deltas.len() && deltas[i].0 == t {
            raw += deltas[i].1;
            i += 1;
        }
        // snap float residue from +/- cancellation
        if raw.abs() < 1e-9 {
            raw = 0.0;
        }
        let load = (raw * scale).clamp(0.0, 100.0);
        let last = series.last_mut().expect("non-empty");
        if last.0 == t {
            last.1 = load;
        } else if last.1 != load {
            series.push((t, load));
        }
    }
    series
}

/// Area under a step function, in pct·s.
pub fn step_integral(series: &[(f64, f64)]) -> f64 {
    series
        .windows(2)
        .map(|w| w[0].1 * (w[1].0 - w[0].0))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Blocked,
    AwaitingGrant,
    Setup { until: f64 },
    Transferring,
    Timed { until: f64 },
    Done,
}

#[derive(Debug, Clone)]
struct TaskRt {
    status: Status,
    deps_left: usize,
    gates_left: usize,
}

#[derive(Debug, Clone, Default)]
struct InstanceRt {
    predump_iters: u32,
    iter_elapsed: f64,
    predump_end: Option<f64>,
    final_dirty: f64,
    grant: Option<(GrantId, f64)>,
    reservation_attempted: bool,
}

#[derive(Debug, Clone)]
struct Active {
    id: TransferId,
    task: TaskId,
    instance: usize,
    phase: PhaseKind,
    requested: f64,
    remaining: f64,
    rate: f64,
    shipped: f64,
    start: f64,
    /// Transfer-time spent so far; exact `bytes / rate` for a constant rate.
    elapsed: f64,
    eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Due {
    Transfer(usize),
    SetupDone(TaskId),
    TimerDone(TaskId),
}

struct Run<'a> {
    scenario: &'a Scenario,
    plan: &'a TaskGraph,
    specs: &'a [InstanceSpec],
    t: f64,
    tasks: Vec<TaskRt>,
    successors: Vec<Vec<TaskId>>,
    member_of: Vec<Vec<usize>>,
    barrier_left: Vec<usize>,
    inst: Vec<InstanceRt>,
    active: Vec<Active>,
    next_transfer: usize,
    registry: Option<ReservationRegistry>,
    last_rates: Vec<(TransferId, f64)>,
    log: EventLog,
    done: usize,
}

impl<'a> Run<'a> {
    fn new(scenario: &'a Scenario, plan: &'a TaskGraph, specs: &'a [InstanceSpec]) -> Self {
        let n_tasks = plan.tasks.len();
        let mut successors = vec![Vec::new(); n_tasks];
        let mut tasks: Vec<TaskRt> = plan
            .tasks
            .iter()
            .map(|t| TaskRt {
                status: Status::Blocked,
                deps_left: t.deps.len(),
                gates_left: 0,
            })
            .collect();
        for t in &plan.tasks {
            for d in &t.deps {
                successors[*d].push(t.id);
            }
        }
        let mut member_of = vec![Vec::new(); n_tasks];
        for (b, barrier) in plan.barriers.iter().enumerate() {
            for m in &barrier.members {
                member_of[*m].push(b);
            }
            for g in &barrier.gated {
                tasks[*g].gates_left += 1;
            }
        }
        let registry = scenario
            .pattern
            .network_aware
            .then(|| ReservationRegistry::new(&scenario.link));

        let mut log = EventLog::new(
            specs.iter().map(|s| s.name.clone()).collect(),
            scenario.cpu_cost_pct.clone(),
        );
        log.source_cpu_capacity_pct = scenario.source.cpu_capacity_pct;
        log.destination_cpu_capacity_pct = scenario.destination.cpu_capacity_pct;
        log.link_capacity_bytes_per_s = scenario.link.capacity_bytes_per_s;
        log.reservable_bytes_per_s = scenario.link.reservable_bytes_per_s();

        Run {
            scenario,
            plan,
            specs,
            t: 0.0,
            tasks,
            successors,
            member_of,
            barrier_left: plan.barriers.iter().map(|b| b.members.len()).collect(),
            inst: vec![InstanceRt::default(); specs.len()],
            active: Vec::new(),
            next_transfer: 0,
            registry,
            last_rates: Vec::new(),
            log,
            done: 0,
        }
    }

    fn emit(&mut self, kind: EventKind, task: Option<TaskId>, detail: impl Into<String>) {
        let (instance, phase) = match task {
            Some(id) => {
                let t = &self.plan.tasks[id];
                (t.instance, Some(t.phase))
            }
            None => (None, None),
        };
        self.log.push(self.t, kind, instance, phase, detail);
    }

    fn run(mut self) -> Result<EventLog, EngineError> {
        let roots: Vec<TaskId> = (0..self.tasks.len())
            .filter(|&i| self.tasks[i].deps_left == 0 && self.tasks[i].gates_left == 0)
            .collect();
        for id in roots {
            self.make_ready(id)?;
        }

        loop {
            self.reallocate();
            if self.done == self.tasks.len() {
                break;
            }
            let next = self.next_time();
            if !next.is_finite() {
                return Err(EngineError::Stalled {
                    time_s: self.t,
                    pending: self.tasks.len() - self.done,
                });
            }
            let due = self.advance(next);
            for d in due {
                match d {
                    Due::Transfer(idx) => self.transfer_done(idx)?,
                    Due::SetupDone(task) => self.setup_done(task),
                    Due::TimerDone(task) => self.finish_task(task)?,
                }
            }
            // drop finished transfers (marked with negative remaining)
            self.active.retain(|a| a.remaining >= 0.0);
        }

        let mut log = self.log;
        log.cpu_source = cpu_series(&log, NodeRole::Source);
        log.cpu_destination = cpu_series(&log, NodeRole::Destination);
        Ok(log)
    }

    fn next_time(&mut self) -> f64 {
        let mut next = f64::INFINITY;
        for a in &mut self.active {
            a.eta = if a.remaining <= 0.0 {
                self.t
            } else if a.rate > 0.0 {
                self.t + a.remaining / a.rate
            } else {
                f64::INFINITY
            };
            next = next.min(a.eta);
        }
        for t in &self.tasks {
            match t.status {
                Status::Setup { until } | Status::Timed { until } => next = next.min(until),
                _ => {}
            }
        }
        next
    }

    /// Moves the clock to `next` and returns what completes there, ordered by
    /// (event rank, chain index).
    fn advance(&mut self, next: f64) -> Vec<Due> {
        let dt = next - self.t;
        let slack = 1e-12 * next.abs().max(1.0);
        let mut due: Vec<(u8, usize, Due)> = Vec::new();
        for (idx, a) in self.active.iter_mut().enumerate() {
            if a.eta <= next + slack {
                let piece = if a.rate > 0.0 { a.remaining.max(0.0) / a.rate } else { 0.0 };
                a.shipped += a.remaining.max(0.0);
                a.elapsed += piece;
                a.remaining = 0.0;
                due.push((
                    EventKind::TransferComplete.rank(),
                    a.instance,
                    Due::Transfer(idx),
                ));
            } else {
                let moved = a.rate * dt;
                a.shipped += moved;
                a.remaining -= moved;
                a.elapsed += dt;
            }
        }
        self.t = next;
        let n = self.specs.len();
        for (id, t) in self.tasks.iter().enumerate() {
            let inst = self.plan.tasks[id].instance.unwrap_or(n);
            match t.status {
                Status::Setup { until } if until <= next => {
                    due.push((EventKind::TaskStart.rank(), inst, Due::SetupDone(id)))
                }
                Status::Timed { until } if until <= next => {
                    let kind = if self.plan.tasks[id].phase == PhaseKind::Reconnect {
                        EventKind::ReconnectComplete
                    } else {
                        EventKind::RestoreComplete
                    };
                    due.push((kind.rank(), inst, Due::TimerDone(id)))
                }
                _ => {}
            }
        }
        due.sort();
        due.into_iter().map(|(_, _, d)| d).collect()
    }

    fn reallocate(&mut self) {
        let total_reserved = self
            .registry
            .as_ref()
            .map(|r| r.total_reserved())
            .unwrap_or(0.0);
        let link = LinkState {
            capacity: self.scenario.link.capacity_bytes_per_s,
            migration_limit: self.scenario.migration_bandwidth_limit_bytes_per_s,
            transfers: self
                .active
                .iter()
                .map(|a| Transfer {
                    id: a.id,
                    instance: a.instance,
                    phase: a.phase,
                    remaining_bytes: a.remaining,
                    allocated_rate_bytes_per_s: a.rate,
                    reserved_rate: self.inst[a.instance].grant.map(|(_, r)| r),
                })
                .collect(),
            total_reserved_bytes_per_s: total_reserved,
            background_flow_count: self.scenario.background_transfers,
        };
        let rates = allocate_shares(&link);
        let snapshot: Vec<(TransferId, f64)> = rates.iter().map(|(k, v)| (*k, *v)).collect();
        if snapshot == self.last_rates {
            return;
        }
        for a in &mut self.active {
            a.rate = rates[&a.id];
        }
        let total: f64 = snapshot.iter().map(|(_, r)| r).sum();
        self.log.allocation_trace.push(AllocationSample {
            time_s: self.t,
            total_rate_bytes_per_s: total,
            active_transfers: snapshot.len(),
            total_reserved_bytes_per_s: total_reserved,
        });
        let detail = snapshot
            .iter()
            .map(|(id, r)| format!("{}={}", id.0, r))
            .collect::<Vec<_>>()
            .join(";");
        self.emit(EventKind::AllocationChange, None, detail);
        self.last_rates = snapshot;
    }

    fn make_ready(&mut self, id: TaskId) -> Result<(), EngineError> {
        self.emit(EventKind::TaskReady, Some(id), "");
        self.try_start(id)
    }

    fn try_start(&mut self, id: TaskId) -> Result<(), EngineError> {
        let task = &self.plan.tasks[id];
        if let (Some(i), Some(registry)) = (task.instance, self.registry.as_mut()) {
            if !self.inst[i].reservation_attempted {
                if let Some(&rate) = self.plan.reservation_requests.get(&i) {
                    self.inst[i].reservation_attempted = true;
                    match registry.reserve(i, rate)? {
                        ReserveOutcome::Granted(g) => {
                            self.inst[i].grant = Some((g, rate));
                            self.log.grants_issued += 1;
                            self.emit(EventKind::ReservationGranted, Some(id), format!("rate={rate}"));
                        }
                        ReserveOutcome::Queued => {
                            self.tasks[id].status = Status::AwaitingGrant;
                            self.emit(EventKind::QueuedStart, Some(id), format!("rate={rate}"));
                            return Ok(());
                        }
                    }
                }
            }
        }
        self.begin(id);
        Ok(())
    }

    fn begin(&mut self, id: TaskId) {
        let task = &self.plan.tasks[id];
        let phase = task.phase;
        self.emit(EventKind::TaskStart, Some(id), "");
        match (phase, task.instance) {
            (PhaseKind::Reconnect, _) => {
                self.tasks[id].status = Status::Timed {
                    until: self.t + self.scenario.reconnect_delay_s,
                };
            }
            (PhaseKind::Restore, Some(i)) => {
                self.tasks[id].status = Status::Timed {
                    until: self.t + self.specs[i].restore_time_s,
                };
            }
            (_, Some(i)) => {
                let spec = &self.specs[i];
                if phase == PhaseKind::Dump {
                    let wait = self.inst[i]
                        .predump_end
                        .map(|end| self.t - end)
                        .unwrap_or(0.0);
                    let accrued =
                        accumulate_dirty(spec.dirty_rate_bytes_per_s, wait, spec.mem_delta_bytes);
                    self.inst[i].final_dirty += accrued;
                    let detail = format!(
                        "wait_s={wait};accrued_bytes={accrued};payload_bytes={}",
                        self.inst[i].final_dirty + spec.state_overhead_bytes
                    );
                    self.emit(EventKind::FreezeStart, Some(id), detail);
                }
                let setup = spec.overhead(phase) + self.scenario.link.latency_s;
                self.tasks[id].status = Status::Setup {
                    until: self.t + setup,
                };
            }
            (_, None) => unreachable!("transfer task without an instance"),
        }
    }

    fn setup_done(&mut self, id: TaskId) {
        let task = &self.plan.tasks[id];
        let i = task.instance.expect("transfer phase has an instance");
        let spec = &self.specs[i];
        let bytes = match task.phase {
            PhaseKind::DiskCopy => spec.disk_delta_bytes,
            PhaseKind::PreDump => spec.mem_delta_bytes,
            PhaseKind::Dump => self.inst[i].final_dirty + spec.state_overhead_bytes,
            other => unreachable!("{other} has no setup stage"),
        };
        self.start_transfer(id, bytes);
    }

    fn start_transfer(&mut self, task: TaskId, bytes: f64) {
        let t = &self.plan.tasks[task];
        let instance = t.instance.expect("transfer phase has an instance");
        let id = TransferId(self.next_transfer);
        self.next_transfer += 1;
        self.active.push(Active {
            id,
            task,
            instance,
            phase: t.phase,
            requested: bytes,
            remaining: bytes,
            rate: 0.0,
            shipped: 0.0,
            start: self.t,
            elapsed: 0.0,
            eta: self.t,
        });
        self.tasks[task].status = Status::Transferring;
    }

    fn transfer_done(&mut self, idx: usize) -> Result<(), EngineError> {
        let a = self.active[idx].clone();
        self.active[idx].remaining = -1.0;
        self.log.transfers.push(TransferRecord {
            instance: a.instance,
            phase: a.phase,
            requested_bytes: a.requested,
            shipped_bytes: a.shipped,
            start_s: a.start,
            end_s: self.t,
        });
        self.emit(
            EventKind::TransferComplete,
            Some(a.task),
            format!("bytes={}", a.requested),
        );

        if a.phase == PhaseKind::PreDump {
            let spec = &self.specs[a.instance];
            let rt = &mut self.inst[a.instance];
            rt.predump_iters += 1;
            rt.iter_elapsed = a.elapsed;
            let next = spec.dirty_rate_bytes_per_s * a.elapsed;
            let converged = next <= self.scenario.predump_stop_threshold_bytes;
            let exhausted = rt.predump_iters >= self.scenario.predump_max_iters.max(1);
            if !converged && !exhausted {
                self.start_transfer(a.task, next);
                return Ok(());
            }
            rt.final_dirty = next;
            rt.predump_end = Some(self.t);
            if !converged {
                let iters = rt.predump_iters;
                self.emit(
                    EventKind::Warning,
                    Some(a.task),
                    format!("pre-dump did not converge after {iters} iterations; dump ships {next} dirty bytes"),
                );
            }
        }
        self.finish_task(a.task)
    }

    fn finish_task(&mut self, id: TaskId) -> Result<(), EngineError> {
        self.tasks[id].status = Status::Done;
        self.done += 1;
        self.emit(EventKind::TaskEnd, Some(id), "");
        let task = &self.plan.tasks[id];
        match (task.phase, task.instance) {
            (PhaseKind::Restore, Some(i)) => {
                self.emit(EventKind::RestoreComplete, Some(id), "");
                if let Some((grant, rate)) = self.inst[i].grant.take() {
                    let registry = self.registry.as_mut().expect("grant implies registry");
                    let unblocked = registry.release(grant)?;
                    self.log.grants_released += 1;
                    self.emit(EventKind::ReservationReleased, Some(id), format!("rate={rate}"));
                    for (owner, g) in unblocked {
                        let rate = self.plan.reservation_requests[&owner];
                        self.inst[owner].grant = Some((g, rate));
                        self.log.grants_issued += 1;
                        let waiting = (0..self.tasks.len())
                            .find(|&t| {
                                self.tasks[t].status == Status::AwaitingGrant
                                    && self.plan.tasks[t].instance == Some(owner)
                            })
                            .expect("queued owner has a waiting task");
                        self.emit(
                            EventKind::ReservationGranted,
                            Some(waiting),
                            format!("rate={rate}"),
                        );
                        self.begin(waiting);
                    }
                }
            }
            (PhaseKind::Reconnect, _) => {
                self.emit(EventKind::ReconnectComplete, Some(id), "");
            }
            _ => {}
        }

        for s in self.successors[id].clone() {
            self.tasks[s].deps_left -= 1;
            if self.tasks[s].deps_left == 0 && self.tasks[s].gates_left == 0 {
                self.make_ready(s)?;
            }
        }
        for b in self.member_of[id].clone() {
            self.barrier_left[b] -= 1;
            if self.barrier_left[b] == 0 {
                self.log.push(
                    self.t,
                    EventKind::BarrierRelease,
                    None,
                    None,
                    format!("barrier={}", self.plan.barriers[b].id),
                );
                for g in self.plan.barriers[b].gated.clone() {
                    self.tasks[g].gates_left -= 1;
                    if self.tasks[g].gates_left == 0 && self.tasks[g].deps_left == 0 {
                        self.make_ready(g)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs one repetition with the instance parameters perturbed by the
/// repetition's own RNG stream.
pub fn simulate(scenario: &Scenario, plan: &TaskGraph, rep_index: u32) -> Result<EventLog, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(repetition_seed(scenario.base_seed, rep_index));
    let specs: Vec<InstanceSpec> = scenario
        .sfc
        .instances
        .iter()
        .map(|s| perturb(s, &mut rng, scenario.noise_sigma))
        .collect();
    simulate_with_specs(scenario, plan, &specs)
}

/// Runs the plan with explicit instance parameters (no perturbation).
pub fn simulate_with_specs(
    scenario: &Scenario,
    plan: &TaskGraph,
    specs: &[InstanceSpec],
) -> Result<EventLog, EngineError> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        let joined = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(EngineError::InvalidScenario(joined));
    }
    if plan.instance_count != specs.len() || specs.len() != scenario.sfc.len() {
        return Err(EngineError::PlanMismatch {
            plan: plan.instance_count,
            chain: scenario.sfc.len(),
        });
    }
    Run::new(scenario, plan, specs).run()
}
