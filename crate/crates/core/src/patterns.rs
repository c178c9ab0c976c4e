//! Migration coordination patterns as explicit task graphs, plus bandwidth
//! reservations for the network-aware wrapper.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::engine::{predump_schedule, EngineError};
use crate::model::{BasePattern, InstanceSpec, InterMecLink, PatternKind, PhaseKind, PredumpPolicy, Scenario, SfcSpec};

pub type TaskId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    /// Chain index; `None` for the chain-level reconnect.
    pub instance: Option<usize>,
    pub phase: PhaseKind,
    pub deps: Vec<TaskId>,
    /// Barrier this task is a member of.
    pub barrier: Option<usize>,
}

/// Tasks in `gated` may not start before every task in `members` has finished.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub id: usize,
    pub members: Vec<TaskId>,
    pub gated: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    pub pattern: PatternKind,
    pub instance_count: usize,
    pub tasks: Vec<Task>,
    pub barriers: Vec<Barrier>,
    /// Chain index → reserved rate in bytes/second (network-aware only).
    pub reservation_requests: BTreeMap<usize, f64>,
}

impl TaskGraph {
    pub fn task(&self, instance: usize, phase: PhaseKind) -> Option<&Task> {
        self.tasks
            .iter()
            .find(|t| t.instance == Some(instance) && t.phase == phase)
    }

    pub fn reconnect(&self) -> &Task {
        self.tasks
            .iter()
            .find(|t| t.phase == PhaseKind::Reconnect)
            .expect("every plan ends with a reconnect")
    }

    /// Kahn order, or `None` when the dependency graph (including barrier
    /// gating) has a cycle.
    pub fn topological_order(&self) -> Option<Vec<TaskId>> {
        let n = self.tasks.len();
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<TaskId>> = vec![Vec::new(); n];
        let mut edge = |from: TaskId, to: TaskId| {
            out[from].push(to);
            indegree[to] += 1;
        };
        for t in &self.tasks {
            for &d in &t.deps {
                edge(d, t.id);
            }
        }
        for b in &self.barriers {
            for &m in &b.members {
                for &g in &b.gated {
                    edge(m, g);
                }
            }
        }
        let mut queue: VecDeque<TaskId> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &j in &out[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push_back(j);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Diagnostic export: `[{task_id, instance, phase, deps, barrier}]`.
    pub fn to_json(&self, sfc: &SfcSpec) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            task_id: TaskId,
            instance: Option<&'a str>,
            phase: PhaseKind,
            deps: &'a [TaskId],
            barrier: Option<usize>,
        }
        let rows: Vec<Row> = self
            .tasks
            .iter()
            .map(|t| Row {
                task_id: t.id,
                instance: t.instance.map(|i| sfc.instances[i].name.as_str()),
                phase: t.phase,
                deps: &t.deps,
                barrier: t.barrier,
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("plan serializes")
    }
}

/// Builds the task graph of one pattern over `sfc`.
///
/// Every plan holds the per-instance chain DiskCopy → PreDump → Dump →
/// Restore and a final Reconnect that depends on every Restore.
/// `WaitForMe` adds one barrier over all PreDumps gating all Dumps.
/// `RoundRobin` threads every task onto a single phase-grouped path.
/// Reservation requests are left empty; see [`build_plan_for`].
pub fn build_plan(pattern: PatternKind, sfc: &SfcSpec) -> TaskGraph {
    let n = sfc.len();
    let mut tasks: Vec<Task> = Vec::with_capacity(4 * n + 1);
    let mut id_of = vec![[0usize; 4]; n];

    match pattern.base {
        BasePattern::Asynchronous | BasePattern::WaitForMe => {
            for (i, ids) in id_of.iter_mut().enumerate() {
                for (k, phase) in PhaseKind::INSTANCE_PHASES.into_iter().enumerate() {
                    let id = tasks.len();
                    let deps = if k == 0 { vec![] } else { vec![id - 1] };
                    tasks.push(Task {
                        id,
                        instance: Some(i),
                        phase,
                        deps,
                        barrier: None,
                    });
                    ids[k] = id;
                }
            }
        }
        BasePattern::RoundRobin => {
            for (k, phase) in PhaseKind::INSTANCE_PHASES.into_iter().enumerate() {
                for (i, ids) in id_of.iter_mut().enumerate() {
                    let id = tasks.len();
                    let mut deps = Vec::new();
                    if id > 0 {
                        deps.push(id - 1);
                    }
                    if k > 0 && ids[k - 1] != id.wrapping_sub(1) {
                        deps.push(ids[k - 1]);
                    }
                    deps.sort_unstable();
                    tasks.push(Task {
                        id,
                        instance: Some(i),
                        phase,
                        deps,
                        barrier: None,
                    });
                    ids[k] = id;
                }
            }
        }
    }

    let mut barriers = Vec::new();
    if pattern.base == BasePattern::WaitForMe && n > 0 {
        let members: Vec<TaskId> = id_of.iter().map(|ids| ids[1]).collect();
        for &m in &members {
            tasks[m].barrier = Some(0);
        }
        barriers.push(Barrier {
            id: 0,
            members,
            gated: id_of.iter().map(|ids| ids[2]).collect(),
        });
    }

    let reconnect = tasks.len();
    tasks.push(Task {
        id: reconnect,
        instance: None,
        phase: PhaseKind::Reconnect,
        deps: id_of.iter().map(|ids| ids[3]).collect(),
        barrier: None,
    });

    TaskGraph {
        pattern,
        instance_count: n,
        tasks,
        barriers,
        reservation_requests: BTreeMap::new(),
    }
}

/// [`build_plan`] for a scenario, attaching per-instance reservation
/// requests when the pattern is network-aware.
pub fn build_plan_for(scenario: &Scenario) -> Result<TaskGraph, PlanError> {
    let mut plan = build_plan(scenario.pattern, &scenario.sfc);
    if scenario.pattern.network_aware {
        for (i, inst) in scenario.sfc.instances.iter().enumerate() {
            let r = compute_reservation(
                inst,
                &scenario.link,
                scenario.predump_policy(),
                scenario.reservation_tolerance,
                scenario.reservation_rate_tol_bytes_per_s,
            )?;
            plan.reservation_requests.insert(i, r);
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("reservation tolerance must be > 0, got {0}")]
    InvalidTolerance(f64),
    #[error("rate tolerance must be > 0, got {0}")]
    InvalidRateTolerance(f64),
    #[error("downtime at full capacity is not finite for `{0}`")]
    UnboundedDowntime(String),
    #[error("internal: no feasible reservation at or below capacity for `{0}`")]
    NoFeasibleRate(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Uncontended blocking time of `inst` when every transfer runs at `rate`:
/// dump of the final dirty set plus state, dump overhead, link latency and
/// restore.
pub fn downtime_at_rate(
    inst: &InstanceSpec,
    link: &InterMecLink,
    policy: PredumpPolicy,
    rate: f64,
) -> Result<f64, EngineError> {
    let pd = predump_schedule(
        inst.mem_delta_bytes,
        inst.dirty_rate_bytes_per_s,
        rate,
        policy.stop_threshold_bytes,
        policy.max_iters,
    )?;
    Ok((pd.final_dirty_bytes + inst.state_overhead_bytes) / rate
        + inst.overhead(PhaseKind::Dump)
        + link.latency_s
        + inst.restore_time_s)
}

/// Smallest rate whose downtime stays within `(1 + tolerance)` of the
/// full-capacity downtime, found by bisection to a bracket of `rate_tol`.
pub fn compute_reservation(
    inst: &InstanceSpec,
    link: &InterMecLink,
    policy: PredumpPolicy,
    tolerance: f64,
    rate_tol: f64,
) -> Result<f64, PlanError> {
    if !(tolerance > 0.0) {
        return Err(PlanError::InvalidTolerance(tolerance));
    }
    if !(rate_tol > 0.0) {
        return Err(PlanError::InvalidRateTolerance(rate_tol));
    }
    let capacity = link.capacity_bytes_per_s;
    let reference = downtime_at_rate(inst, link, policy, capacity)?;
    if !reference.is_finite() {
        return Err(PlanError::UnboundedDowntime(inst.name.clone()));
    }
    let budget = (1.0 + tolerance) * reference;
    let feasible = |r: f64| downtime_at_rate(inst, link, policy, r).map(|d| d <= budget);

    if !feasible(capacity)? {
        return Err(PlanError::NoFeasibleRate(inst.name.clone()));
    }
    // lo is kept infeasible (or zero), hi feasible
    let mut lo = 0.0;
    let mut hi = capacity;
    while hi - lo > rate_tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GrantId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReserveOutcome {
    Granted(GrantId),
    /// Parked until enough reserved bandwidth is released.
    Queued,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("reservation rate must be > 0, got {0}")]
    InvalidRate(f64),
    #[error("reservation of {rate} B/s can never fit under the cap of {cap} B/s")]
    ExceedsCap { rate: f64, cap: f64 },
    #[error("release of unknown grant {0:?}")]
    UnknownGrant(GrantId),
}

/// Admission control for reserved migration bandwidth on one link.
#[derive(Debug, Clone)]
pub struct ReservationRegistry {
    cap: f64,
    total_reserved: f64,
    grants: BTreeMap<GrantId, f64>,
    queue: VecDeque<(usize, f64)>,
    next_id: u64,
}

impl ReservationRegistry {
    pub fn new(link: &InterMecLink) -> Self {
        Self::with_cap(link.reservable_bytes_per_s())
    }

    pub fn with_cap(cap: f64) -> Self {
        Self {
            cap,
            total_reserved: 0.0,
            grants: BTreeMap::new(),
            queue: VecDeque::new(),
            next_id: 0,
        }
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn total_reserved(&self) -> f64 {
        self.total_reserved
    }

    pub fn active_grants(&self) -> usize {
        self.grants.len()
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    fn fits(&self, rate: f64) -> bool {
        self.total_reserved + rate <= self.cap * (1.0 + 1e-12)
    }

    fn grant(&mut self, rate: f64) -> GrantId {
        let id = GrantId(self.next_id);
        self.next_id += 1;
        self.total_reserved += rate;
        self.grants.insert(id, rate);
        id
    }

    /// Grants `rate` to `owner` if it fits under the cap, otherwise queues it.
    pub fn reserve(&mut self, owner: usize, rate: f64) -> Result<ReserveOutcome, RegistryError> {
        if !(rate > 0.0) {
            return Err(RegistryError::InvalidRate(rate));
        }
        if rate > self.cap * (1.0 + 1e-12) {
            return Err(RegistryError::ExceedsCap { rate, cap: self.cap });
        }
        if self.queue.is_empty() && self.fits(rate) {
            Ok(ReserveOutcome::Granted(self.grant(rate)))
        } else {
            self.queue.push_back((owner, rate));
            Ok(ReserveOutcome::Queued)
        }
    }

    /// Frees a grant and admits queued requests in FIFO order while they fit.
    /// Returns `(owner, grant)` for every newly admitted request.
    pub fn release(&mut self, grant: GrantId) -> Result<Vec<(usize, GrantId)>, RegistryError> {
        let rate = self
            .grants
            .remove(&grant)
            .ok_or(RegistryError::UnknownGrant(grant))?;
        self.total_reserved -= rate;
        if self.grants.is_empty() {
            // clear accumulated float residue
            self.total_reserved = 0.0;
        }
        let mut admitted = Vec::new();
        while let Some(&(owner, rate)) = self.queue.front() {
            if !self.fits(rate) {
                break;
            }
            self.queue.pop_front();
            admitted.push((owner, self.grant(rate)));
        }
        Ok(admitted)
    }
}
