//! Domain types for a migration scenario, scenario validation, and the
//! per-repetition perturbation that produces run-to-run variance.
//!
//! Every quantity is expressed in bytes, bytes/second or seconds. All types
//! are plain immutable values once built and can be shared across workers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Lower truncation point of the multiplicative noise factor.
pub const NOISE_FLOOR: f64 = 0.1;

/// Steps of a single live migration plus the chain-level reconnect.
///
/// `DiskCopy` and `PreDump` run while the instance keeps serving; `Dump`
/// freezes it until its `Restore` completes on the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    DiskCopy,
    PreDump,
    Dump,
    Restore,
    Reconnect,
}

impl PhaseKind {
    /// The four per-instance phases in execution order.
    pub const INSTANCE_PHASES: [PhaseKind; 4] = [
        PhaseKind::DiskCopy,
        PhaseKind::PreDump,
        PhaseKind::Dump,
        PhaseKind::Restore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::DiskCopy => "disk_copy",
            PhaseKind::PreDump => "pre_dump",
            PhaseKind::Dump => "dump",
            PhaseKind::Restore => "restore",
            PhaseKind::Reconnect => "reconnect",
        }
    }

    /// Phases that move bytes over the inter-node link.
    pub fn is_transfer(self) -> bool {
        matches!(self, PhaseKind::DiskCopy | PhaseKind::PreDump | PhaseKind::Dump)
    }

    /// Phases during which the instance keeps running.
    pub fn is_non_blocking(self) -> bool {
        matches!(self, PhaseKind::DiskCopy | PhaseKind::PreDump)
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Migration-relevant footprint of one network function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub name: String,
    /// Bytes shipped by the disk-copy phase (a delta, not the full image).
    pub disk_delta_bytes: f64,
    /// Memory set shipped by the first pre-dump iteration.
    pub mem_delta_bytes: f64,
    pub dirty_rate_bytes_per_s: f64,
    /// Extra payload of the blocking dump, e.g. connection-tracking state.
    pub state_overhead_bytes: f64,
    pub restore_time_s: f64,
    /// Fixed non-transfer cost per phase (tool start-up, rsync handshake).
    #[serde(default)]
    pub phase_overhead_s: BTreeMap<PhaseKind, f64>,
    /// Informational only; never shipped.
    #[serde(default)]
    pub nominal_image_bytes: f64,
}

impl InstanceSpec {
    pub fn overhead(&self, phase: PhaseKind) -> f64 {
        self.phase_overhead_s.get(&phase).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcSpec {
    /// Chain order is traffic order and is preserved in every output.
    pub instances: Vec<InstanceSpec>,
}

impl SfcSpec {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.name == name)
    }
}

fn default_reservable_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterMecLink {
    pub capacity_bytes_per_s: f64,
    #[serde(default)]
    pub latency_s: f64,
    /// Cap on the sum of bandwidth reservations, as a fraction of capacity.
    #[serde(default = "default_reservable_fraction")]
    pub reservable_fraction: f64,
}

impl InterMecLink {
    pub fn reservable_bytes_per_s(&self) -> f64 {
        self.reservable_fraction * self.capacity_bytes_per_s
    }
}

fn default_cpu_capacity() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MecNode {
    pub id: String,
    /// 100 means per-task costs are read as percent of this node.
    #[serde(default = "default_cpu_capacity")]
    pub cpu_capacity_pct: f64,
}

/// Which side of the migration a node plays in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Source,
    Destination,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Source => "source",
            NodeRole::Destination => "destination",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePattern {
    Asynchronous,
    WaitForMe,
    RoundRobin,
}

impl BasePattern {
    pub const ALL: [BasePattern; 3] = [
        BasePattern::Asynchronous,
        BasePattern::WaitForMe,
        BasePattern::RoundRobin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BasePattern::Asynchronous => "asynchronous",
            BasePattern::WaitForMe => "wait_for_me",
            BasePattern::RoundRobin => "round_robin",
        }
    }
}

/// One coordination pattern, optionally wrapped by bandwidth reservation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternKind {
    pub base: BasePattern,
    #[serde(default)]
    pub network_aware: bool,
}

impl PatternKind {
    pub fn new(base: BasePattern) -> Self {
        Self {
            base,
            network_aware: false,
        }
    }

    pub fn network_aware(base: BasePattern) -> Self {
        Self {
            base,
            network_aware: true,
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base.as_str())?;
        if self.network_aware {
            f.write_str("+network_aware")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown pattern `{0}` (expected asynchronous, wait_for_me or round_robin, optionally suffixed with +network_aware)")]
pub struct ParsePatternError(String);

impl FromStr for PatternKind {
    type Err = ParsePatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (base, network_aware) = match lower.split_once('+') {
            Some((b, flag)) => {
                let flag = flag.replace(['-', '_'], "");
                if flag != "networkaware" && flag != "na" {
                    return Err(ParsePatternError(s.to_string()));
                }
                (b.to_string(), true)
            }
            None => (lower, false),
        };
        let base = match base.replace(['-', '_'], "").as_str() {
            "async" | "asynchronous" => BasePattern::Asynchronous,
            "waitforme" | "wfm" => BasePattern::WaitForMe,
            "roundrobin" | "rr" => BasePattern::RoundRobin,
            _ => return Err(ParsePatternError(s.to_string())),
        };
        Ok(PatternKind {
            base,
            network_aware,
        })
    }
}

fn default_repetitions() -> u32 {
    10
}
fn default_noise_sigma() -> f64 {
    0.05
}
fn default_threshold() -> f64 {
    65_536.0
}
fn default_max_iters() -> u32 {
    5
}
fn default_reservation_tolerance() -> f64 {
    0.10
}
fn default_reservation_rate_tol() -> f64 {
    1_000.0
}

/// Default per-task CPU cost in percent of a node.
pub fn default_cpu_costs() -> BTreeMap<PhaseKind, f64> {
    BTreeMap::from([
        (PhaseKind::DiskCopy, 25.0),
        (PhaseKind::PreDump, 30.0),
        (PhaseKind::Dump, 35.0),
        (PhaseKind::Restore, 20.0),
    ])
}

/// Stop rule of the iterative pre-dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredumpPolicy {
    pub stop_threshold_bytes: f64,
    pub max_iters: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub source: MecNode,
    pub destination: MecNode,
    pub link: InterMecLink,
    pub sfc: SfcSpec,
    pub pattern: PatternKind,
    /// Cap on the pool shared by unreserved migration transfers; `None` is full link.
    #[serde(default)]
    pub migration_bandwidth_limit_bytes_per_s: Option<f64>,
    #[serde(default)]
    pub background_transfers: u32,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_threshold")]
    pub predump_stop_threshold_bytes: f64,
    #[serde(default = "default_max_iters")]
    pub predump_max_iters: u32,
    #[serde(default)]
    pub reconnect_delay_s: f64,
    #[serde(default = "default_cpu_costs")]
    pub cpu_cost_pct: BTreeMap<PhaseKind, f64>,
    /// Relative downtime slack accepted when sizing a reservation.
    #[serde(default = "default_reservation_tolerance")]
    pub reservation_tolerance: f64,
    /// Bisection stops once the bracket is narrower than this.
    #[serde(default = "default_reservation_rate_tol")]
    pub reservation_rate_tol_bytes_per_s: f64,
}

impl Scenario {
    pub fn predump_policy(&self) -> PredumpPolicy {
        PredumpPolicy {
            stop_threshold_bytes: self.predump_stop_threshold_bytes,
            max_iters: self.predump_max_iters,
        }
    }

    pub fn node(&self, role: NodeRole) -> &MecNode {
        match role {
            NodeRole::Source => &self.source,
            NodeRole::Destination => &self.destination,
        }
    }

    pub fn cpu_cost(&self, phase: PhaseKind) -> f64 {
        self.cpu_cost_pct.get(&phase).copied().unwrap_or(0.0)
    }

    /// Rate the migration pool actually gets: the limit if set, otherwise capacity.
    pub fn effective_bandwidth(&self) -> f64 {
        self.migration_bandwidth_limit_bytes_per_s
            .unwrap_or(self.link.capacity_bytes_per_s)
    }

    /// Clone with the bandwidth limit set; values at or above capacity mean "full".
    pub fn with_bandwidth(&self, bandwidth: Option<f64>) -> Scenario {
        let mut s = self.clone();
        s.migration_bandwidth_limit_bytes_per_s =
            bandwidth.filter(|bw| *bw < self.link.capacity_bytes_per_s);
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Scenario> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// A single invariant violation, tagged with the offending field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn non_negative(&mut self, path: String, value: f64) {
        if !value.is_finite() {
            self.push(path, "must be finite");
        } else if value < 0.0 {
            self.push(path, "must be ≥ 0");
        }
    }

    fn positive(&mut self, path: String, value: f64) {
        if !(value.is_finite() && value > 0.0) {
            self.push(path, "must be > 0");
        }
    }
}

/// Lists every invariant violation of `s`; an empty list means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };

    if s.sfc.is_empty() {
        c.push("sfc.instances", "chain must contain at least one instance");
    }
    let mut seen = BTreeSet::new();
    for (i, inst) in s.sfc.instances.iter().enumerate() {
        let p = |f: &str| format!("sfc.instances[{i}].{f}");
        if inst.name.is_empty() {
            c.push(p("name"), "must not be empty");
        }
        if !seen.insert(inst.name.as_str()) {
            c.push(p("name"), format!("duplicate instance name `{}`", inst.name));
        }
        c.non_negative(p("disk_delta_bytes"), inst.disk_delta_bytes);
        c.non_negative(p("mem_delta_bytes"), inst.mem_delta_bytes);
        c.non_negative(p("dirty_rate_bytes_per_s"), inst.dirty_rate_bytes_per_s);
        c.non_negative(p("state_overhead_bytes"), inst.state_overhead_bytes);
        c.non_negative(p("restore_time_s"), inst.restore_time_s);
        c.non_negative(p("nominal_image_bytes"), inst.nominal_image_bytes);
        for (phase, v) in &inst.phase_overhead_s {
            c.non_negative(p(&format!("phase_overhead_s.{phase}")), *v);
        }
    }

    c.positive("link.capacity_bytes_per_s".into(), s.link.capacity_bytes_per_s);
    c.non_negative("link.latency_s".into(), s.link.latency_s);
    if !(0.0..=1.0).contains(&s.link.reservable_fraction) {
        c.push("link.reservable_fraction", "must lie in [0, 1]");
    }
    c.positive("source.cpu_capacity_pct".into(), s.source.cpu_capacity_pct);
    c.positive(
        "destination.cpu_capacity_pct".into(),
        s.destination.cpu_capacity_pct,
    );

    if let Some(limit) = s.migration_bandwidth_limit_bytes_per_s {
        if !(limit.is_finite() && limit > 0.0) {
            c.push("migration_bandwidth_limit_bytes_per_s", "limit must be > 0");
        } else if limit > s.link.capacity_bytes_per_s {
            c.push(
                "migration_bandwidth_limit_bytes_per_s",
                "limit exceeds link capacity",
            );
        }
    }
    if s.repetitions < 1 {
        c.push("repetitions", "repetitions must be ≥ 1");
    }
    c.non_negative("noise_sigma".into(), s.noise_sigma);
    c.non_negative(
        "predump_stop_threshold_bytes".into(),
        s.predump_stop_threshold_bytes,
    );
    if s.predump_max_iters < 1 {
        c.push("predump_max_iters", "predump_max_iters must be ≥ 1");
    }
    c.non_negative("reconnect_delay_s".into(), s.reconnect_delay_s);
    for (phase, v) in &s.cpu_cost_pct {
        c.non_negative(format!("cpu_cost_pct.{phase}"), *v);
    }
    c.positive("reservation_tolerance".into(), s.reservation_tolerance);
    c.positive(
        "reservation_rate_tol_bytes_per_s".into(),
        s.reservation_rate_tol_bytes_per_s,
    );

    // Reservations must each fit under the cap or the migration would queue forever.
    if s.pattern.network_aware && c.out.is_empty() {
        let cap = s.link.reservable_bytes_per_s();
        for (i, inst) in s.sfc.instances.iter().enumerate() {
            match crate::patterns::compute_reservation(
                inst,
                &s.link,
                s.predump_policy(),
                s.reservation_tolerance,
                s.reservation_rate_tol_bytes_per_s,
            ) {
                Ok(r) if r > cap * (1.0 + 1e-12) => c.push(
                    format!("sfc.instances[{i}]"),
                    format!("reservation {r} B/s exceeds reservable cap {cap} B/s"),
                ),
                Ok(_) => {}
                Err(e) => c.push(format!("sfc.instances[{i}]"), e.to_string()),
            }
        }
    }

    c.out
}

/// Applies independent multiplicative noise to the rate and time parameters.
///
/// Each of dirty rate, state overhead, restore time and every phase overhead
/// is scaled by a draw from Normal(1, sigma²) truncated below at
/// [`NOISE_FLOOR`]. Draws are consumed in a fixed order so the result is a
/// pure function of the RNG state.
pub fn perturb<R: Rng + ?Sized>(spec: &InstanceSpec, rng: &mut R, sigma: f64) -> InstanceSpec {
    let mut out = spec.clone();
    if sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(1.0, sigma).expect("sigma is finite and positive");
    let mut factor = || loop {
        let f: f64 = normal.sample(rng);
        if f >= NOISE_FLOOR {
            break f;
        }
    };
    out.dirty_rate_bytes_per_s *= factor();
    out.state_overhead_bytes *= factor();
    out.restore_time_s *= factor();
    for v in out.phase_overhead_s.values_mut() {
        *v *= factor();
    }
    out
}

/// Seed of the RNG stream owned by one repetition.
pub fn repetition_seed(base_seed: u64, rep_index: u32) -> u64 {
    base_seed ^ u64::from(rep_index)
}
