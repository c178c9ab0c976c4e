//! Fits instance parameters so that noise-free simulation reproduces a grid
//! of observed (instance, bandwidth) downtime and total-time cells.
//!
//! Search runs in a unit box per free parameter, mapped to its range by
//! `lo + (hi - lo) * u^2` so that small values get finer resolution. A few
//! coordinate-wise grid passes pick a starting point, then a pattern search
//! with a halving step refines it. Every candidate set is evaluated through
//! the parallel map and reduced in index order, so the result is
//! deterministic.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::extract;
use crate::engine::simulate_with_specs;
use crate::model::{validate_scenario, BasePattern, InstanceSpec, PatternKind, PhaseKind, Scenario};
use crate::par;
use crate::patterns::build_plan_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibParam {
    DiskDeltaBytes,
    MemDeltaBytes,
    StateOverheadBytes,
    RestoreTimeS,
    DiskCopyOverheadS,
    PreDumpOverheadS,
    DumpOverheadS,
}

impl CalibParam {
    pub const ALL: [CalibParam; 7] = [
        CalibParam::DiskDeltaBytes,
        CalibParam::MemDeltaBytes,
        CalibParam::StateOverheadBytes,
        CalibParam::RestoreTimeS,
        CalibParam::DiskCopyOverheadS,
        CalibParam::PreDumpOverheadS,
        CalibParam::DumpOverheadS,
    ];

    pub fn get(self, spec: &InstanceSpec) -> f64 {
        match self {
            CalibParam::DiskDeltaBytes => spec.disk_delta_bytes,
            CalibParam::MemDeltaBytes => spec.mem_delta_bytes,
            CalibParam::StateOverheadBytes => spec.state_overhead_bytes,
            CalibParam::RestoreTimeS => spec.restore_time_s,
            CalibParam::DiskCopyOverheadS => spec.overhead(PhaseKind::DiskCopy),
            CalibParam::PreDumpOverheadS => spec.overhead(PhaseKind::PreDump),
            CalibParam::DumpOverheadS => spec.overhead(PhaseKind::Dump),
        }
    }

    pub fn set(self, spec: &mut InstanceSpec, value: f64) {
        match self {
            CalibParam::DiskDeltaBytes => spec.disk_delta_bytes = value,
            CalibParam::MemDeltaBytes => spec.mem_delta_bytes = value,
            CalibParam::StateOverheadBytes => spec.state_overhead_bytes = value,
            CalibParam::RestoreTimeS => spec.restore_time_s = value,
            CalibParam::DiskCopyOverheadS => {
                spec.phase_overhead_s.insert(PhaseKind::DiskCopy, value);
            }
            CalibParam::PreDumpOverheadS => {
                spec.phase_overhead_s.insert(PhaseKind::PreDump, value);
            }
            CalibParam::DumpOverheadS => {
                spec.phase_overhead_s.insert(PhaseKind::Dump, value);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    DowntimeS,
    TotalTimeS,
}

impl TargetMetric {
    pub const ALL: [TargetMetric; 2] = [TargetMetric::DowntimeS, TargetMetric::TotalTimeS];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetMetric::DowntimeS => "downtime_s",
            TargetMetric::TotalTimeS => "total_time_s",
        }
    }
}

impl fmt::Display for TargetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Observed means of one instance at one bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub instance: String,
    pub bandwidth_bytes_per_s: f64,
    #[serde(default)]
    pub downtime_s: Option<f64>,
    #[serde(default)]
    pub total_time_s: Option<f64>,
}

impl TargetRow {
    pub fn value(&self, metric: TargetMetric) -> Option<f64> {
        match metric {
            TargetMetric::DowntimeS => self.downtime_s,
            TargetMetric::TotalTimeS => self.total_time_s,
        }
    }
}

fn default_target_pattern() -> PatternKind {
    PatternKind::new(BasePattern::Asynchronous)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Pattern the observations were taken under.
    #[serde(default = "default_target_pattern")]
    pub pattern: PatternKind,
    pub rows: Vec<TargetRow>,
}

fn default_ceiling() -> f64 {
    0.15
}
fn default_grid_points() -> usize {
    9
}
fn default_grid_passes() -> usize {
    2
}
fn default_min_step() -> f64 {
    1e-6
}
fn default_max_evaluations() -> usize {
    40_000
}

/// Search space: parameters absent from `ranges` stay at their scenario value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBounds {
    pub ranges: BTreeMap<CalibParam, [f64; 2]>,
    /// Per-instance overrides of `ranges`.
    #[serde(default)]
    pub instance_ranges: BTreeMap<String, BTreeMap<CalibParam, [f64; 2]>>,
    /// Dirty rates pinned during the fit; unlisted instances keep the scenario value.
    #[serde(default)]
    pub dirty_rate_bytes_per_s: BTreeMap<String, f64>,
    #[serde(default = "default_ceiling")]
    pub residual_ceiling: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_grid_passes")]
    pub grid_passes: usize,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("targets are missing cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("targets name unknown instance `{0}`")]
    UnknownInstance(String),
    #[error("no target cells given")]
    NoTargets,
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid base scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub instance: String,
    pub bandwidth_bytes_per_s: f64,
    pub metric: TargetMetric,
    pub target: f64,
    pub simulated: f64,
    /// (simulated - target) / target
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub scenario: Scenario,
    pub residuals: Vec<Residual>,
    pub objective: f64,
    pub evaluations: usize,
    pub residual_ceiling: f64,
}

impl CalibrationResult {
    pub fn max_relative_error(&self) -> f64 {
        self.residuals
            .iter()
            .map(|r| r.relative_error.abs())
            .fold(0.0, f64::max)
    }

    pub fn within_ceiling(&self) -> bool {
        self.max_relative_error() <= self.residual_ceiling
    }
}

struct Cell {
    instance: usize,
    bandwidth: usize,
    metric: TargetMetric,
    target: f64,
}

struct Free {
    instance: usize,
    param: CalibParam,
    lo: f64,
    hi: f64,
}

impl Free {
    fn value(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u * u
    }
}

struct Problem {
    base: Scenario,
    bandwidths: Vec<f64>,
    cells: Vec<Cell>,
    free: Vec<Free>,
}

impl Problem {
    fn specs(&self, u: &[f64]) -> Vec<InstanceSpec> {
        let mut specs = self.base.sfc.instances.clone();
        for (f, &x) in self.free.iter().zip(u) {
            f.param.set(&mut specs[f.instance], f.value(x));
        }
        specs
    }

    /// Simulated metric for every cell, or `None` if any run fails.
    fn simulate(&self, u: &[f64]) -> Option<Vec<f64>> {
        let mut scenario = self.base.clone();
        scenario.sfc.instances = self.specs(u);
        let mut per_bw = Vec::with_capacity(self.bandwidths.len());
        for &bw in &self.bandwidths {
            let s = scenario.with_bandwidth(Some(bw));
            let plan = build_plan_for(&s).ok()?;
            let log = simulate_with_specs(&s, &plan, &s.sfc.instances).ok()?;
            per_bw.push(extract(&log).ok()?);
        }
        Some(
            self.cells
                .iter()
                .map(|c| {
                    let m = &per_bw[c.bandwidth].instances[c.instance];
                    match c.metric {
                        TargetMetric::DowntimeS => m.downtime_s,
                        TargetMetric::TotalTimeS => m.total_time_s,
                    }
                })
                .collect(),
        )
    }

    fn objective(&self, u: &[f64]) -> f64 {
        match self.simulate(u) {
            Some(sim) => self
                .cells
                .iter()
                .zip(sim)
                .map(|(c, s)| ((s - c.target) / c.target).powi(2))
                .sum(),
            None => f64::INFINITY,
        }
    }
}

/// Index of the smallest value; the first wins ties.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn build_problem(
    base: &Scenario,
    targets: &CalibrationTargets,
    bounds: &CalibrationBounds,
) -> Result<Problem, CalibrationError> {
    if targets.rows.is_empty() {
        return Err(CalibrationError::NoTargets);
    }
    if !(bounds.residual_ceiling > 0.0) || bounds.grid_points < 2 || !(bounds.min_step > 0.0) {
        return Err(CalibrationError::InvalidBounds(
            "residual_ceiling and min_step must be > 0, grid_points ≥ 2".into(),
        ));
    }
    for (param, [lo, hi]) in bounds
        .ranges
        .iter()
        .chain(bounds.instance_ranges.values().flatten())
    {
        if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo <= hi) {
            return Err(CalibrationError::InvalidBounds(format!(
                "{param:?}: range [{lo}, {hi}] must satisfy 0 ≤ lo ≤ hi"
            )));
        }
    }

    let mut scenario = base.clone();
    scenario.noise_sigma = 0.0;
    scenario.pattern = targets.pattern;
    scenario.migration_bandwidth_limit_bytes_per_s = None;
    for (name, rate) in &bounds.dirty_rate_bytes_per_s {
        let i = scenario
            .sfc
            .index_of(name)
            .ok_or_else(|| CalibrationError::UnknownInstance(name.clone()))?;
        scenario.sfc.instances[i].dirty_rate_bytes_per_s = *rate;
    }
    for name in bounds.instance_ranges.keys() {
        if scenario.sfc.index_of(name).is_none() {
            return Err(CalibrationError::UnknownInstance(name.clone()));
        }
    }
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        return Err(CalibrationError::InvalidScenario(
            violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
        ));
    }

    let mut bandwidths: Vec<f64> = Vec::new();
    for row in &targets.rows {
        if scenario.sfc.index_of(&row.instance).is_none() {
            return Err(CalibrationError::UnknownInstance(row.instance.clone()));
        }
        if !bandwidths.contains(&row.bandwidth_bytes_per_s) {
            bandwidths.push(row.bandwidth_bytes_per_s);
        }
    }
    bandwidths.sort_by(f64::total_cmp);

    let mut cells = Vec::new();
    let mut missing = Vec::new();
    for (i, inst) in scenario.sfc.instances.iter().enumerate() {
        for (b, &bw) in bandwidths.iter().enumerate() {
            for metric in TargetMetric::ALL {
                let value = targets
                    .rows
                    .iter()
                    .find(|r| r.instance == inst.name && r.bandwidth_bytes_per_s == bw)
                    .and_then(|r| r.value(metric));
                match value {
                    Some(v) if v > 0.0 => cells.push(Cell {
                        instance: i,
                        bandwidth: b,
                        metric,
                        target: v,
                    }),
                    _ => missing.push(format!("({}, {bw}, {metric})", inst.name)),
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(CalibrationError::MissingCells(missing));
    }

    let mut free = Vec::new();
    for i in 0..scenario.sfc.len() {
        let overrides = bounds.instance_ranges.get(&scenario.sfc.instances[i].name);
        for param in CalibParam::ALL {
            let range = overrides
                .and_then(|o| o.get(&param))
                .or_else(|| bounds.ranges.get(&param));
            if let Some(&[lo, hi]) = range {
                if hi > lo {
                    free.push(Free {
                        instance: i,
                        param,
                        lo,
                        hi,
                    });
                } else {
                    param.set(&mut scenario.sfc.instances[i], lo);
                }
            }
        }
    }

    Ok(Problem {
        base: scenario,
        bandwidths,
        cells,
        free,
    })
}

/// Fits the free instance parameters of `base` to `targets`.
///
/// The returned scenario keeps every other field of `base` (including its
/// noise level); residuals are reported for every target cell.
pub fn calibrate(
    base: &Scenario,
    targets: &CalibrationTargets,
    bounds: &CalibrationBounds,
) -> Result<CalibrationResult, CalibrationError> {
    let problem = build_problem(base, targets, bounds)?;
    let dim = problem.free.len();
    let mut u = vec![0.5; dim];
    let mut best = problem.objective(&u);
    let mut evaluations = 1;

    let g = bounds.grid_points;
    let grid: Vec<f64> = (0..g).map(|k| k as f64 / (g - 1) as f64).collect();
    for _ in 0..bounds.grid_passes {
        for j in 0..dim {
            let values = par::map_range(g, |k| {
                let mut cand = u.clone();
                cand[j] = grid[k];
                problem.objective(&cand)
            });
            evaluations += g;
            let k = argmin(&values);
            if values[k] < best {
                best = values[k];
                u[j] = grid[k];
            }
        }
    }

    let mut step = 0.5 / (g - 1) as f64;
    while step >= bounds.min_step && evaluations < bounds.max_evaluations && dim > 0 {
        let probes: Vec<(usize, f64)> = (0..dim)
            .flat_map(|j| [(j, step), (j, -step)])
            .collect();
        let values = par::map_range(probes.len(), |p| {
            let (j, d) = probes[p];
            let mut cand = u.clone();
            cand[j] = (cand[j] + d).clamp(0.0, 1.0);
            problem.objective(&cand)
        });
        evaluations += probes.len();
        let k = argmin(&values);
        if values[k] < best {
            best = values[k];
            let (j, d) = probes[k];
            u[j] = (u[j] + d).clamp(0.0, 1.0);
        } else {
            step *= 0.5;
        }
    }

    let simulated = problem
        .simulate(&u)
        .ok_or_else(|| CalibrationError::InvalidScenario("fitted parameters fail to simulate".into()))?;
    let residuals = problem
        .cells
        .iter()
        .zip(&simulated)
        .map(|(c, &s)| Residual {
            instance: problem.base.sfc.instances[c.instance].name.clone(),
            bandwidth_bytes_per_s: problem.bandwidths[c.bandwidth],
            metric: c.metric,
            target: c.target,
            simulated: s,
            relative_error: (s - c.target) / c.target,
        })
        .collect();

    let mut scenario = base.clone();
    scenario.sfc.instances = problem.specs(&u);

    Ok(CalibrationResult {
        scenario,
        residuals,
        objective: best,
        evaluations,
        residual_ceiling: bounds.residual_ceiling,
    })
}
