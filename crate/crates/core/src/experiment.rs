//! Repetitions of one scenario and sweeps over bandwidths and patterns.

use crate::engine::{simulate, EngineError, EventLog};
use crate::metrics::{extract, summarize, ExtractError, RunMetrics, SummaryStats};
use crate::model::{validate_scenario, PatternKind, Scenario, Violation};
use crate::par;
use crate::patterns::{build_plan_for, PlanError, TaskGraph};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("repetition {rep}: {source}")]
    Engine { rep: u32, source: EngineError },
    #[error("repetition {rep}: {source}")]
    Extract { rep: u32, source: ExtractError },
}

#[derive(Debug, thiserror::Error)]
#[error("cell ({pattern}, {bandwidth_bytes_per_s} B/s): {source}")]
pub struct SweepError {
    pub pattern: PatternKind,
    pub bandwidth_bytes_per_s: f64,
    #[source]
    pub source: ExperimentError,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rep: u32,
    pub log: EventLog,
    pub metrics: RunMetrics,
}

/// All repetitions of one (pattern, bandwidth) combination.
#[derive(Debug, Clone)]
pub struct Cell {
    pub pattern: PatternKind,
    /// Effective migration bandwidth; equals the link capacity when unlimited.
    pub bandwidth_bytes_per_s: f64,
    pub runs: Vec<RunOutput>,
}

/// Where a metric was measured: one instance or the whole chain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Instance(String),
    Sfc,
}

impl Scope {
    pub fn label(&self) -> &str {
        match self {
            Scope::Instance(name) => name,
            Scope::Sfc => "sfc",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricValue {
    pub scope: Scope,
    pub metric: &'static str,
    pub value: f64,
}

/// Flattens a run into (scope, metric, value) triples in a fixed order.
pub fn metric_values(m: &RunMetrics) -> Vec<MetricValue> {
    let mut out = Vec::new();
    for inst in &m.instances {
        for (metric, value) in [("downtime_s", inst.downtime_s), ("total_time_s", inst.total_time_s)] {
            out.push(MetricValue {
                scope: Scope::Instance(inst.name.clone()),
                metric,
                value,
            });
        }
    }
    for (metric, value) in [
        ("service_downtime_s", m.service_downtime_s),
        ("sfc_total_time_s", m.sfc_total_time_s),
        ("peak_cpu_source_pct", m.peak_cpu_source_pct),
        ("peak_cpu_destination_pct", m.peak_cpu_destination_pct),
        ("cpu_integral_source", m.cpu_integral_source),
        ("cpu_integral_destination", m.cpu_integral_destination),
    ] {
        out.push(MetricValue {
            scope: Scope::Sfc,
            metric,
            value,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scope: Scope,
    pub metric: &'static str,
    pub stats: SummaryStats,
}

impl Cell {
    pub fn metrics(&self) -> impl Iterator<Item = &RunMetrics> {
        self.runs.iter().map(|r| &r.metrics)
    }

    /// Per-metric statistics across repetitions; empty with fewer than two runs.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let per_run: Vec<Vec<MetricValue>> = self.metrics().map(metric_values).collect();
        let Some(first) = per_run.first() else {
            return Vec::new();
        };
        first
            .iter()
            .enumerate()
            .filter_map(|(k, mv)| {
                let samples: Vec<f64> = per_run.iter().map(|r| r[k].value).collect();
                summarize(&samples).ok().map(|stats| SummaryRow {
                    scope: mv.scope.clone(),
                    metric: mv.metric,
                    stats,
                })
            })
            .collect()
    }

    pub fn mean(&self, f: impl Fn(&RunMetrics) -> f64) -> f64 {
        let n = self.runs.len() as f64;
        self.metrics().map(f).sum::<f64>() / n
    }
}

fn prepare(scenario: &Scenario) -> Result<TaskGraph, ExperimentError> {
    let violations = validate_scenario(scenario);
    if !violations.is_empty() {
        return Err(ExperimentError::Invalid(violations));
    }
    Ok(build_plan_for(scenario)?)
}

fn one(scenario: &Scenario, plan: &TaskGraph, rep: u32) -> Result<RunOutput, ExperimentError> {
    let log = simulate(scenario, plan, rep).map_err(|source| ExperimentError::Engine { rep, source })?;
    let metrics = extract(&log).map_err(|source| ExperimentError::Extract { rep, source })?;
    Ok(RunOutput { rep, log, metrics })
}

fn collect(scenario: &Scenario, results: Vec<Result<RunOutput, ExperimentError>>) -> Result<Cell, ExperimentError> {
    Ok(Cell {
        pattern: scenario.pattern,
        bandwidth_bytes_per_s: scenario.effective_bandwidth(),
        runs: results.into_iter().collect::<Result<_, _>>()?,
    })
}

/// Runs `scenario.repetitions` independent repetitions, in parallel when the
/// `parallel` feature is on. Results are identical to the sequential variant.
pub fn run_repetitions(scenario: &Scenario) -> Result<Cell, ExperimentError> {
    let plan = prepare(scenario)?;
    let results = par::map_range(scenario.repetitions as usize, |k| one(scenario, &plan, k as u32));
    collect(scenario, results)
}

pub fn run_repetitions_sequential(scenario: &Scenario) -> Result<Cell, ExperimentError> {
    let plan = prepare(scenario)?;
    let results = par::map_range_sequential(scenario.repetitions as usize, |k| one(scenario, &plan, k as u32));
    collect(scenario, results)
}

/// Runs every (pattern, bandwidth) combination, patterns outermost.
/// A bandwidth at or above the link capacity means unlimited.
pub fn sweep(scenario: &Scenario, bandwidths: &[f64], patterns: &[PatternKind]) -> Result<Vec<Cell>, SweepError> {
    let mut cells = Vec::with_capacity(bandwidths.len() * patterns.len());
    for &pattern in patterns {
        for &bw in bandwidths {
            let mut s = scenario.with_bandwidth(Some(bw));
            s.pattern = pattern;
            let cell = run_repetitions(&s).map_err(|source| SweepError {
                pattern,
                bandwidth_bytes_per_s: bw,
                source,
            })?;
            cells.push(cell);
        }
    }
    Ok(cells)
}
