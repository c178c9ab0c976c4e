//! Measurements extracted from event logs and repetition statistics.

mod calibrate;

pub use calibrate::{
    calibrate, CalibParam, CalibrationBounds, CalibrationError, CalibrationResult,
    CalibrationTargets, Residual, TargetMetric, TargetRow,
};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::{step_integral, EventKind, EventLog};
use crate::model::PhaseKind;

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMetrics {
    pub name: String,
    /// Freeze to restore completion.
    pub downtime_s: f64,
    /// First task start to restore completion.
    pub total_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// In chain order.
    pub instances: Vec<InstanceMetrics>,
    /// Earliest freeze to reconnect completion.
    pub service_downtime_s: f64,
    /// Earliest task start to reconnect completion.
    pub sfc_total_time_s: f64,
    pub peak_cpu_source_pct: f64,
    pub peak_cpu_destination_pct: f64,
    /// pct·s
    pub cpu_integral_source: f64,
    pub cpu_integral_destination: f64,
}

impl RunMetrics {
    pub fn instance(&self, name: &str) -> Option<&InstanceMetrics> {
        self.instances.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("log is missing {kind} for instance `{instance}`")]
    MissingInstanceEvent { kind: &'static str, instance: String },
    #[error("log is missing {0}")]
    MissingEvent(&'static str),
}

fn first_time<'a>(events: impl Iterator<Item = &'a crate::engine::Event>) -> Option<f64> {
    events.map(|e| e.time_s).reduce(f64::min)
}

/// Derives per-instance and chain-level metrics from a complete log.
pub fn extract(log: &EventLog) -> Result<RunMetrics, ExtractError> {
    let missing = |kind: EventKind, i: usize| ExtractError::MissingInstanceEvent {
        kind: kind.as_str(),
        instance: log.instances[i].clone(),
    };
    let of = |kind: EventKind, i: usize| {
        log.events
            .iter()
            .filter(move |e| e.kind == kind && e.instance == Some(i))
    };

    let mut instances = Vec::with_capacity(log.instances.len());
    for (i, name) in log.instances.iter().enumerate() {
        let start = first_time(of(EventKind::TaskStart, i)).ok_or_else(|| missing(EventKind::TaskStart, i))?;
        let freeze = first_time(
            of(EventKind::FreezeStart, i).filter(|e| e.phase.is_none() || e.phase == Some(PhaseKind::Dump)),
        )
        .ok_or_else(|| missing(EventKind::FreezeStart, i))?;
        let restored = of(EventKind::RestoreComplete, i)
            .map(|e| e.time_s)
            .reduce(f64::max)
            .ok_or_else(|| missing(EventKind::RestoreComplete, i))?;
        instances.push(InstanceMetrics {
            name: name.clone(),
            downtime_s: restored - freeze,
            total_time_s: restored - start,
        });
    }

    let reconnect = log
        .events_of(EventKind::ReconnectComplete)
        .map(|e| e.time_s)
        .reduce(f64::max)
        .ok_or(ExtractError::MissingEvent("reconnect_complete"))?;
    let first_freeze =
        first_time(log.events_of(EventKind::FreezeStart)).ok_or(ExtractError::MissingEvent("freeze_start"))?;
    let first_start =
        first_time(log.events_of(EventKind::TaskStart)).ok_or(ExtractError::MissingEvent("task_start"))?;

    let peak = |s: &[(f64, f64)]| s.iter().map(|p| p.1).fold(0.0, f64::max);
    let src = crate::engine::cpu_series(log, crate::model::NodeRole::Source);
    let dst = crate::engine::cpu_series(log, crate::model::NodeRole::Destination);

    Ok(RunMetrics {
        instances,
        service_downtime_s: reconnect - first_freeze,
        sfc_total_time_s: reconnect - first_start,
        peak_cpu_source_pct: peak(&src),
        peak_cpu_destination_pct: peak(&dst),
        cpu_integral_source: step_integral(&src),
        cpu_integral_destination: step_integral(&dst),
    })
}

/// Mean, sample standard deviation, Student-t 95% half-width and
/// coefficient of variation of a set of repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("need at least 2 samples for a spread estimate, got {0}")]
pub struct InsufficientSamples(pub usize);

/// Two-sided 97.5% quantile of Student's t with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}

impl SummaryStats {
    /// Statistics from already-reduced moments (mean, sample std, n).
    pub fn from_moments(mean: f64, std: f64, n: usize) -> Result<Self, InsufficientSamples> {
        if n < 2 {
            return Err(InsufficientSamples(n));
        }
        let ci95 = t_quantile_975(n - 1) * std / (n as f64).sqrt();
        let cv = if std == 0.0 {
            0.0
        } else if mean == 0.0 {
            f64::INFINITY
        } else {
            std / mean.abs()
        };
        Ok(Self {
            n,
            mean,
            std,
            ci95,
            cv,
        })
    }
}

pub fn summarize(samples: &[f64]) -> Result<SummaryStats, InsufficientSamples> {
    let n = samples.len();
    if n < 2 {
        return Err(InsufficientSamples(n));
    }
    // sort first so the result does not depend on input order
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    SummaryStats::from_moments(mean, var.sqrt(), n)
}
