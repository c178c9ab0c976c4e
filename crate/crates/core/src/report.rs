//! CSV writers. Floats use the shortest round-trip representation, so
//! output is byte-identical across runs.

use std::io::Write;

use crate::experiment::{metric_values, Cell, Scope};
use crate::metrics::Residual;

pub type CsvResult = Result<(), csv::Error>;

/// Which summary rows to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryScope {
    Instances,
    Chain,
}

/// `pattern,bandwidth_bytes_per_s,instance,metric,mean,std,ci95,cv,n`
///
/// Chain rows carry `sfc` in the instance column.
pub fn write_summary<W: Write>(w: W, cells: &[Cell], scope: SummaryScope) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["pattern", "bandwidth_bytes_per_s", "instance", "metric", "mean", "std", "ci95", "cv", "n"])?;
    for cell in cells {
        for row in cell.summary() {
            if (row.scope == Scope::Sfc) != (scope == SummaryScope::Chain) {
                continue;
            }
            let s = row.stats;
            out.write_record([
                cell.pattern.to_string(),
                cell.bandwidth_bytes_per_s.to_string(),
                row.scope.label().to_string(),
                row.metric.to_string(),
                s.mean.to_string(),
                s.std.to_string(),
                s.ci95.to_string(),
                s.cv.to_string(),
                s.n.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per (run, scope, metric):
/// `pattern,bandwidth_bytes_per_s,rep,scope,metric,value`
pub fn write_runs<W: Write>(w: W, cells: &[Cell]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["pattern", "bandwidth_bytes_per_s", "rep", "scope", "metric", "value"])?;
    for cell in cells {
        for run in &cell.runs {
            for mv in metric_values(&run.metrics) {
                out.write_record([
                    cell.pattern.to_string(),
                    cell.bandwidth_bytes_per_s.to_string(),
                    run.rep.to_string(),
                    mv.scope.label().to_string(),
                    mv.metric.to_string(),
                    mv.value.to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Step function of node load: `time_s,load_pct`
pub fn write_cpu<W: Write>(w: W, series: &[(f64, f64)]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_s", "load_pct"])?;
    for (t, load) in series {
        out.write_record([t.to_string(), load.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// `instance,bandwidth,metric,target,simulated,relative_error`
pub fn write_calibration<W: Write>(w: W, residuals: &[Residual]) -> CsvResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["instance", "bandwidth", "metric", "target", "simulated", "relative_error"])?;
    for r in residuals {
        out.write_record([
            r.instance.clone(),
            r.bandwidth_bytes_per_s.to_string(),
            r.metric.to_string(),
            r.target.to_string(),
            r.simulated.to_string(),
            r.relative_error.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
