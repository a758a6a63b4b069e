//! Front end for `qpz-core`: problem definitions, the `trace`, `verify` and
//! `report` runs, and their output files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod output;
pub mod spec;

use std::path::Path;

use qpz_core::{
    count_zeros, stability_report, trace_all, ContourRectangle, StabilityReport, TraceResult,
};

pub use error::CliError;
pub use output::{
    read_json, read_trajectories_csv, trajectory_rows, EventsFile, ReportFile, TrajectoryRow,
    VerifyEntry, VerifyFile, EVENTS_FILE, FORMAT_VERSION, REPORT_FILE, TRAJECTORIES_FILE,
    VERIFY_FILE,
};
pub use spec::{PartialSpec, ProblemSpec};

/// A finished trace and its stability report.
#[derive(Debug, Clone)]
pub struct TraceRun {
    pub result: TraceResult,
    pub report: StabilityReport,
}

impl TraceRun {
    pub fn defects(&self) -> usize {
        self.result.defects().count()
    }
}

pub fn trace(spec: &ProblemSpec) -> Result<TraceRun, CliError> {
    let q = spec.quasi_polynomial()?;
    let region = spec.region(&q)?;
    let cfg = spec.trace_config()?;
    let result = trace_all(&q, &region, spec.h_final, &cfg)?;
    for t in result.defects() {
        if let qpz_core::TrajectoryStatus::Defect { h, reason } = &t.status {
            log::warn!("trajectory {} stopped at h = {h}: {reason}", t.id);
        }
    }
    let report = stability_report(&result);
    Ok(TraceRun { result, report })
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Traces and writes `trajectories.csv`, `events.json` and `report.json`
/// into the output directory.
pub fn run_trace(spec: &ProblemSpec) -> Result<TraceRun, CliError> {
    let run = trace(spec)?;
    let dir = &spec.output_dir;
    prepare_dir(dir)?;
    output::write_trajectories_csv(&dir.join(TRAJECTORIES_FILE), &trajectory_rows(&run.result))?;
    output::write_json(&dir.join(EVENTS_FILE), &EventsFile::new(&run.result))?;
    output::write_json(&dir.join(REPORT_FILE), &ReportFile::new(&run.result, &run.report))?;
    Ok(run)
}

/// Traces and writes `report.json` only.
pub fn run_report(spec: &ProblemSpec) -> Result<TraceRun, CliError> {
    let run = trace(spec)?;
    prepare_dir(&spec.output_dir)?;
    output::write_json(&spec.output_dir.join(REPORT_FILE), &ReportFile::new(&run.result, &run.report))?;
    Ok(run)
}

/// Compares traced zero counts with argument-principle counts at `delays`
/// (default: the delay set and `h_final`) and writes `verify.json`.
pub fn run_verify(spec: &ProblemSpec, delays: Option<&[f64]>) -> Result<VerifyFile, CliError> {
    if let Some(ds) = delays {
        if let Some(&h) = ds.iter().find(|&&h| !(0.0..=spec.h_final).contains(&h)) {
            return Err(CliError::Invalid(format!(
                "delay {h} is outside [0, h_final = {}]",
                spec.h_final
            )));
        }
    }
    let run = trace(spec)?;
    let result = &run.result;
    let delays: Vec<f64> = match delays {
        Some(ds) => ds.to_vec(),
        None => {
            let mut ds = result.delay_set.clone();
            if ds.last() != Some(&spec.h_final) {
                ds.push(spec.h_final);
            }
            ds
        }
    };
    let q = &result.quasi_polynomial;
    let rect = ContourRectangle::for_region(q, &result.region, spec.h_final)?;
    let entries: Vec<VerifyEntry> = delays
        .iter()
        .map(|&h| {
            let traced = result.active_count_at(h);
            match count_zeros(q, h, &rect) {
                Ok(n) => VerifyEntry { h, traced, oracle: Some(n), matches: n == traced, error: None },
                Err(e) => VerifyEntry { h, traced, oracle: None, matches: false, error: Some(e.to_string()) },
            }
        })
        .collect();
    let file = VerifyFile {
        format_version: FORMAT_VERSION,
        rectangle: [rect.re_min, rect.re_max, rect.im_min, rect.im_max],
        all_match: entries.iter().all(|e| e.matches),
        delays: entries,
    };
    prepare_dir(&spec.output_dir)?;
    output::write_json(&spec.output_dir.join(VERIFY_FILE), &file)?;
    Ok(file)
}
