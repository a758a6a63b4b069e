//! File formats. Floats are written in shortest round-trip form, so reading
//! a file back yields bit-identical values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use qpz_core::{
    CrossingEvent, StabilityReport, TraceConfig, TraceResult, TrajectoryOrigin, TrajectoryStatus,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const EVENTS_FILE: &str = "events.json";
pub const REPORT_FILE: &str = "report.json";
pub const VERIFY_FILE: &str = "verify.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub traj_id: usize,
    pub h: f64,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
}

/// One row per sample, ordered by trajectory id then delay.
pub fn trajectory_rows(result: &TraceResult) -> Vec<TrajectoryRow> {
    result
        .trajectories
        .iter()
        .flat_map(|t| {
            t.samples.iter().map(move |smp| TrajectoryRow {
                traj_id: t.id,
                h: smp.h,
                re: smp.s.re,
                im: smp.s.im,
                residual: smp.residual,
            })
        })
        .collect()
}

pub fn write_trajectories_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_trajectories_csv(path: &Path) -> Result<Vec<TrajectoryRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| CliError::csv(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsFile {
    pub format_version: u32,
    pub sigma0: f64,
    pub omega_max: f64,
    pub h_final: f64,
    pub events: Vec<CrossingEvent>,
}

impl EventsFile {
    pub fn new(result: &TraceResult) -> Self {
        EventsFile {
            format_version: FORMAT_VERSION,
            sigma0: result.region.sigma0,
            omega_max: result.region.omega_max,
            h_final: result.h_final,
            events: result.events.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub re: f64,
    pub im: f64,
}

/// The inputs of a run as actually used, including defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub a_coeffs: Vec<f64>,
    pub b_coeffs: Vec<f64>,
    pub sigma0: f64,
    pub h_final: f64,
    pub omega_max: f64,
    pub trace: TraceConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub id: usize,
    pub origin: TrajectoryOrigin,
    pub status: TrajectoryStatus,
    pub h_start: f64,
    pub h_end: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub config: ConfigEcho,
    pub zeros_final: Vec<Zero>,
    pub delay_set: Vec<f64>,
    pub max_residual: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub detours: usize,
    pub defects: usize,
    pub trajectories: Vec<TrajectorySummary>,
    pub stability_report: StabilityReport,
    pub warnings: Vec<String>,
}

impl ReportFile {
    pub fn new(result: &TraceResult, report: &StabilityReport) -> Self {
        let q = &result.quasi_polynomial;
        ReportFile {
            format_version: FORMAT_VERSION,
            config: ConfigEcho {
                a_coeffs: q.a().coeffs().to_vec(),
                b_coeffs: q.b().coeffs().to_vec(),
                sigma0: result.region.sigma0,
                h_final: result.h_final,
                omega_max: result.region.omega_max,
                trace: result.config,
            },
            zeros_final: result.zeros_final.iter().map(|z| Zero { re: z.re, im: z.im }).collect(),
            delay_set: result.delay_set.clone(),
            max_residual: result.max_residual,
            accepted_steps: result.steps.accepted,
            rejected_steps: result.steps.rejected,
            detours: result.steps.detours,
            defects: result.defects().count(),
            trajectories: result
                .trajectories
                .iter()
                .map(|t| TrajectorySummary {
                    id: t.id,
                    origin: t.origin,
                    status: t.status.clone(),
                    h_start: t.first().h,
                    h_end: t.last().h,
                    samples: t.samples.len(),
                })
                .collect(),
            stability_report: report.clone(),
            warnings: result.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyEntry {
    pub h: f64,
    pub traced: usize,
    /// `None` when the oracle could not produce a count.
    pub oracle: Option<usize>,
    pub matches: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyFile {
    pub format_version: u32,
    pub rectangle: [f64; 4],
    pub all_match: bool,
    pub delays: Vec<VerifyEntry>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::json(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}
