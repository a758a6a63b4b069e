use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qpz_cli::spec::{parse_coeffs, parse_delays, PartialSpec};
use qpz_cli::{run_report, run_trace, run_verify, CliError, TraceRun};
use qpz_core::Verdict;

/// Zeros of a(s) + b(s) exp(-h s) in Re(s) > sigma0 as the delay h sweeps
/// from 0 to h_final.
#[derive(Parser)]
#[command(name = "qpz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace every zero; write trajectories.csv, events.json and report.json.
    Trace(ProblemArgs),
    /// Compare traced zero counts with argument-principle counts; write verify.json.
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Comma-separated delays; defaults to the event delays and h_final.
        #[arg(long, allow_hyphen_values = true)]
        delays: Option<String>,
    },
    /// Trace and print the stability summary; write report.json.
    Report(ProblemArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Config file with `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Coefficients of a, ascending, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Coefficients of b, ascending, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    sigma0: Option<f64>,
    #[arg(long)]
    h_final: Option<f64>,
    #[arg(long)]
    eps_tz: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ProblemArgs {
    fn spec(&self) -> Result<qpz_cli::ProblemSpec, CliError> {
        let file = match &self.config {
            Some(path) => PartialSpec::from_config_file(path)?,
            None => PartialSpec::default(),
        };
        let flags = PartialSpec {
            a_coeffs: self.a.as_deref().map(|v| parse_coeffs("--a", v)).transpose()?,
            b_coeffs: self.b.as_deref().map(|v| parse_coeffs("--b", v)).transpose()?,
            sigma0: self.sigma0,
            h_final: self.h_final,
            eps_tz: self.eps_tz,
            omega_max: self.omega_max,
            output_dir: self.out.clone(),
        };
        file.overridden_by(flags).resolve()
    }
}

fn summary(run: &TraceRun) {
    let r = &run.result;
    println!(
        "{} crossing events, {} zeros at h = {}, max residual {:e}",
        r.events.len(),
        r.zeros_final.len(),
        r.h_final,
        r.max_residual
    );
    if run.defects() > 0 {
        println!("{} trajectories stopped at defect points", run.defects());
    }
}

fn report_text(run: &TraceRun) {
    summary(run);
    let rep = &run.report;
    if !rep.conclusive {
        println!("stability inconclusive: sigma0 = {} is not left of the imaginary axis", rep.sigma0);
    }
    if let Some(last) = rep.samples.last() {
        let verdict = match last.verdict {
            Verdict::Stable => "stable",
            Verdict::Marginal => "marginal",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        };
        match last.abscissa {
            Some(a) => println!("at h = {}: abscissa {a}, {verdict}", last.h),
            None => println!("at h = {}: no zeros in the region, {verdict}", last.h),
        }
    }
    match rep.delay_margin {
        Some(m) => println!("delay margin {m}"),
        None => println!("no delay margin up to h = {}", run.result.h_final),
    }
    if let Some(h) = rep.near_marginal_from {
        println!("zeros within {} of the imaginary axis from h = {h}", rep.near_marginal_band);
    }
    for note in &rep.notes {
        println!("note: {note}");
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Trace(args) => {
            let spec = args.spec()?;
            let run = run_trace(&spec)?;
            summary(&run);
            println!("wrote {}", spec.output_dir.display());
            Ok(run.defects() == 0)
        }
        Command::Report(args) => {
            let run = run_report(&args.spec()?)?;
            report_text(&run);
            Ok(run.defects() == 0)
        }
        Command::Verify { problem, delays } => {
            let spec = problem.spec()?;
            let delays = delays.as_deref().map(parse_delays).transpose()?;
            let file = run_verify(&spec, delays.as_deref())?;
            for e in &file.delays {
                let oracle = e.oracle.map_or_else(|| "unavailable".to_string(), |n| n.to_string());
                println!(
                    "h = {}: traced {}, oracle {oracle}{}",
                    e.h,
                    e.traced,
                    if e.matches { "" } else { "  MISMATCH" }
                );
            }
            Ok(file.all_match)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
