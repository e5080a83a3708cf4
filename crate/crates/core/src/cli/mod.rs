//! Run driver, artifacts and the `mlsgfem` command line.
//!
//! A run writes four files into its output directory:
//! - `run.json`: the resolved configuration.
//! - `steps.csv`: one row per adaptive step, appended as the run proceeds.
//! - `modes.csv`: the final index set with mesh levels and element widths.
//! - `summary.json`: final estimate, energy, sizes, level histogram and matrix counts.

mod config;
mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_dense_index, Overrides, RunConfig};
pub use report::{
    fit_slope, fit_slope_points, fmt_float, read_steps, write_modes, LevelCount, StepsWriter, Summary, STEPS_HEADER,
};

use crate::adapt::{adaptive_solve_with, AdaptiveRun, Termination};
use crate::coeffs::ProblemId;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CAP: i32 = 2;

pub struct RunOutcome {
    pub run: AdaptiveRun,
    pub summary: Summary,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.run.converged() {
            EXIT_OK
        } else {
            EXIT_CAP
        }
    }
}

/// Runs the adaptive loop and writes all artifacts.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let problem = config.build_problem()?;
    let adaptive = config.adaptive()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut resolved = serde_json::to_string_pretty(config)?;
    resolved.push('\n');
    std::fs::write(dir.join("run.json"), resolved)?;

    let mut steps = StepsWriter::create(&dir.join("steps.csv"), config.reference_energy)?;
    let mut write_error = None;
    let run = adaptive_solve_with(&adaptive, &problem, |r| {
        if write_error.is_none() {
            write_error = steps.write(r).err();
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let side = problem.domain.side;
    write_modes(&dir.join("modes.csv"), run.last(), side)?;
    let summary =
        Summary::new(&config.problem_name(), config.version, config.tolerance, &run, side, config.reference_energy);
    summary.write(&dir.join("summary.json"))?;
    Ok(RunOutcome { run, summary })
}

/// `sqrt(u . b)` of a run at `tight_tolerance`; fails if a cap stops it first.
pub fn reference_run(config: &RunConfig, tight_tolerance: f64) -> Result<f64> {
    let mut c = config.clone();
    c.tolerance = tight_tolerance;
    c.validate()?;
    let run = adaptive_solve_with(&c.adaptive()?, &c.build_problem()?, |_| {})?;
    match run.termination {
        Termination::Converged => Ok(run.last().energy_sq.sqrt()),
        other => Err(Error::CapExhausted(format!("{other:?}"))),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mlsgfem", version, about = "Adaptive multilevel stochastic Galerkin FEM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the adaptive solver and write steps.csv, modes.csv, summary.json and run.json.
    Run(RunArgs),
    /// Fit the log-log slope of eta against N_dof over the tail of a steps.csv.
    FitSlope {
        steps: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        tail: f64,
    },
    /// Print the energy of a tight-tolerance run.
    Reference(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub version: Option<u32>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub delta_m: Option<u32>,
    #[arg(long)]
    pub max_dof: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub reference_energy: Option<f64>,
    /// Record zero timings so reruns produce identical files.
    #[arg(long)]
    pub no_timings: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let problem = self.problem.as_deref().map(str::parse::<ProblemId>).transpose()?;
        c.apply(&Overrides {
            problem,
            version: self.version,
            tolerance: self.tol,
            delta_m: self.delta_m,
            max_dof: self.max_dof,
            max_steps: self.max_steps,
            output_dir: self.out.clone(),
            reference_energy: self.reference_energy,
            no_timings: self.no_timings,
        });
        c.validate()?;
        Ok(c)
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::CapExhausted(_) | Error::LevelCap { .. } => EXIT_CAP,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Run(a) => a.resolve().and_then(|c| run(&c)).map(|o| {
            let s = &o.summary;
            println!(
                "{}: {:?} after {} steps, eta {}, energy {}, N_dof {}, card(J_P) {}, M {}",
                s.problem,
                s.termination,
                s.steps,
                fmt_float(s.final_eta),
                fmt_float(s.energy),
                s.n_dof,
                s.card_jp,
                s.active_params
            );
            o.exit_code()
        }),
        Command::FitSlope { steps, tail } => fit_slope(&steps, tail).map(|s| {
            println!("{}", fmt_float(s));
            EXIT_OK
        }),
        Command::Reference(a) => a.resolve().and_then(|c| reference_run(&c, c.tolerance)).map(|e| {
            println!("{}", fmt_float(e));
            EXIT_OK
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    })
}
