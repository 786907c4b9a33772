use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use qbdstab::halfplane::{
    catastrophe_verdict, halfplane_verdict, stability_region_sweep, write_sweep_csv,
    CatastropheKernel, HalfPlaneError,
};
use qbdstab::markov::{jump_chain, jump_stationary, RateKernel};
use qbdstab::qbd::{assemble_kernel, phase_kernel};
use qbdstab::simulate::{simulate, write_trajectory_csv, SimError};
use qbdstab::stability::{
    drift_check_continuous, drift_check_discrete, phase_stationary, qbd_verdict, StabilityError,
};

mod config;

use config::{AnalysisConfig, DriftModeConfig, ModelConfig};

/// Exit code for configuration and runtime errors.
const EXIT_ERROR: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] io::Error),
    #[error("config: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("`{command}` does not accept a {model} model")]
    WrongModel {
        command: &'static str,
        model: &'static str,
    },
    #[error("config: missing section `{0}`")]
    MissingSection(&'static str),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    HalfPlane(#[from] HalfPlaneError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("output: {0}")]
    Output(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "qbdstab",
    version,
    about = "Stability checks for QBD-type Markov processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON analysis configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Drift criterion for a quarter-plane QBD.
    QbdAnalyze(Common),
    /// Half-plane verdict for the catastrophe model or a custom half-plane process.
    CatAnalyze(Common),
    /// Stability-region sweep of the catastrophe model, as CSV.
    CatRegion {
        #[command(flatten)]
        common: Common,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// CSV destination (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo path with recurrence diagnostics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides `simulation.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes the sampled trajectory as `t,x,y` CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lyapunov drift conditions on the check window.
    DriftCheck(Common),
}

fn emit<T: Serialize + std::fmt::Display>(record: &T, format: Format) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match format {
        Format::Text => write!(out, "{record}")?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, record).map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(p.display().to_string(), e))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn qbd_analyze(c: &Common) -> Result<u8, CliError> {
    let cfg = AnalysisConfig::load(&c.config)?;
    let ModelConfig::Qbd(model) = &cfg.model else {
        return Err(CliError::WrongModel {
            command: "qbd-analyze",
            model: cfg.model.name(),
        });
    };
    let v = qbd_verdict(&model.build()?, &cfg.solver)?;
    emit(&v, c.format)?;
    Ok(v.exit_code() as u8)
}

fn cat_analyze(c: &Common) -> Result<u8, CliError> {
    let cfg = AnalysisConfig::load(&c.config)?;
    let v = match &cfg.model {
        ModelConfig::Catastrophe(m) => catastrophe_verdict(m, &cfg.solver)?,
        ModelConfig::HalfplaneCustom(m) => {
            let (spec, ds) = m.build()?;
            halfplane_verdict(&spec, &ds, &cfg.solver)?
        }
        ModelConfig::Qbd(_) => {
            return Err(CliError::WrongModel {
                command: "cat-analyze",
                model: "qbd",
            })
        }
    };
    emit(&v, c.format)?;
    Ok(v.exit_code() as u8)
}

fn cat_region(c: &Common, threads: Option<usize>, out: Option<&Path>) -> Result<u8, CliError> {
    let cfg = AnalysisConfig::load(&c.config)?;
    let ModelConfig::Catastrophe(base) = &cfg.model else {
        return Err(CliError::WrongModel {
            command: "cat-region",
            model: cfg.model.name(),
        });
    };
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or(CliError::MissingSection("sweep"))?;
    let records = stability_region_sweep(&sweep.grid(*base), &cfg.solver, threads)?;
    match c.format {
        Format::Json if out.is_none() => {
            serde_json::to_writer_pretty(io::stdout().lock(), &records).map_err(io::Error::from)?;
            println!();
        }
        _ => write_sweep_csv(&records, writer(out)?)?,
    }
    Ok(0)
}

fn kernel_of(model: &ModelConfig) -> Result<Box<dyn RateKernel>, CliError> {
    Ok(match model {
        ModelConfig::Qbd(m) => {
            Box::new(assemble_kernel(&m.build()?).map_err(StabilityError::from)?)
        }
        ModelConfig::Catastrophe(m) => Box::new(CatastropheKernel::new(*m)?),
        ModelConfig::HalfplaneCustom(m) => Box::new(m.build()?.0.kernel),
    })
}

fn run_simulation(c: &Common, seed: Option<u64>, out: Option<&Path>) -> Result<u8, CliError> {
    let cfg = AnalysisConfig::load(&c.config)?;
    let mut sim = cfg
        .simulation
        .clone()
        .ok_or(CliError::MissingSection("simulation"))?;
    if let Some(s) = seed {
        sim.seed = s;
    }
    let kernel = kernel_of(&cfg.model)?;
    let report = simulate(kernel.as_ref(), &sim)?;
    if let Some(p) = out {
        write_trajectory_csv(&report.path, writer(Some(p))?)?;
    }
    emit(&report, c.format)?;
    Ok(0)
}

fn drift_check(c: &Common) -> Result<u8, CliError> {
    let cfg = AnalysisConfig::load(&c.config)?;
    let ModelConfig::Qbd(model) = &cfg.model else {
        return Err(CliError::WrongModel {
            command: "drift-check",
            model: cfg.model.name(),
        });
    };
    let dc = cfg
        .drift
        .as_ref()
        .ok_or(CliError::MissingSection("drift"))?;
    let spec = model.build()?;
    let kernel = assemble_kernel(&spec).map_err(StabilityError::from)?;
    let ds = dc.spec()?;
    let window = cfg.solver.window.clip_phases(spec.phases());
    let pi = match phase_stationary(&phase_kernel(&spec), &cfg.solver) {
        Ok(pi) => pi,
        Err(e @ StabilityError::NonCertification { .. }) => {
            eprintln!("phase stationary law not certified: {e}");
            return Ok(2);
        }
        Err(e) => return Err(e.into()),
    };
    let report = match dc.mode {
        DriftModeConfig::Continuous => {
            drift_check_continuous(&kernel, &ds, &pi, &window, &cfg.solver)?
        }
        DriftModeConfig::Discrete => {
            let hy = spec.hy() as i64;
            let v_star: Vec<f64> = (0..pi.len()).map(|i| spec.total_rate(i, hy)).collect();
            let pi_jump = jump_stationary(&pi, &v_star).map_err(StabilityError::from)?;
            drift_check_discrete(&jump_chain(&kernel), &ds, &pi_jump, &window, &cfg.solver)?
        }
    };
    emit(&report, c.format)?;
    Ok(if report.passed() { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::QbdAnalyze(c) => qbd_analyze(c),
        Command::CatAnalyze(c) => cat_analyze(c),
        Command::CatRegion {
            common,
            threads,
            out,
        } => cat_region(common, *threads, out.as_deref()),
        Command::Simulate { common, seed, out } => run_simulation(common, *seed, out.as_deref()),
        Command::DriftCheck(c) => drift_check(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
