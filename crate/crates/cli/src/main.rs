//! `motionq` command-line driver.

mod commands;
mod config;
mod output;
mod svg;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "motionq", version, about = "Two-atom motional qubit-oscillator simulator and gate compiler")]
struct Cli {
    /// JSON run configuration (defaults to the built-in parameters).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "motionq-out")]
    out: PathBuf,
    /// Treat basis-cutoff warnings as errors.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads for grid evaluation.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Repeat each propagation at half the step and report the difference.
    #[arg(long = "dt-check", global = true)]
    dt_check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relative-mode spectrum, ω̃ and anharmonicity over a u′ range.
    Spectrum,
    /// Single gate run with JSON report.
    Gate,
    /// Fidelity versus magnitude with per-point λ optimization.
    Sweep,
    /// Reference infidelity table: D, S, CD, CS.
    Reproduce,
    /// Characteristic-function tomography and COM Wigner function.
    Tomography,
}

/// Exit codes by failure family.
pub mod exit {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const BASIS: u8 = 4;
    pub const INTEGRATION: u8 = 5;
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Sim(motionq::Error),
    Io(String),
}

impl From<motionq::Error> for Failure {
    fn from(e: motionq::Error) -> Self {
        Failure::Sim(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        use motionq::Error as E;
        match self {
            Failure::Config(_) => exit::CONFIG,
            Failure::Io(_) => exit::OTHER,
            Failure::Sim(e) => match e {
                E::InvalidInput(_) | E::Resonance { .. } => exit::CONFIG,
                E::InfeasibleDepth { .. } => exit::INFEASIBLE,
                E::BasisInadequate(_) | E::CutoffPopulation { .. } => exit::BASIS,
                E::NormDrift { .. } => exit::INTEGRATION,
                _ => exit::OTHER,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) | Failure::Io(m) => m.clone(),
            Failure::Sim(e) => e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    cfg.numerics.strict |= cli.strict;
    cfg.numerics.dt_check |= cli.dt_check;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let mut out = output::Emitter::new(&cli.out, cfg.hash()).map_err(Failure::Io)?;
    match cli.command {
        Command::Spectrum => commands::spectrum(&cfg, &mut out)?,
        Command::Gate => commands::gate(&cfg, &mut out)?,
        Command::Sweep => commands::sweep(&cfg, &mut out)?,
        Command::Reproduce => commands::reproduce(&cfg, &mut out)?,
        Command::Tomography => commands::tomography(&cfg, &mut out)?,
    }
    for p in out.written() {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
