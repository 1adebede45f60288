//! Command-line orchestration of the design pipeline: configuration,
//! synthesis, certification, simulation and the reproduction targets.

pub mod commands;
pub mod config;
pub mod record;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use record::ResultRecord;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Model(tcpaqm::Error),
    /// A gain could not be certified, or the oracle rejected a certified one.
    Unverified(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use tcpaqm::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Model(E::NoCertificate { .. } | E::NoStartingPoint | E::IllConditioned(_)) => 4,
            CliError::Model(E::OracleInconclusive(_)) => 5,
            CliError::Model(_) => 3,
            CliError::Unverified(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Unverified(m) => write!(f, "no certificate: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<tcpaqm::Error> for CliError {
    fn from(e: tcpaqm::Error) -> Self {
        CliError::Model(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Table1,
    Table2,
    Fig1,
    Fig2,
    Fig3,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Operating point and linearized model.
    Equilibrium,
    /// Synthesize and certify a gain.
    Synth,
    /// Certify the gain given in the synthesis block.
    Analyze,
    /// Simulate the nonlinear fluid model.
    Simulate,
    /// Regenerate a published table or figure.
    Reproduce { target: Target },
}

#[derive(Debug, Parser)]
#[command(name = "tcpaqm", version, about = "Robust state-feedback AQM design for the TCP fluid model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults to the 60-flow benchmark.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving output files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<config::Method>,
    /// Delay partition count of the delay-dependent condition.
    #[arg(long, global = true)]
    pub r: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "summary")]
    pub format: Format,
}

/// Text for standard output plus files to place in the output directory.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub files: Vec<(String, String)>,
}

/// Loads the configuration and applies command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = cli.method {
        cfg.synthesis.method = m;
    }
    if let Some(r) = cli.r {
        cfg.synthesis.r = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Executes `cli`, writing files under the output directory.
pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let cfg = effective_config(cli)?;
    let out = match &cli.command {
        Command::Equilibrium => commands::equilibrium(&cfg)?,
        Command::Synth => commands::synth(&cfg)?,
        Command::Analyze => commands::analyze(&cfg)?,
        Command::Simulate => commands::simulate(&cfg, cli.format)?,
        Command::Reproduce { target } => commands::reproduce(&cfg, *target)?,
    };
    let dir = cli.out.clone().or_else(|| cfg.output.dir.clone());
    if let Some(dir) = dir {
        write_files(&dir, &out.files)?;
    }
    Ok(out)
}

fn write_files(dir: &Path, files: &[(String, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}
