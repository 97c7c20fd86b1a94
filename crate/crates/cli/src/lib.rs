//! Command-line driver for the coset library: matrix generation, channel
//! and lossy coding experiments, hash diagnostics, sampler validation and
//! fixed-randomness encoding.
//!
//! Exit codes: 0 when every check held, 1 on a violated check or runtime
//! failure, 2 on a usage or configuration error.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Kind};
use output::Artifacts;

#[derive(Debug, Parser)]
#[command(name = "coset", version, about = "Coset sampling and coding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving result files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads; 0 picks one per core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Exhaustive-computation caps, e.g. `crng=65536,decode=1048576`.
    #[arg(long = "exact-caps", global = true)]
    pub exact_caps: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one sparse matrix and write it in gfmat format.
    GenMatrix,
    /// Channel-coding error-rate sweep.
    Channel,
    /// Lossy-coding distortion sweep.
    Lossy,
    /// Exhaustive hash-property checks on a tiny ensemble.
    VerifyHash,
    /// Exactness checks of the constrained sampler on random instances.
    CrngTest,
    /// Encode with a fixed bit string in place of fresh randomness.
    Derandomize {
        /// Hex bit string, most significant bit first.
        #[arg(long)]
        omega: Option<String>,
    },
}

impl Command {
    fn kind(&self) -> Kind {
        match self {
            Command::GenMatrix => Kind::GenMatrix,
            Command::Channel => Kind::Channel,
            Command::Lossy => Kind::Lossy,
            Command::VerifyHash => Kind::VerifyHash,
            Command::CrngTest => Kind::CrngTest,
            Command::Derandomize { .. } => Kind::Derandomize,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<coset::Error> for CliError {
    fn from(e: coset::Error) -> Self {
        use coset::Error as E;
        match e {
            E::Usage(_) | E::Dimension { .. } | E::Parse { .. } | E::CapExceeded { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Failure(e.to_string()),
        }
    }
}

/// Loads the config, applies flag overrides and fixes the kind.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let kind = cli.command.kind();
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(CliError::Usage(format!(
                "config is for `{}`, not `{}`",
                k.name(),
                kind.name()
            )));
        }
    }
    cfg.kind = Some(kind);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::Derandomize { omega: Some(o) } = &cli.command {
        cfg.omega = Some(o.clone());
    }
    if let Some(caps) = &cli.exact_caps {
        cfg.apply_exact_caps(caps)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<bool, CliError> {
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Failure(format!("thread pool: {e}")))?;
    let art = Artifacts::new(&cli.out, &cfg)?;
    let start = Instant::now();
    let report = pool.install(|| match cfg.kind.expect("set by resolve_config") {
        Kind::GenMatrix => commands::gen_matrix(&cfg, &art),
        Kind::Channel => commands::channel(&cfg, &art),
        Kind::Lossy => commands::lossy(&cfg, &art),
        Kind::VerifyHash => commands::verify_hash(&cfg, &art),
        Kind::CrngTest => commands::crng_test(&cfg, &art),
        Kind::Derandomize => commands::derandomize(&cfg, &art),
    })?;
    for l in &report.lines {
        let _ = writeln!(out, "{l}");
    }
    let _ = writeln!(out, "config sha256 {}", art.config_hash());
    // Kept out of the result files so that reruns are byte-identical.
    eprintln!("wall clock {:.3} s", start.elapsed().as_secs_f64());
    Ok(report.passed)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
