mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use constraint_forge::{ErrorClass, ForgeError, Result};

use commands::EigenOperator;
use config::RunConfig;
use output::Sink;

const EXIT_HYPOTHESIS: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "constraint-forge", version, about = "Conformal constraint solver")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the rayon choice.
    #[arg(long, global = true, env = "CONSTRAINT_FORGE_THREADS")]
    threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Barriers, coupled solve, certificate and residuals.
    Solve,
    /// Barrier certificate and hypothesis report.
    Certify {
        /// Directory holding `x.csv` (and `f.csv`) for a posteriori mode.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Lowest eigenvalue of a configured operator.
    Eigen {
        #[arg(long, value_enum, default_value_t = EigenOperator::Conf)]
        operator: EigenOperator,
    },
    /// Constraint residuals of dumped fields.
    Verify {
        /// Directory holding `phi.csv` and `x.csv`; defaults to `--out`.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study.
    Mms,
    /// Smallness constant against the constant part of `τ`.
    SweepTau0,
    /// Sobolev exponent ladder.
    Bootstrap { n: usize },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Certify { .. } => "certify",
            Command::Eigen { .. } => "eigen",
            Command::Verify { .. } => "verify",
            Command::Mms => "mms",
            Command::SweepTau0 => "sweep-tau0",
            Command::Bootstrap { .. } => "bootstrap",
        }
    }
}

fn load(cli: &Cli) -> Result<(RunConfig, Vec<u8>)> {
    let path = cli.config.as_deref().ok_or_else(|| ForgeError::Config("--config is required".into()))?;
    let bytes = std::fs::read(path).map_err(|e| ForgeError::Config(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| ForgeError::Config(e.to_string()))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok((cfg, bytes))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| ForgeError::Config(format!("thread pool: {e}")))?;
    }
    if let Command::Bootstrap { n } = cli.command {
        println!("{}", commands::bootstrap(n)?);
        return Ok(());
    }
    let (cfg, bytes) = load(cli)?;
    let sink = Sink::create(&cli.out)?;
    sink.write("manifest.txt", &commands::manifest(cli.command.name(), &cfg, &bytes))?;
    match &cli.command {
        Command::Solve => commands::solve(&cfg, &sink),
        Command::Certify { dump } => commands::certify(&cfg, &sink, dump.as_deref()),
        Command::Eigen { operator } => commands::eigen(&cfg, &sink, *operator),
        Command::Verify { dump } => commands::verify(&cfg, &sink, dump.as_deref().unwrap_or(sink.dir())),
        Command::Mms => commands::mms(&cfg, &sink),
        Command::SweepTau0 => commands::sweep(&cfg, &sink),
        Command::Bootstrap { .. } => unreachable!("handled above"),
    }
}

fn exit_code(e: &ForgeError) -> u8 {
    match e.class() {
        ErrorClass::Hypothesis => EXIT_HYPOTHESIS,
        ErrorClass::NonConvergence => EXIT_NONCONVERGENCE,
        ErrorClass::Config => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    // clap reports usage errors with code 2, which is reserved for hypothesis failures.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
