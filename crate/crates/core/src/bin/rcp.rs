use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rcp_core::cli::{self, Output, SweepParam, DEFAULT_CONFIG};
use rcp_core::config::{OutputFormat, RunConfig};
use rcp_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rcp", version, about = "Robust committed-spend pricing")]
struct Args {
    /// TOML config file; a two-service default scenario is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `verify.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.format` (table or csv).
    #[arg(long, global = true)]
    format: Option<String>,
    /// Overrides `output.path`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal committed spend contract and its profit guarantee.
    Solve,
    /// Buyer's best response to the configured contract.
    Respond {
        /// Comma-separated type, one entry per service.
        #[arg(long)]
        theta: String,
    },
    /// Worst-case profit of each mechanism at every grid level.
    WorstCase,
    /// Mechanisms ranked by worst-case profit.
    Compare,
    /// Closed-form guarantee over a range of lambda or c.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated parameter values.
        #[arg(long)]
        values: String,
    },
    /// Expected profit under the configured distribution.
    Evaluate,
    /// Runs the invariant suite.
    Verify,
}

fn load(args: &Args) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::from_toml_str(DEFAULT_CONFIG)?,
    };
    if let Some(seed) = args.seed {
        cfg.verify.seed = seed;
    }
    if let Some(f) = &args.format {
        cfg.format = f.parse::<OutputFormat>()?;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("RCP_THREADS") else {
        return Ok(());
    };
    let n: usize =
        value.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Validation(format!("RCP_THREADS must be a positive integer, got {value:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(args: &Args) -> Result<Output> {
    init_threads()?;
    let cfg = load(args)?;
    let output = match &args.command {
        Command::Solve => cli::cmd_solve(&cfg)?,
        Command::Respond { theta } => cli::cmd_respond(&cfg, theta)?,
        Command::WorstCase => cli::cmd_worst_case(&cfg)?,
        Command::Compare => cli::cmd_compare(&cfg)?,
        Command::Sweep { param, values } => {
            let param: SweepParam = param.parse()?;
            cli::cmd_sweep(&cfg, param, &cli::parse_list(values, "--values")?)?
        }
        Command::Evaluate => cli::cmd_evaluate(&cfg)?,
        Command::Verify => cli::cmd_verify(&cfg)?,
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, &output.text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(output.text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Config(format!("stdout: {e}")))?;
        }
    }
    Ok(output)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(out) => ExitCode::from(out.exit_code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
