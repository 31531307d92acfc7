mod commands;
mod config;
mod error;

use clap::{Args, Parser, Subcommand};
use config::{parse_triple, Format, RunConfig};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ewsdyn", version, about = "Slow-fast predator-prey dynamics and extinction early warnings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate the model and classify the attractor
    Simulate,
    /// Locate the folded saddle-node and compute normal-form coefficients
    Normalform,
    /// Run the nested-interval early-warning scan on a model trajectory
    Ews,
    /// Classify a normal-form initial point by the averaged-system criterion
    Classify,
    /// Continue equilibrium branches and detect bifurcations
    Sweep,
}

#[derive(Args)]
struct Flags {
    /// `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    h: Option<f64>,
    /// initial condition `X,Y,Z`
    #[arg(long, global = true, allow_hyphen_values = true)]
    ic: Option<String>,
    #[arg(long, global = true)]
    tfinal: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

fn resolve(flags: &Flags) -> Result<RunConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(h) = flags.h {
        cfg.params.h = h;
    }
    if let Some(ic) = &flags.ic {
        cfg.ic = Some(parse_triple("--ic", ic)?);
    }
    if let Some(t) = flags.tfinal {
        cfg.t_final = Some(t);
    }
    if let Some(k) = flags.k {
        cfg.k = k;
    }
    if let Some(o) = &flags.out {
        cfg.out = o.clone();
    }
    if let Some(f) = flags.format {
        cfg.format = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.flags)?;
    let outputs = match cli.command {
        Command::Simulate => commands::simulate(&cfg)?,
        Command::Normalform => commands::normalform(&cfg)?,
        Command::Ews => commands::ews(&cfg)?,
        Command::Classify => commands::classify(&cfg)?,
        Command::Sweep => commands::sweep(&cfg)?,
    };
    std::fs::create_dir_all(&cfg.out)?;
    for (name, body) in &outputs {
        std::fs::write(cfg.out.join(name), body)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ewsdyn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
