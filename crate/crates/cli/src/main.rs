//! `ptgauge`: runs propagation and convergence experiments from a TOML
//! configuration and writes CSV.
//!
//! Every CSV starts with a `# ptgauge <command>` line followed by the full
//! effective configuration as `# `-prefixed TOML, so any output file can be
//! passed back through `--config` to regenerate it.

mod output;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ptgauge::analysis::observables;
use ptgauge::experiment::{run_converge, run_propagate, run_scaling, run_turning_points};
use ptgauge::{Error, RunConfig};

use crate::output::{converge_table, preamble, propagate_table, scaling_tables, PREAMBLE_TAG};

#[derive(Parser)]
#[command(name = "ptgauge", version, about = "Parallel-transport propagation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one method and write the trajectory.
    Propagate(Common),
    /// Error of every method over the step sweep, against fine references.
    Converge(Common),
    /// Error at fixed `h` against ε, with fitted slopes.
    Scaling(Common),
    /// Turning points of every method for every ε, with fitted slopes.
    TurningPoint(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// Halve the step when an implicit solve fails instead of aborting.
    #[arg(long)]
    retry_halve: bool,
    /// Leave the orbital columns out of `propagate` output.
    #[arg(long)]
    observables_only: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Propagate(_) => "propagate",
            Command::Converge(_) => "converge",
            Command::Scaling(_) => "scaling",
            Command::TurningPoint(_) => "turning-point",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Propagate(c) | Command::Converge(c) | Command::Scaling(c) | Command::TurningPoint(c) => c,
        }
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("ptgauge: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("ptgauge: numerical failure: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Reads a TOML config, or the preamble of a CSV this tool wrote.
fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let shown = path.display();
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {shown}: {e}")))?;
    let toml = match text.lines().next() {
        Some(first) if first.starts_with(PREAMBLE_TAG) => text
            .lines()
            .skip(1)
            .map_while(|l| l.strip_prefix('#'))
            .map(|l| l.strip_prefix(' ').unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n"),
        _ => text,
    };
    RunConfig::from_toml_str(&toml).map_err(|e| Failure::Usage(format!("{shown}: {e}")))
}

fn run(command: &Command) -> Result<(), Failure> {
    let args = command.common();
    let mut cfg = load_config(&args.config)?;
    cfg.retry_halve |= args.retry_halve;
    cfg.output.observables_only |= args.observables_only;

    if let Some(n) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {n} workers: {e}")))?;
    }

    let mut body = String::new();
    let mut failure = None;
    match command {
        Command::Propagate(_) => {
            let (method, traj) = run_propagate(&cfg)?;
            let obs = observables(&traj, &cfg.problem, method.kind)?;
            body = propagate_table(&traj, &obs, cfg.output.observables_only);
            failure = traj.failure.clone();
        }
        Command::Converge(_) => body.push_str(&converge_table(&run_converge(&cfg)?)),
        Command::Scaling(_) => body.push_str(&scaling_tables(&run_scaling(&cfg)?)),
        Command::TurningPoint(_) => {
            let (studies, report) = run_turning_points(&cfg)?;
            body.push_str(&scaling_tables(&report));
            body.push_str("# sweeps\n");
            body.push_str(&converge_table(&studies));
        }
    }

    let mut text = preamble(command.name(), &cfg);
    text.push_str(&body);
    if let Some(e) = &failure {
        text.push_str(&format!("# error: {e}\n"));
    }
    write_out(args.out.as_deref(), &text)?;

    match failure {
        Some(e) => Err(Failure::Numerical(e.to_string())),
        None => Ok(()),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let res = match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    };
    res.map_err(|e| {
        let target = path.map_or("stdout".into(), |p| p.display().to_string());
        Failure::Usage(format!("cannot write {target}: {e}"))
    })
}
