use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pnpns_core::io::{self, RunConfigFile};
use pnpns_core::par::{with_thread_cap, Execution};

/// Energy-stable PNP–Navier–Stokes solver on the periodic square.
#[derive(Parser)]
#[command(name = "pnpns", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Advance a configured initial state to `time.t_final`.
    Run { config: PathBuf },
    /// Manufactured-solution convergence study over `convergence.dt_list`.
    Convergence { config: PathBuf },
    /// Print a summary of a snapshot file.
    Inspect { snapshot: PathBuf },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("pnpns: {msg}");
    ExitCode::from(code)
}

fn thread_cap() -> Result<Option<usize>, String> {
    match std::env::var("PNPNS_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(format!("PNPNS_THREADS must be a positive integer, got {s:?}")),
        },
    }
}

fn load(path: &Path) -> Result<RunConfigFile, ExitCode> {
    RunConfigFile::load(path).map_err(|e| fail(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn cmd_run(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let outcome = match io::run_config(&cfg, Execution::default()) {
        Ok(o) => o,
        Err(e) if e.is_solver_failure() => return fail(EXIT_SOLVER, e),
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let rec = &outcome.record;
    if let Some(last) = rec.diagnostics.last() {
        println!(
            "{} steps to t = {:.6e}, energy {:.10e}",
            last.step, last.time, last.energy.total
        );
    }
    println!("diagnostics: {}", outcome.diagnostics_path.display());
    for s in &rec.snapshots {
        if let Some(p) = &s.path {
            println!("snapshot t = {:.6e}: {}", s.time, p.display());
        }
    }
    if let Some(p) = &outcome.plot_path {
        println!("plot data: {}", p.display());
    }
    match io::failure_message(rec) {
        Some(msg) => fail(EXIT_SOLVER, msg),
        None => ExitCode::SUCCESS,
    }
}

fn cmd_convergence(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if cfg.convergence.is_none() {
        return fail(EXIT_CONFIG, "config has no `convergence` section");
    }
    match io::convergence_config(&cfg, Execution::default()) {
        Ok(out) => {
            print!("{}", io::convergence_table(&out.rows));
            println!("written: {}", out.csv_path.display());
            ExitCode::SUCCESS
        }
        Err(e) if e.is_solver_failure() => fail(EXIT_SOLVER, e),
        Err(e) => fail(EXIT_CONFIG, e),
    }
}

fn cmd_inspect(path: &Path) -> ExitCode {
    match io::read_snapshot(path).and_then(|s| io::describe_snapshot(&s)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_CONFIG, format!("{}: {e}", path.display())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match thread_cap() {
        Ok(t) => t,
        Err(msg) => return fail(EXIT_CONFIG, msg),
    };
    with_thread_cap(threads, || match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Convergence { config } => cmd_convergence(config),
        Command::Inspect { snapshot } => cmd_inspect(snapshot),
    })
}
