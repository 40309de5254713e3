use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ksctl::{exit_code, load_file, run_scenario, Task};

/// Runs one null-control scenario and writes its artifacts.
#[derive(Parser, Debug)]
#[command(name = "ksctl", version)]
struct Cli {
    /// spectrum, critical-set, biortho, control-1d, control-point, minimal-time, control-nd, nonlinear or simulate
    task: Task,
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    ksctl::init_threads()?;
    let mut loaded = load_file(&cli.config, Some(cli.task))?;
    if let Some(s) = cli.seed {
        loaded.scenario.seed = s;
    }
    let root = cli
        .out
        .clone()
        .or_else(|| loaded.scenario.output_dir.as_ref().map(|d| loaded.scenario.base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let outcome = run_scenario(&loaded, &root)?;
    println!("{}", outcome.dir.display());
    if let Some(e) = &outcome.error {
        eprintln!("error: {e:#}");
    }
    Ok(outcome.exit_code)
}
