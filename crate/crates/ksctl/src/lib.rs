//! Scenario runner behind the `ksctl` binary.

pub mod config;
pub mod output;
pub mod run;

pub use config::{load, load_file, ConfigError, Loaded, Scenario, Task};
pub use run::{exit_code, run_scenario, RunOutcome};

/// Builds the global rayon pool from `KSCTL_THREADS` when set.
pub fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("KSCTL_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| ConfigError(format!("KSCTL_THREADS=`{v}` is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
