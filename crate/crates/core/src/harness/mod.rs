//! Scenario files, the closed-loop simulation, metrics and run output.

pub mod io;
pub mod metrics;
pub mod reference;
pub mod scenario;
pub mod sim;

pub use metrics::{compute_metrics, Metrics};
pub use reference::ReferenceSpec;
pub use scenario::{bundled, load_scenario, save_scenario, ScenarioConfig, BUNDLED_SCENARIOS};
pub use sim::{run_simulation, SimLog};

use rayon::prelude::*;

use crate::error::Result;

/// Log and metrics of one finished run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub log: SimLog,
    pub metrics: Metrics,
}

impl RunOutput {
    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        io::write_run(dir, &self.log, self.config.barriers.len(), &self.metrics)
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let log = run_simulation(cfg)?;
    let metrics = compute_metrics(&log, cfg);
    Ok(RunOutput { config: cfg.clone(), log, metrics })
}

/// Worker count from `QUADSAFE_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Option<usize> {
    std::env::var("QUADSAFE_THREADS").ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Runs independent scenarios concurrently; results keep the input order.
pub fn run_many(cfgs: &[ScenarioConfig]) -> Result<Vec<RunOutput>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_limit() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| cfgs.par_iter().map(run).collect())
}
