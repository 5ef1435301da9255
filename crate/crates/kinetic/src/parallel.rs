//! Multi-threaded drivers. Results are merged in queue order, so they do not
//! depend on the number of workers.

use rayon::prelude::*;

use kinetic_core::explorer::{ExplorationResult, Explorer};
use kinetic_core::falsify::{self, CampaignReport, FalsifyProblem};
use kinetic_core::Result;

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}

/// Explores with `jobs` workers; `jobs <= 1` runs the sequential FIFO loop.
pub fn explore(explorer: &Explorer, jobs: usize) -> Result<ExplorationResult> {
    if jobs <= 1 {
        return explorer.explore();
    }
    pool(jobs).install(|| explorer.explore_levels(|level| level.par_iter().map(|n| explorer.process(n)).collect()))
}

pub fn campaign(prefixes: &[Vec<usize>], template: &FalsifyProblem, jobs: usize) -> Result<CampaignReport> {
    if jobs <= 1 {
        return falsify::run_campaign(prefixes, template);
    }
    let runs = pool(jobs).install(|| {
        prefixes
            .par_iter()
            .map(|p| falsify::run_one(p, template))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CampaignReport::from_runs(runs))
}
