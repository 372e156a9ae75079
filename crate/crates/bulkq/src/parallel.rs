use bulkq_core::dessim::{simulate_replications, SimEstimate, SimTally};
use bulkq_core::{Error, QueueConfig, RateFunction};
use rayon::prelude::*;

/// Replications per work unit. Fixed so the chunking never depends on the
/// number of worker threads.
pub const CHUNK: u64 = 4096;

/// Same result as [`bulkq_core::dessim::estimate`], computed on the current
/// rayon pool.
pub fn estimate_parallel(
    cfg: &QueueConfig,
    rf: &RateFunction,
    checkpoints: &[f64],
    levels: usize,
    n_reps: u64,
    master_seed: u64,
) -> Result<SimEstimate, Error> {
    if n_reps == 0 {
        return Err(Error::InvalidParameter("n_reps must be at least 1".into()));
    }
    if levels < cfg.batch() + 1 {
        return Err(Error::InvalidParameter(format!("N must be at least B + 1 = {}", cfg.batch() + 1)));
    }
    let chunks = n_reps.div_ceil(CHUNK);
    let tallies: Vec<SimTally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(n_reps);
            simulate_replications(cfg, rf, checkpoints, levels, master_seed, range)
        })
        .collect::<Result<_, _>>()?;
    let mut total = SimTally::new(checkpoints.len(), cfg.k(), levels);
    for t in &tallies {
        total.merge(t);
    }
    Ok(SimEstimate::from_tally(&total, checkpoints, master_seed))
}
