//! Multi-threaded drivers.
//!
//! Work is split by deterministic sub-stream (Monte Carlo chunk or replicate
//! index) and results are combined in index order, so output never depends on
//! the number of worker threads.

use rayon::prelude::*;
use slvrate_core::dataset::MlstDataset;
use slvrate_core::import::{chunk_count, finish, pairwise_diffs, tally_chunk, ImportDistribution, ImportError, PairwiseDiffTable};
use slvrate_core::analysis::ImportOptions;
use slvrate_core::rng::derive_seed;

/// Runs `f` on a pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool builds").install(f)
}

/// Import distribution with chunks tallied in parallel; identical to the
/// serial estimate. Also returns the raw tallies for x = 0..=m.
pub fn estimate_import_dist_par(table: &PairwiseDiffTable, m: usize, p_a: f64, draws: u64, seed: u64) -> Result<(ImportDistribution, Vec<u64>), ImportError> {
    let counts = (0..chunk_count(draws))
        .into_par_iter()
        .map(|c| tally_chunk(table, m, p_a, draws, seed, c))
        .reduce(
            || vec![0u64; m + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let dist = finish(table, m, p_a, draws, seed, &counts)?;
    Ok((dist, counts))
}

/// Import distribution for locus `l`, seeded as in the serial analysis.
pub fn locus_import_dist_par(dataset: &MlstDataset, l: usize, opts: &ImportOptions) -> Result<(ImportDistribution, Vec<u64>), ImportError> {
    let table = pairwise_diffs(dataset, l, opts.weighting)?;
    estimate_import_dist_par(&table, dataset.loci()[l].length, opts.p_a, opts.draws, derive_seed(opts.seed, l as u64))
}
