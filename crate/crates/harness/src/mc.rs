//! Coverage bookkeeping and deterministic parallel Monte Carlo loops.

use rayon::prelude::*;
use serde::Serialize;

/// One coverage line of a tail-bound validation: empirical exceedance rate
/// against its nominal level with the binomial 3σ margin attached, so
/// acceptance logic stays mechanical.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageRow {
    pub x: f64,
    pub nominal: f64,
    pub violations: u64,
    pub reps: u64,
    pub empirical: f64,
    pub margin3sigma: f64,
}

impl CoverageRow {
    pub fn new(x: f64, nominal: f64, violations: u64, reps: u64) -> Self {
        let empirical = violations as f64 / reps as f64;
        // Binomial σ at the nominal rate (capped into (0,1) for the formula).
        let p = nominal.clamp(1.0 / reps as f64, 1.0 - 1.0 / reps as f64);
        let margin3sigma = 3.0 * (p * (1.0 - p) / reps as f64).sqrt();
        Self { x, nominal, violations, reps, empirical, margin3sigma }
    }

    pub fn holds(&self) -> bool {
        self.empirical <= self.nominal + self.margin3sigma
    }
}

/// Runs `reps` replicates in fixed-size blocks, each block on its own
/// counter-derived stream, and folds the per-block results in block order.
/// The outcome is independent of the number of worker threads.
pub fn block_mc<T, F>(reps: u64, block: u64, per_block: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    let blocks: Vec<(u64, u64)> = {
        let mut v = Vec::new();
        let mut start = 0;
        while start < reps {
            let len = block.min(reps - start);
            v.push((start, len));
            start += len;
        }
        v
    };
    blocks
        .into_par_iter()
        .enumerate()
        .map(|(i, (_, len))| per_block(i as u64, len))
        .collect()
}
