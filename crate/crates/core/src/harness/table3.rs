//! Accuracy table over the three shipped configurations.

use std::fmt;

use serde::Serialize;

use super::run::run;
use super::spec::shipped_spec;
use crate::error::Result;

/// Published accuracy cells in percent: `(k, mean, std)`.
pub const PUBLISHED_ACCURACY: [(usize, f64, f64); 3] = [(2, 99.69, 0.29), (3, 97.75, 1.37), (4, 96.89, 0.44)];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table3Row {
    pub k: usize,
    pub seeds: usize,
    /// Mean and sample std of the test accuracy, as fractions.
    pub mean: f64,
    pub std: Option<f64>,
    pub exact_evaluation: bool,
    /// Published mean and std in percent.
    pub reference_mean: f64,
    pub reference_std: f64,
}

impl fmt::Display for Table3Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let std = self.std.map_or("-".to_string(), |s| format!("{:.2}", 100.0 * s));
        write!(
            f,
            "k={}  {:>6.2}% +- {:>5}%  (reference {:.2}% +- {:.2}%, {} seeds, {} test)",
            self.k,
            100.0 * self.mean,
            std,
            self.reference_mean,
            self.reference_std,
            self.seeds,
            if self.exact_evaluation { "exact" } else { "monte carlo" },
        )
    }
}

/// Runs the shipped k = 2, 3, 4 configurations with their default seeds.
pub fn reproduce_table3() -> Result<Vec<Table3Row>> {
    reproduce_table3_with(None, None, 1)
}

/// Same with an optional master seed and seed count override.
pub fn reproduce_table3_with(master_seed: Option<u64>, seeds: Option<usize>, workers: usize) -> Result<Vec<Table3Row>> {
    PUBLISHED_ACCURACY
        .iter()
        .map(|&(k, reference_mean, reference_std)| {
            let mut spec = shipped_spec(k)?;
            if let Some(seed) = master_seed {
                spec.train.seed = seed;
            }
            if let Some(n) = seeds {
                spec.seeds = n;
            }
            spec.workers = workers;
            let report = run(&spec)?;
            let accuracy = report.accuracy.expect("a successful run has at least one seed");
            Ok(Table3Row {
                k,
                seeds: spec.seeds,
                mean: accuracy.mean,
                std: accuracy.std,
                exact_evaluation: report.seeds.iter().all(|s| s.train.exact_evaluation),
                reference_mean,
                reference_std,
            })
        })
        .collect()
}
