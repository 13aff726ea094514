use serde::{Deserialize, Serialize};

use super::median;
use crate::data::{ParityTask, Sample};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::optimizer::{batch_gradient, population_gradient, tilde_sign, GradientEstimate, TrainConfig};
use crate::rng::{stream, Purpose};

/// Analytic uniform bound on the normalized gap between batch and population
/// statistics, holding with probability at least `1 - delta` over `steps`
/// batches of size `batch`.
pub fn epsilon1(k: usize, d: usize, m: usize, batch: usize, steps: usize, delta: f64) -> f64 {
    let (kf, df, mf, bf, tf) = (k as f64, d as f64, m as f64, batch as f64, steps.max(1) as f64);
    let inner = (16.0 * mf * df * bf * tf / delta).ln();
    let outer = (8.0 * mf * df * tf / delta).ln();
    2f64.powf(kf / 2.0) * kf * inner.powf((kf - 1.0) / 2.0) * outer / bf.sqrt()
        + kf * df.powf((kf - 3.0) / 2.0) * delta / (8.0 * mf * bf * tf)
}

/// `max_{r,j} |population - batch| / ||w_r||^(k-1)`.
pub fn normalized_gap(net: &Network, population: &GradientEstimate, batch: &GradientEstimate) -> f64 {
    let mut gap = 0.0f64;
    for r in 0..net.m() {
        let scale = net.row_norm(r).powi(net.k() as i32 - 1);
        for (p, b) in population.row(r).iter().zip(batch.row(r)) {
            let diff = (p - b).abs();
            gap = gap.max(if scale > 0.0 { diff / scale } else { diff });
        }
    }
    gap
}

fn agreement(population: &GradientEstimate, batch: &GradientEstimate, rho: f64) -> Result<f64> {
    let mut same = 0usize;
    for (p, b) in population.first().iter().zip(batch.first()) {
        same += (tilde_sign(*p, rho)? == tilde_sign(*b, rho)?) as usize;
    }
    Ok(same as f64 / population.first().len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientGapReport {
    /// One normalized gap per batch draw.
    pub gaps: Vec<f64>,
    /// Fraction of coordinates with matching dead-zone signs, per batch draw.
    pub agreement: Vec<f64>,
    pub epsilon1: f64,
}

impl GradientGapReport {
    pub fn median_gap(&self) -> f64 {
        median(&self.gaps)
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(0.0, f64::max)
    }

    pub fn fraction_within_bound(&self) -> f64 {
        self.gaps.iter().filter(|&&g| g <= self.epsilon1).count() as f64 / self.gaps.len() as f64
    }
}

/// Draws `n_batches` fresh batches of size `cfg.batch` at fixed weights and
/// compares each batch statistic with the closed form. Batch `i` comes from
/// stream `(cfg.seed, Auxiliary, i)`.
pub fn measure_gradient_gap(
    task: &ParityTask,
    net: &Network,
    cfg: &TrainConfig,
    n_batches: usize,
) -> Result<GradientGapReport> {
    if n_batches == 0 {
        return Err(Error::InvalidSize("need at least one batch".into()));
    }
    let population = population_gradient(net, task, None)?;
    let mut gaps = Vec::with_capacity(n_batches);
    let mut agree = Vec::with_capacity(n_batches);
    for i in 0..n_batches {
        let batch = task.sample_batch(cfg.batch, stream(cfg.seed, Purpose::Auxiliary, i as u64))?;
        let estimate = batch_gradient(net, &batch, task, None)?;
        gaps.push(normalized_gap(net, &population, &estimate));
        agree.push(agreement(&population, &estimate, cfg.rho)?);
    }
    Ok(GradientGapReport {
        gaps,
        agreement: agree,
        epsilon1: epsilon1(task.k(), task.d(), net.m(), cfg.batch, cfg.steps, cfg.delta),
    })
}

/// Gap for a caller-supplied batch, e.g. the whole hypercube.
pub fn gap_for_batch(task: &ParityTask, net: &Network, batch: &[Sample]) -> Result<f64> {
    let population = population_gradient(net, task, None)?;
    let estimate = batch_gradient(net, batch, task, None)?;
    Ok(normalized_gap(net, &population, &estimate))
}
