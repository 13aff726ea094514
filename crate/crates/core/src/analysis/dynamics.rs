use serde::{Deserialize, Serialize};

use super::CheckOutcome;
use crate::data::ParityTask;
use crate::error::Result;
use crate::network::{classify_neurons, Network};
use crate::optimizer::{factorial, train, TrainConfig, TrainMode};
use crate::trace::{NeuronSelection, TraceOptions, TrajectoryTrace};

/// Step count after which bad neurons and good-neuron noise coordinates fall
/// below `d^-(k+1)`: `(k + 1) log(d) / (eta lambda)`.
pub fn required_steps(k: usize, d: usize, eta: f64, lambda: f64) -> f64 {
    (k as f64 + 1.0) * (d as f64).ln() / (eta * lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    /// Violated preconditions; the checks still run.
    pub preconditions: Vec<String>,
    pub good_features_frozen: CheckOutcome,
    pub bad_features_contract: CheckOutcome,
    pub small_after_training: CheckOutcome,
    pub steps: usize,
}

impl DynamicsReport {
    pub fn all_passed(&self) -> bool {
        self.good_features_frozen.passed && self.bad_features_contract.passed && self.small_after_training.passed
    }
}

/// Runs population-mode training for `steps` steps and checks the three
/// claims about its trajectory: good-neuron feature weights never move,
/// bad-neuron feature weights shrink towards zero without crossing it, and
/// after enough steps everything except good-neuron features is below
/// `d^-(k+1)`.
pub fn check_population_dynamics(
    task: &ParityTask,
    net0: &Network,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<DynamicsReport> {
    let (k, d) = (task.k(), task.d());
    let k_fact = factorial(k);
    let mut preconditions = Vec::new();
    if cfg.lambda != 1.0 {
        preconditions.push(format!("lambda = {} but the dynamics assume lambda = 1", cfg.lambda));
    }
    if cfg.rho >= k_fact {
        preconditions.push(format!("rho = {} is not below k! = {k_fact}", cfg.rho));
    }
    if k >= 2 {
        let lhs = cfg.eta / cfg.decay();
        let rhs = (cfg.rho / k_fact).powf(1.0 / (k as f64 - 1.0));
        if lhs >= rhs {
            preconditions.push(format!(
                "eta / (1 - eta lambda) = {lhs:.6} is not below (rho / k!)^(1/(k-1)) = {rhs:.6}"
            ));
        }
    }
    if net0.weights().iter().any(|&w| w != 1.0 && w != -1.0) {
        preconditions.push("initial weights are not binary".into());
    }
    let needed = required_steps(k, d, cfg.eta, cfg.lambda);
    if (steps as f64) < needed {
        preconditions.push(format!("steps = {steps} is below (k+1) log(d) / (eta lambda) = {needed:.3}"));
    }

    let taxonomy = classify_neurons(net0, task)?;
    let run_cfg = TrainConfig {
        steps,
        eta2: 0.0,
        ..cfg.clone()
    };
    let mut trace = TrajectoryTrace::new(TraceOptions {
        neurons: NeuronSelection::All,
        population_signs: false,
    });
    let (final_net, _) = train(task, net0, &run_cfg, TrainMode::Population, Some(&mut trace))?;
    let history = trace.steps();
    let support = task.support();

    // (a) good-neuron feature coordinates equal their initial values at every step.
    let mut max_dev = 0.0f64;
    for &r in &taxonomy.good {
        for snap in history {
            for &j in support {
                max_dev = max_dev.max((snap.weights[r][j] - net0.row(r)[j]).abs());
            }
        }
    }
    let good_features_frozen = CheckOutcome::new(
        "good_features_frozen",
        max_dev == 0.0,
        -max_dev,
        format!("max |w_rj(t) - w_rj(0)| over good neurons and feature coords = {max_dev:e}"),
    );

    // (b) 0 < s w(t+1) <= (1 - eta lambda) s w(t), equal magnitudes across features.
    let decay = cfg.decay();
    let mut min_positive = f64::INFINITY;
    let mut min_contraction = f64::INFINITY;
    let mut magnitudes_equal = true;
    for &r in &taxonomy.bad {
        let signs: Vec<f64> = support.iter().map(|&j| net0.row(r)[j].signum()).collect();
        for pair in history.windows(2) {
            let (prev, next) = (&pair[0].weights[r], &pair[1].weights[r]);
            let first_mag = signs[0] * next[support[0]];
            for (&j, &s) in support.iter().zip(&signs) {
                let now = s * next[j];
                min_positive = min_positive.min(now);
                min_contraction = min_contraction.min(decay * s * prev[j] - now);
                magnitudes_equal &= now == first_mag;
            }
        }
    }
    let contraction_ok = taxonomy.bad.is_empty() || steps == 0 || (min_positive > 0.0 && min_contraction >= 0.0);
    let bad_features_contract = CheckOutcome::new(
        "bad_features_contract",
        contraction_ok && magnitudes_equal,
        if taxonomy.bad.is_empty() || steps == 0 {
            0.0
        } else {
            min_positive.min(min_contraction)
        },
        format!(
            "min s*w(t+1) = {min_positive:e}, min (1-eta*lambda)s*w(t) - s*w(t+1) = {min_contraction:e}, equal magnitudes = {magnitudes_equal}"
        ),
    );

    // (c) final magnitudes of bad neurons and good-neuron noise coordinates.
    let bound = (d as f64).powi(-(k as i32 + 1));
    let mut largest = 0.0f64;
    for r in 0..final_net.m() {
        let good = taxonomy.is_good(r);
        for (j, &w) in final_net.row(r).iter().enumerate() {
            if !good || !task.is_feature(j) {
                largest = largest.max(w.abs());
            }
        }
    }
    let small_after_training = CheckOutcome::new(
        "small_after_training",
        largest <= bound,
        bound - largest,
        format!("max residual |w| = {largest:e} vs d^-(k+1) = {bound:e} after {steps} steps"),
    );

    Ok(DynamicsReport {
        preconditions,
        good_features_frozen,
        bad_features_contract,
        small_after_training,
        steps,
    })
}
