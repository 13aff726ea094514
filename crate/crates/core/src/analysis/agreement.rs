use serde::{Deserialize, Serialize};

use crate::data::ParityTask;
use crate::error::Result;
use crate::network::Network;
use crate::optimizer::{train, TrainConfig, TrainMode};
use crate::trace::{NeuronSelection, TraceOptions, TrajectoryTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Fraction of `(r, j)` with matching dead-zone signs, per step.
    pub per_step: Vec<f64>,
    /// Whether the stochastic and population runs end at the same weights.
    pub trajectories_identical: bool,
}

impl AgreementReport {
    pub fn full_agreement(&self) -> bool {
        self.per_step.iter().all(|&a| a == 1.0)
    }

    pub fn mean(&self) -> f64 {
        if self.per_step.is_empty() {
            return 1.0;
        }
        self.per_step.iter().sum::<f64>() / self.per_step.len() as f64
    }
}

/// Trains in `mode` from `net0` and, at every step, compares the signs it
/// applied with the closed-form population signs at the same weights. A
/// separate population run from the same start tells whether the two
/// trajectories coincide.
pub fn sign_agreement(
    task: &ParityTask,
    net0: &Network,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<AgreementReport> {
    let cfg = TrainConfig {
        eta2: 0.0,
        ..cfg.clone()
    };
    let mut trace = TrajectoryTrace::new(TraceOptions {
        neurons: NeuronSelection::First,
        population_signs: true,
    });
    let (reference, _) = train(task, net0, &cfg, mode, Some(&mut trace))?;
    let (population, _) = train(task, net0, &cfg, TrainMode::Population, None)?;
    Ok(AgreementReport {
        per_step: trace.steps().iter().filter_map(|s| s.agreement).collect(),
        trajectories_identical: reference == population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn population_against_itself() {
        let task = ParityTask::new(8, 2).unwrap();
        let net = Network::init_binary(12, 8, 2, stream(3, Purpose::Init, 0)).unwrap();
        let report = sign_agreement(&task, &net, &TrainConfig::default(), TrainMode::Population).unwrap();
        assert_eq!(report.per_step.len(), 25);
        assert!(report.full_agreement());
        assert!(report.trajectories_identical);
    }

    #[test]
    fn single_sample_batches_disagree() {
        let task = ParityTask::new(8, 2).unwrap();
        let net = Network::init_binary(12, 8, 2, stream(3, Purpose::Init, 0)).unwrap();
        let cfg = TrainConfig {
            batch: 1,
            seed: 3,
            ..Default::default()
        };
        let report = sign_agreement(&task, &net, &cfg, TrainMode::Stochastic).unwrap();
        assert!(report.mean() < 1.0);
        assert!(!report.trajectories_identical);
    }
}
