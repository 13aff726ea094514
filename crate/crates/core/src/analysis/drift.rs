use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TrajectoryTrace;

/// `c = (1/4) sqrt(pi k / 8) ((e + 1/e) / 2)^-k`; second-layer steps with
/// `eta2 <= c / T` cannot move any `a_r` by more than `c`.
pub fn drift_constant(k: usize) -> f64 {
    0.25 * (std::f64::consts::PI * k as f64 / 8.0).sqrt() * 1f64.cosh().powi(-(k as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `max_r max_t |a_r(t) - a_r(0)|`.
    pub max_drift: f64,
    /// Every `|a_r(t) - a_r(0)| <= eta2 * t`.
    pub per_step_bound_holds: bool,
    pub c: f64,
    /// Drift within `c`; checked only when `eta2 <= c / T`.
    pub within_c: Option<bool>,
    pub signs_preserved: bool,
}

impl DriftReport {
    pub fn passed(&self) -> bool {
        self.per_step_bound_holds && self.within_c.unwrap_or(true) && self.signs_preserved
    }
}

/// Drift of the second layer over a recorded run.
pub fn second_layer_drift(trace: &TrajectoryTrace, eta2: f64, steps: usize, k: usize) -> Result<DriftReport> {
    let records = trace.steps();
    let first = records
        .first()
        .ok_or_else(|| Error::Trace("trace holds no steps".into()))?;
    if first.t != 0 || first.a.is_empty() {
        return Err(Error::Trace("trace is missing the initial second-layer values".into()));
    }
    let a0 = &first.a;
    let mut max_drift = 0.0f64;
    let mut per_step_bound_holds = true;
    let mut signs_preserved = true;
    for record in records.iter().filter(|r| r.t <= steps) {
        for (a, init) in record.a.iter().zip(a0) {
            let drift = (a - init).abs();
            max_drift = max_drift.max(drift);
            // Room for one rounding per accumulated step.
            let rounding = 2.0 * record.t as f64 * f64::EPSILON * (init.abs() + eta2 * record.t as f64);
            per_step_bound_holds &= drift <= eta2 * record.t as f64 + rounding;
            signs_preserved &= a.signum() == init.signum() && *a != 0.0;
        }
    }
    let c = drift_constant(k);
    let within_c = (eta2 * steps as f64 <= c).then_some(max_drift <= c);
    Ok(DriftReport {
        max_drift,
        per_step_bound_holds,
        c,
        within_c,
        signs_preserved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ParityTask;
    use crate::network::Network;
    use crate::optimizer::{train, TrainConfig, TrainMode};
    use crate::rng::{stream, Purpose};
    use crate::trace::{NeuronSelection, TraceOptions};

    fn run(eta2: f64, steps: usize, seed: u64) -> DriftReport {
        let task = ParityTask::new(8, 2).unwrap();
        let net = Network::init_binary(12, 8, 2, stream(seed, Purpose::Init, 0)).unwrap();
        let cfg = TrainConfig {
            eta2,
            steps,
            seed,
            ..Default::default()
        };
        let mut trace = TrajectoryTrace::new(TraceOptions {
            neurons: NeuronSelection::First,
            population_signs: false,
        });
        train(&task, &net, &cfg, TrainMode::Stochastic, Some(&mut trace)).unwrap();
        second_layer_drift(&trace, eta2, steps, 2).unwrap()
    }

    #[test]
    fn constant_value() {
        let expected = 0.25 * (std::f64::consts::PI / 4.0).sqrt() / ((1f64.exp() + (-1f64).exp()) / 2.0).powi(2);
        assert!((drift_constant(2) - expected).abs() < 1e-15);
    }

    #[test]
    fn frozen_layer_has_no_drift() {
        let report = run(0.0, 20, 1);
        assert_eq!(report.max_drift, 0.0);
        assert!(report.passed());
    }

    #[test]
    fn small_eta2_preserves_signs() {
        let steps = 100;
        let eta2 = drift_constant(2) / (4.0 * steps as f64);
        let report = run(eta2, steps, 2);
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.within_c, Some(true));
        assert!(report.max_drift <= eta2 * steps as f64 * (1.0 + 1e-12));
    }

    #[test]
    fn large_eta2_skips_c_check() {
        let report = run(0.2, 20, 3);
        assert_eq!(report.within_c, None);
        assert!(report.per_step_bound_holds);
    }

    #[test]
    fn empty_trace_is_an_error() {
        let trace = TrajectoryTrace::new(TraceOptions::default());
        assert!(second_layer_drift(&trace, 0.1, 10, 2).is_err());
    }
}
