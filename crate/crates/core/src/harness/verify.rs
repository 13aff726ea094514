//! The full check suite behind the `verify` and `oracle-check` commands.

use rand::Rng;

use super::spec::shipped_spec;
use crate::analysis::{
    bound_f3, check_population_dynamics, drift_constant, group_size_check, identity_f2,
    measure_gradient_gap, required_steps, second_layer_drift, sign_agreement, CheckOutcome,
};
use crate::data::ParityTask;
use crate::error::Result;
use crate::network::{Network, SecondLayer};
use crate::optimizer::{factorial, population_gradient, train, TrainConfig, TrainMode};
use crate::oracle::exact_statistics;
use crate::rng::{run_seed, stream, Purpose};
use crate::trace::{NeuronSelection, TraceOptions, TrajectoryTrace};

fn outcome(name: &str, passed: bool, slack: f64, detail: String) -> CheckOutcome {
    CheckOutcome::new(name, passed, slack, detail)
}

/// The good network has margin exactly `k! 2^k` on every feature pattern.
pub fn margin_check(k_max: usize) -> Result<Vec<CheckOutcome>> {
    (1..=k_max)
        .map(|k| {
            let net = Network::good_network(k, k)?;
            let task = ParityTask::new(k, k)?;
            let target = factorial(k) * 2f64.powi(k as i32);
            let mut worst = 0.0f64;
            for sample in task.enumerate_all()? {
                worst = worst.max((net.margin(&sample)? - target).abs());
            }
            Ok(outcome(
                "good_network_margin",
                worst == 0.0,
                -worst,
                format!("k={k}: margin k! 2^k = {target}, largest deviation {worst:e}"),
            ))
        })
        .collect()
}

/// Combinatorial identity for `k <= 15` and the matching bound for `k <= 30`.
pub fn identity_checks() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for k in 1..=15 {
        let (lhs, rhs) = identity_f2(k)?;
        if lhs != rhs {
            failures.push(format!("k={k}: {lhs} != {rhs}"));
        }
    }
    out.push(outcome(
        "alternating_power_identity",
        failures.is_empty(),
        -(failures.len() as f64),
        if failures.is_empty() { "k = 1..15 exact".into() } else { failures.join("; ") },
    ));
    let mut slack = f64::INFINITY;
    let mut holds = true;
    for k in 1..=30 {
        let b = bound_f3(k)?;
        holds &= b.holds;
        slack = slack.min((b.rhs - b.lhs) / b.rhs);
    }
    out.push(outcome(
        "absolute_power_bound",
        holds,
        slack,
        format!("k = 1..30, smallest relative slack {slack:.4e}"),
    ));
    Ok(out)
}

/// Random real-valued network with entries uniform in `[-1.5, 1.5]` and
/// second layer uniform in `[-1, 1]`.
pub fn random_real_network(m: usize, d: usize, k: usize, seed: u64, index: u64) -> Result<Network> {
    let mut rng = stream(seed, Purpose::Auxiliary, index);
    let weights = (0..m * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    let second = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    Network::from_parts(m, d, k, weights, second, SecondLayer::Trainable)
}

/// Largest entrywise difference between the closed-form population gradient
/// and the enumerated one, relative to the largest enumerated entry.
pub fn oracle_relative_error(net: &Network, task: &ParityTask) -> Result<f64> {
    let closed = population_gradient(net, task, None)?;
    let exact = exact_statistics(net, task)?.exact_gradient;
    let scale = exact.first().iter().fold(0.0f64, |s, g| s.max(g.abs()));
    let diff = closed
        .first()
        .iter()
        .zip(exact.first())
        .fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Closed form against enumeration on `n_networks` random networks at each
/// of `(d, k) = (8, 2), (8, 3), (10, 4)`.
pub fn oracle_check(n_networks: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    [(8, 2), (8, 3), (10, 4)]
        .iter()
        .map(|&(d, k)| {
            let task = ParityTask::new(d, k)?;
            let mut worst = 0.0f64;
            for i in 0..n_networks {
                let net = random_real_network(8, d, k, seed, i as u64)?;
                worst = worst.max(oracle_relative_error(&net, &task)?);
            }
            Ok(outcome(
                "population_gradient_oracle",
                worst <= 1e-9,
                1e-9 - worst,
                format!("d={d} k={k}: {n_networks} networks, max relative error {worst:.3e}"),
            ))
        })
        .collect()
}

fn dynamics_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let task = ParityTask::new(16, 3)?;
    let cfg = TrainConfig {
        eta: 0.05,
        lambda: 1.0,
        rho: 0.6,
        ..Default::default()
    };
    let net0 = Network::init_binary(48, 16, 3, stream(seed, Purpose::Init, 0))?;
    let steps = required_steps(3, 16, cfg.eta, cfg.lambda).ceil() as usize;
    let report = check_population_dynamics(&task, &net0, &cfg, steps)?;
    Ok(vec![report.good_features_frozen, report.bad_features_contract, report.small_after_training])
}

/// Seeds (out of `seeds`) whose stochastic run at `batch` applies exactly the
/// population signs at every step, and the mean per-step agreement.
pub fn agreement_counts(batch: usize, seeds: usize, master: u64) -> Result<(usize, f64)> {
    let task = ParityTask::new(8, 2)?;
    let mut full = 0;
    let mut mean = 0.0;
    for run in 0..seeds {
        let seed = run_seed(master, run);
        let net0 = Network::init_binary(12, 8, 2, stream(seed, Purpose::Init, 0))?;
        let cfg = TrainConfig {
            eta: 0.1,
            lambda: 1.0,
            rho: 0.3,
            batch,
            steps: 25,
            seed,
            ..Default::default()
        };
        let report = sign_agreement(&task, &net0, &cfg, TrainMode::Stochastic)?;
        full += report.full_agreement() as usize;
        mean += report.mean() / seeds as f64;
    }
    Ok((full, mean))
}

/// Median normalized gradient gap at `batch` divided by that at `4 batch`.
pub fn gap_shrink_factor(batch: usize, n_batches: usize, seed: u64) -> Result<f64> {
    let task = ParityTask::new(8, 2)?;
    let net = Network::init_binary(12, 8, 2, stream(seed, Purpose::Init, 0))?;
    let at = |b: usize| -> Result<f64> {
        let cfg = TrainConfig {
            batch: b,
            seed,
            ..Default::default()
        };
        Ok(measure_gradient_gap(&task, &net, &cfg, n_batches)?.median_gap())
    };
    Ok(at(batch)? / at(4 * batch)?)
}

/// Trainable second layer with `eta2 = c / (4 T)` on the k = 2
/// configuration run for `steps`: per-seed drift outcomes and the mean
/// accuracies with a trainable and a fixed second layer.
pub fn second_layer_runs(steps: usize, seeds: usize, master: u64) -> Result<(Vec<CheckOutcome>, f64, f64)> {
    let spec = shipped_spec(2)?;
    let task = spec.task()?;
    let eta2 = drift_constant(2) / (4.0 * steps as f64);
    let mut outcomes = Vec::new();
    let (mut trainable, mut fixed) = (0.0, 0.0);
    for run in 0..seeds {
        let seed = run_seed(master, run);
        let net0 = Network::init_binary(spec.m, spec.d, spec.k, stream(seed, Purpose::Init, 0))?;
        let base = TrainConfig {
            steps,
            seed,
            ..spec.train.clone()
        };
        let cfg = TrainConfig { eta2, ..base.clone() };
        let mut trace = TrajectoryTrace::new(TraceOptions {
            neurons: NeuronSelection::First,
            population_signs: false,
        });
        let (_, with) = train(&task, &net0, &cfg, TrainMode::Stochastic, Some(&mut trace))?;
        let (_, without) = train(&task, &net0, &base, TrainMode::Stochastic, None)?;
        let drift = second_layer_drift(&trace, eta2, steps, 2)?;
        let bound = eta2 * steps as f64;
        outcomes.push(outcome(
            "second_layer_drift",
            drift.passed(),
            bound - drift.max_drift,
            format!(
                "run {run}: drift {:.6e} vs eta2 T = {bound:.6e}, signs preserved {}",
                drift.max_drift, drift.signs_preserved
            ),
        ));
        trainable += with.test_accuracy / seeds as f64;
        fixed += without.test_accuracy / seeds as f64;
    }
    Ok((outcomes, trainable, fixed))
}

/// Mean accuracy of the shipped configurations under their own dead zone
/// and under `rho = 0.1 k!`: `(k, rho, mean accuracy)` per row.
pub fn rho_variants(seeds: usize, master: u64) -> Result<Vec<(usize, f64, f64)>> {
    let mut rows = Vec::new();
    for k in 2..=4 {
        let base = shipped_spec(k)?;
        for rho in [base.train.rho, 0.1 * factorial(k)] {
            let mut spec = base.clone();
            spec.train.rho = rho;
            spec.train.seed = master;
            spec.seeds = seeds;
            let report = super::run::run(&spec)?;
            rows.push((k, rho, report.accuracy.map_or(f64::NAN, |a| a.mean)));
        }
    }
    Ok(rows)
}

/// Every check that runs in well under a minute: margins, identities,
/// the gradient oracle, population dynamics, sign agreement, gap scaling,
/// group concentration and second-layer drift.
pub fn verify_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = margin_check(6)?;
    out.extend(identity_checks()?);
    out.extend(oracle_check(100, seed)?);
    out.extend(dynamics_checks(seed)?);

    let (full, _) = agreement_counts(8192, 10, seed)?;
    out.push(outcome(
        "sign_agreement_large_batch",
        full >= 9,
        full as f64 - 9.0,
        format!("B=8192: {full}/10 seeds agree at every step"),
    ));
    let (_, mean) = agreement_counts(1, 10, seed)?;
    out.push(outcome(
        "sign_agreement_single_sample",
        mean < 1.0,
        1.0 - mean,
        format!("B=1: mean agreement {mean:.4}"),
    ));

    let factor = gap_shrink_factor(256, 100, seed)?;
    out.push(outcome(
        "gradient_gap_scaling",
        (1.6..=2.4).contains(&factor),
        (factor - 1.6).min(2.4 - factor),
        format!("median gap at B=256 over B=1024: {factor:.4}"),
    ));

    let groups = group_size_check(4096, 2, 200, 0.05, seed)?;
    out.push(outcome(
        "group_concentration",
        groups.pass_fraction >= 0.95,
        groups.pass_fraction - 0.95,
        format!("m=4096 k=2: {:.3} of 200 seeds inside (1 +- {:.4}) m/8", groups.pass_fraction, groups.alpha),
    ));

    let (drift, trainable, fixed) = second_layer_runs(100, 10, seed)?;
    out.extend(drift);
    let gap = (trainable - fixed).abs();
    out.push(outcome(
        "second_layer_accuracy",
        gap <= 0.01,
        0.01 - gap,
        format!("mean accuracy trainable {trainable:.4} vs fixed {fixed:.4}"),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margins_and_identities_pass() {
        assert!(margin_check(6).unwrap().iter().all(|c| c.passed));
        assert!(identity_checks().unwrap().iter().all(|c| c.passed));
    }

    #[test]
    fn oracle_agrees_on_a_few_networks() {
        let checks = oracle_check(3, 11).unwrap();
        assert_eq!(checks.len(), 3);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn oracle_error_detects_a_wrong_gradient() {
        // A network on a different support has a different gradient.
        let net = random_real_network(4, 8, 2, 5, 0).unwrap();
        let task = ParityTask::with_support(8, vec![0, 1]).unwrap();
        let other = ParityTask::with_support(8, vec![2, 3]).unwrap();
        let closed = population_gradient(&net, &task, None).unwrap();
        let exact = exact_statistics(&net, &other).unwrap().exact_gradient;
        let diff = closed.first().iter().zip(exact.first()).fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
        assert!(diff > 1e-3);
    }
}
