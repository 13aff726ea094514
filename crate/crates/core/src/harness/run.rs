//! Multi-seed experiment runs and their reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::spec::{Check, ExperimentSpec};
use crate::analysis::{
    approximation_ratio, check_population_dynamics, measure_gradient_gap, required_steps,
    second_layer_drift, sign_agreement, CheckOutcome,
};
use crate::data::ParityTask;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::optimizer::{train, validate_condition, ConditionWarning, TrainConfig, TrainReport};
use crate::rng::{run_seed, stream, Purpose};
use crate::trace::{TraceOptions, TrajectoryTrace};

pub const REPORT_SCHEMA: u32 = 1;

/// Batches drawn by the gradient-gap check.
pub const GAP_BATCHES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; absent for a single seed.
    pub std: Option<f64>,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub run: usize,
    pub seed: u64,
    pub train: TrainReport,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: u32,
    pub spec: ExperimentSpec,
    pub seeds: Vec<SeedReport>,
    /// Over the completed seeds.
    pub accuracy: Option<Aggregate>,
    pub large_margin_fraction: Option<Aggregate>,
    pub samples_per_seed: u64,
    pub condition_warnings: Vec<ConditionWarning>,
    /// Set when a seed errored; the seeds before it are still reported.
    pub failure: Option<String>,
    /// Kept out of every written file so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    pub traces: Vec<TrajectoryTrace>,
}

impl RunReport {
    pub fn all_checks_passed(&self) -> bool {
        self.seeds.iter().flat_map(|s| &s.checks).all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let c = &s.train;
        let mut out = String::new();
        let _ = writeln!(out, "schema {REPORT_SCHEMA}");
        let _ = writeln!(
            out,
            "task d={} k={} support={:?}  network m={}",
            s.d,
            s.k,
            s.task().map(|t| t.support().iter().map(|j| j + 1).collect::<Vec<_>>()).unwrap_or_default(),
            s.m
        );
        let _ = writeln!(
            out,
            "train mode={:?} T={} eta={} lambda={} rho={} B={} eta2={} master_seed={}",
            s.mode, c.steps, c.eta, c.lambda, c.rho, c.batch, c.eta2, c.seed
        );
        let _ = writeln!(out, "samples per seed {}", self.samples_per_seed);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>4} {:>20} {:>10} {:>12} {:>5} {:>5}", "run", "seed", "accuracy", "large_margin", "good", "bad");
        for r in &self.seeds {
            let t = &r.train;
            let _ = writeln!(
                out,
                "{:>4} {:>20} {:>10.6} {:>12.6} {:>5} {:>5}",
                r.run,
                r.seed,
                t.test_accuracy,
                t.large_margin_fraction,
                t.good_neurons.map_or("-".into(), |g| g.to_string()),
                t.bad_neurons.map_or("-".into(), |b| b.to_string()),
            );
        }
        let eval = match self.seeds.first() {
            Some(r) if r.train.exact_evaluation => "exact",
            Some(_) => "monte carlo",
            None => "none",
        };
        if let Some(a) = &self.accuracy {
            let _ = writeln!(out, "\naccuracy ({eval}) {}", fmt_aggregate(a, 100.0, "%"));
        }
        if let (Some(a), Some(r)) = (&self.large_margin_fraction, self.seeds.first()) {
            let _ = writeln!(
                out,
                "P(y f >= {} m) {}",
                r.train.gamma,
                fmt_aggregate(a, 1.0, "")
            );
        }
        if !self.condition_warnings.is_empty() {
            let _ = writeln!(out, "\ncondition warnings:");
            for w in &self.condition_warnings {
                let _ = writeln!(out, "  {:?}: {}", w.bullet, w.message);
            }
        }
        let checks: Vec<_> = self.seeds.iter().flat_map(|r| r.checks.iter().map(move |c| (r.run, c))).collect();
        if !checks.is_empty() {
            let _ = writeln!(out, "\nchecks:");
            for (run, c) in checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                let _ = writeln!(out, "  run {run} {} {verdict} slack={:.6e} {}", c.name, c.slack, c.detail);
            }
        }
        if let Some(f) = &self.failure {
            let _ = writeln!(out, "\nFAILED: {f}");
        }
        out
    }

    /// Writes `report.json`, `report.txt` and one `trace_run{i}.csv` per
    /// recorded run into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        written.push(json);
        let text = dir.join("report.txt");
        std::fs::write(&text, self.to_text()).map_err(|e| Error::io(&text, e))?;
        written.push(text);
        for (run, trace) in self.traces.iter().enumerate() {
            let path = dir.join(format!("trace_run{run}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            trace.write_csv(std::io::BufWriter::new(file))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn fmt_aggregate(a: &Aggregate, scale: f64, unit: &str) -> String {
    match a.std {
        Some(std) => format!("{:.2}{unit} +- {:.2}{unit}", a.mean * scale, std * scale),
        None => format!("{:.2}{unit}", a.mean * scale),
    }
}

struct SeedOutcome {
    report: SeedReport,
    trace: Option<TrajectoryTrace>,
}

/// Initial network of run `run`.
pub fn initial_network(spec: &ExperimentSpec, run: usize) -> Result<Network> {
    let seed = run_seed(spec.train.seed, run);
    Network::init_binary(spec.m, spec.d, spec.k, stream(seed, Purpose::Init, 0))
}

fn run_one(spec: &ExperimentSpec, task: &ParityTask, run: usize) -> Result<SeedOutcome> {
    let seed = run_seed(spec.train.seed, run);
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let net0 = initial_network(spec, run)?;
    let wants_trace = spec.record.is_some() || spec.checks.contains(&Check::Drift);
    let mut trace = wants_trace.then(|| {
        TrajectoryTrace::new(TraceOptions {
            neurons: spec.record.clone().unwrap_or_default(),
            population_signs: false,
        })
    });
    let (trained, train_report) = train(task, &net0, &cfg, spec.mode, trace.as_mut())?;

    let mut checks = Vec::new();
    for check in &spec.checks {
        match check {
            Check::Dynamics => {
                let steps = required_steps(task.k(), task.d(), cfg.eta, cfg.lambda).ceil() as usize;
                let report = check_population_dynamics(task, &net0, &cfg, steps)?;
                let note = if report.preconditions.is_empty() {
                    String::new()
                } else {
                    format!(" preconditions violated: {}", report.preconditions.join("; "))
                };
                for mut outcome in [report.good_features_frozen, report.bad_features_contract, report.small_after_training] {
                    outcome.detail.push_str(&note);
                    checks.push(outcome);
                }
            }
            Check::Agreement => {
                let report = sign_agreement(task, &net0, &cfg, spec.mode)?;
                checks.push(CheckOutcome::new(
                    "sign_agreement",
                    report.full_agreement(),
                    report.per_step.iter().copied().fold(1.0, f64::min) - 1.0,
                    format!("mean agreement {:.6}, identical trajectories {}", report.mean(), report.trajectories_identical),
                ));
            }
            Check::Gap => {
                let report = measure_gradient_gap(task, &net0, &cfg, GAP_BATCHES)?;
                let fraction = report.fraction_within_bound();
                let target = 1.0 - cfg.delta;
                checks.push(CheckOutcome::new(
                    "gradient_gap",
                    fraction >= target,
                    fraction - target,
                    format!(
                        "median gap {:.4e}, max gap {:.4e}, epsilon1 {:.4e}",
                        report.median_gap(),
                        report.max_gap(),
                        report.epsilon1
                    ),
                ));
            }
            Check::Drift => {
                let trace = trace.as_ref().ok_or_else(|| Error::Trace("drift check needs a trace".into()))?;
                let report = second_layer_drift(trace, cfg.eta2, cfg.steps, task.k())?;
                let bound = match report.within_c {
                    Some(_) => (cfg.eta2 * cfg.steps as f64).min(report.c),
                    None => cfg.eta2 * cfg.steps as f64,
                };
                checks.push(CheckOutcome::new(
                    "second_layer_drift",
                    report.passed(),
                    bound - report.max_drift,
                    format!(
                        "max drift {:.4e}, c {:.4e}, signs preserved {}",
                        report.max_drift, report.c, report.signs_preserved
                    ),
                ));
            }
            Check::Approximation => {
                let ratio = approximation_ratio(&trained, task)?;
                let target = 1.0 - cfg.epsilon;
                checks.push(CheckOutcome::new(
                    "approximation",
                    ratio >= target,
                    ratio - target,
                    format!("fraction of inputs with ratio in [0.5, 1.5]: {ratio:.6}"),
                ));
            }
        }
    }
    Ok(SeedOutcome {
        report: SeedReport {
            run,
            seed,
            train: train_report,
            checks,
        },
        trace: trace.filter(|_| spec.record.is_some()),
    })
}

/// Runs every seed of `spec`, writes the reports to `spec.out` when set and
/// returns the aggregate. Seeds run on `spec.workers` threads; results are
/// merged in seed order, so the output does not depend on the worker count.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    let task = spec.task()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {} workers: {e}", spec.workers)))?;
    let outcomes: Vec<Result<SeedOutcome>> =
        pool.install(|| (0..spec.seeds).into_par_iter().map(|run| run_one(spec, &task, run)).collect());

    let mut seeds = Vec::new();
    let mut traces = Vec::new();
    let mut error = None;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                seeds.push(o.report);
                traces.extend(o.trace);
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    let accuracies: Vec<f64> = seeds.iter().map(|s| s.train.test_accuracy).collect();
    let margins: Vec<f64> = seeds.iter().map(|s| s.train.large_margin_fraction).collect();
    let report = RunReport {
        schema: REPORT_SCHEMA,
        spec: spec.clone(),
        accuracy: (!seeds.is_empty()).then(|| Aggregate::of(&accuracies)),
        large_margin_fraction: (!seeds.is_empty()).then(|| Aggregate::of(&margins)),
        seeds,
        samples_per_seed: match spec.mode {
            crate::optimizer::TrainMode::Stochastic => spec.train.batch as u64 * spec.train.steps as u64,
            crate::optimizer::TrainMode::Population => 0,
        },
        condition_warnings: validate_condition(&task, spec.m, &spec.train),
        failure: error.as_ref().map(|e| e.to_string()),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        traces,
    };
    if let Some(dir) = &spec.out {
        report.write(dir)?;
    }
    match error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
