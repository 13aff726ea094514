//! Per-neuron trajectory files for plotting.

use std::path::PathBuf;

use super::run::initial_network;
use super::spec::ExperimentSpec;
use crate::analysis::CheckOutcome;
use crate::data::ParityTask;
use crate::error::{Error, Result};
use crate::network::classify_neurons;
use crate::optimizer::{train, TrainConfig};
use crate::rng::run_seed;
use crate::trace::{NeuronSelection, TraceOptions, TrajectoryTrace};

/// Which neuron to emit; classes refer to the initial weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronPick {
    Index(usize),
    FirstGood,
    FirstBad,
}

#[derive(Debug, Clone)]
pub struct FigureTraces {
    pub task: ParityTask,
    /// Resolved neuron indices, in pick order.
    pub neurons: Vec<usize>,
    pub trace: TrajectoryTrace,
    /// `neuron_{r}.csv` files, written when the spec has an output directory.
    pub files: Vec<PathBuf>,
}

/// Trains run 0 of `spec`, recording the picked neurons, and writes one CSV
/// per neuron with its class and initial feature signs in the header.
pub fn emit_figure_traces(spec: &ExperimentSpec, picks: &[NeuronPick]) -> Result<FigureTraces> {
    if spec.record.is_none() {
        return Err(Error::Trace("recording is disabled in this configuration".into()));
    }
    spec.validate()?;
    let task = spec.task()?;
    let net0 = initial_network(spec, 0)?;
    let taxonomy = classify_neurons(&net0, &task)?;
    let mut neurons = Vec::with_capacity(picks.len());
    for pick in picks {
        let r = match *pick {
            NeuronPick::Index(r) if r < spec.m => Some(r),
            NeuronPick::Index(_) => None,
            NeuronPick::FirstGood => taxonomy.good.first().copied(),
            NeuronPick::FirstBad => taxonomy.bad.first().copied(),
        };
        neurons.push(r.ok_or_else(|| Error::Trace(format!("no neuron matches {pick:?} in run 0")))?);
    }
    let mut unique = neurons.clone();
    unique.sort_unstable();
    unique.dedup();
    let cfg = TrainConfig {
        seed: run_seed(spec.train.seed, 0),
        ..spec.train.clone()
    };
    let mut trace = TrajectoryTrace::new(TraceOptions {
        neurons: NeuronSelection::Indices(unique.clone()),
        population_signs: false,
    });
    train(&task, &net0, &cfg, spec.mode, Some(&mut trace))?;

    let mut files = Vec::new();
    if let Some(dir) = &spec.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for &r in &unique {
            let path = dir.join(format!("neuron_{r}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            trace.write_neuron_csv(std::io::BufWriter::new(file), r)?;
            files.push(path);
        }
    }
    Ok(FigureTraces {
        task,
        neurons,
        trace,
        files,
    })
}

/// Relative allowance at the edges of the feature band, for values like
/// `0.8999999999999999` produced by `0.9 * 1.0` style rounding.
const BAND_ROUNDING: f64 = 1e-12;

/// Qualitative trajectory shape of neuron `r`: a good neuron keeps every
/// feature coordinate within `[0.9, 1.1]` times its initial value and ends
/// with noise coordinates below 0.05; a bad neuron ends with every
/// coordinate below 0.05.
pub fn check_figure_trace(trace: &TrajectoryTrace, task: &ParityTask, r: usize) -> Result<Vec<CheckOutcome>> {
    let taxonomy = trace
        .taxonomy()
        .ok_or_else(|| Error::Trace("trace has no neuron classes".into()))?;
    let last = trace
        .steps()
        .last()
        .ok_or_else(|| Error::Trace("trace holds no steps".into()))?;
    let slot = trace
        .neurons()
        .iter()
        .position(|&n| n == r)
        .ok_or_else(|| Error::Trace(format!("neuron {r} was not recorded")))?;
    let final_w = &last.weights[slot];
    let mut out = Vec::new();
    let decayed = |name: &str, coords: Vec<usize>| {
        let worst = coords.iter().map(|&j| final_w[j].abs()).fold(0.0, f64::max);
        CheckOutcome::new(
            name,
            worst < 0.05,
            0.05 - worst,
            format!("neuron {r}: largest |w| at t={} is {worst:.4e}", last.t),
        )
    };
    if taxonomy.is_good(r) {
        let mut slack = f64::INFINITY;
        for &j in task.support() {
            let series = trace.series(r, j).expect("recorded neuron");
            let w0 = series[0];
            for w in &series {
                let ratio = w / w0;
                slack = slack.min((ratio - 0.9).min(1.1 - ratio));
            }
        }
        out.push(CheckOutcome::new(
            "good_feature_band",
            slack >= -BAND_ROUNDING,
            slack,
            format!("neuron {r}: feature ratios within [0.9, 1.1] by {slack:.4e}"),
        ));
        let noise = (0..task.d()).filter(|&j| !task.is_feature(j)).collect();
        out.push(decayed("good_noise_decayed", noise));
    } else {
        out.push(decayed("bad_decayed", (0..task.d()).collect()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::spec::shipped_spec;
    use crate::optimizer::TrainMode;

    #[test]
    fn recording_must_be_enabled() {
        let spec = shipped_spec(2).unwrap();
        assert!(emit_figure_traces(&spec, &[NeuronPick::FirstGood]).is_err());
    }

    #[test]
    fn population_noise_is_geometric() {
        let mut spec = shipped_spec(2).unwrap();
        spec.mode = TrainMode::Population;
        spec.record = Some(NeuronSelection::First);
        let figs = emit_figure_traces(&spec, &[NeuronPick::FirstGood, NeuronPick::FirstBad]).unwrap();
        let good = figs.neurons[0];
        for j in 2..8 {
            let series = figs.trace.series(good, j).unwrap();
            for (t, w) in series.iter().enumerate() {
                assert!((w.abs() - 0.9f64.powi(t as i32)).abs() <= 1e-15, "t={t} {w}");
            }
            for pair in series.windows(2) {
                assert_eq!(pair[1], 0.9 * pair[0]);
            }
        }
        let checks = check_figure_trace(&figs.trace, &figs.task, good).unwrap();
        assert!(checks[0].passed);
        // 0.9^25 = 0.0718, above the 0.05 threshold.
        assert!(!checks[1].passed);
    }

    #[test]
    fn writes_one_file_per_neuron() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = shipped_spec(2).unwrap();
        spec.record = Some(NeuronSelection::First);
        spec.out = Some(dir.path().to_path_buf());
        let figs = emit_figure_traces(&spec, &[NeuronPick::FirstBad, NeuronPick::Index(3), NeuronPick::Index(3)]).unwrap();
        assert_eq!(figs.files.len(), if figs.neurons[0] == 3 { 1 } else { 2 });
        let text = std::fs::read_to_string(&figs.files[0]).unwrap();
        assert!(text.starts_with("# neuron="));
        assert!(text.contains("class="));
        assert!(emit_figure_traces(&spec, &[NeuronPick::Index(12)]).is_err());
    }
}
