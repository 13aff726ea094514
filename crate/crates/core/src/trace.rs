//! Per-step recording of neuron trajectories.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::ParityTask;
use crate::error::{Error, Result};
use crate::network::{Network, NeuronTaxonomy};
use crate::optimizer::GradientEstimate;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronSelection {
    /// Neuron 0 only.
    #[default]
    First,
    All,
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    pub neurons: NeuronSelection,
    /// Also evaluate the closed-form population signs at the recorded weights
    /// and the fraction of all `(r, j)` on which they agree with the signs used.
    pub population_signs: bool,
}

/// Largest absolute weight per neuron class at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregates {
    pub max_bad: f64,
    pub max_good_noise: f64,
    pub max_good_feature_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Weight vectors of the selected neurons, in selection order.
    pub weights: Vec<Vec<f64>>,
    /// Second-layer values of every neuron.
    pub a: Vec<f64>,
    /// Signs applied at this step; absent on the final snapshot.
    pub sign_stoch: Option<Vec<Vec<f64>>>,
    pub sign_pop: Option<Vec<Vec<f64>>>,
    /// Fraction of all `(r, j)` where the applied and population signs agree.
    pub agreement: Option<f64>,
    pub aggregates: Option<ClassAggregates>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryTrace {
    options: TraceOptions,
    neurons: Vec<usize>,
    d: usize,
    initial: Option<Network>,
    support: Vec<usize>,
    taxonomy: Option<NeuronTaxonomy>,
    steps: Vec<StepRecord>,
}

impl TrajectoryTrace {
    pub fn new(options: TraceOptions) -> Self {
        Self {
            options,
            neurons: Vec::new(),
            d: 0,
            initial: None,
            support: Vec::new(),
            taxonomy: None,
            steps: Vec::new(),
        }
    }

    pub fn wants_population_signs(&self) -> bool {
        self.options.population_signs
    }

    pub fn neurons(&self) -> &[usize] {
        &self.neurons
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn taxonomy(&self) -> Option<&NeuronTaxonomy> {
        self.taxonomy.as_ref()
    }

    pub fn initial(&self) -> Option<&Network> {
        self.initial.as_ref()
    }

    pub(crate) fn begin(
        &mut self,
        net: &Network,
        taxonomy: Option<NeuronTaxonomy>,
        task: &ParityTask,
    ) -> Result<()> {
        self.neurons = match &self.options.neurons {
            NeuronSelection::First => vec![0],
            NeuronSelection::All => (0..net.m()).collect(),
            NeuronSelection::Indices(ix) => ix.clone(),
        };
        if let Some(&r) = self.neurons.iter().find(|&&r| r >= net.m()) {
            return Err(Error::Trace(format!("neuron {r} out of range for m = {}", net.m())));
        }
        self.d = net.d();
        self.initial = Some(net.clone());
        self.support = task.support().to_vec();
        self.taxonomy = taxonomy;
        self.steps.clear();
        Ok(())
    }

    pub(crate) fn record(
        &mut self,
        t: usize,
        net: &Network,
        applied: Option<&GradientEstimate>,
        population: Option<&GradientEstimate>,
        rho: f64,
    ) -> Result<()> {
        if let Some(last) = self.steps.last() {
            if t <= last.t {
                return Err(Error::Trace(format!("step {t} recorded after step {}", last.t)));
            }
        }
        let select = |signs: &[f64]| -> Vec<Vec<f64>> {
            self.neurons
                .iter()
                .map(|&r| signs[r * self.d..(r + 1) * self.d].to_vec())
                .collect()
        };
        let applied_signs = applied.map(|g| g.signs(rho)).transpose()?;
        let pop_signs = population.map(|g| g.signs(rho)).transpose()?;
        let agreement = match (&applied_signs, &pop_signs) {
            (Some(a), Some(p)) => {
                let same = a.iter().zip(p).filter(|(x, y)| x == y).count();
                Some(same as f64 / a.len() as f64)
            }
            _ => None,
        };
        let aggregates = self.taxonomy.as_ref().map(|tax| {
            let initial = self.initial.as_ref().expect("begin() sets the initial network");
            let mut agg = ClassAggregates {
                max_bad: 0.0,
                max_good_noise: 0.0,
                max_good_feature_deviation: 0.0,
            };
            for &r in &tax.bad {
                for &w in net.row(r) {
                    agg.max_bad = agg.max_bad.max(w.abs());
                }
            }
            for &r in &tax.good {
                for (j, &w) in net.row(r).iter().enumerate() {
                    if self.support.binary_search(&j).is_ok() {
                        let dev = (w - initial.row(r)[j]).abs();
                        agg.max_good_feature_deviation = agg.max_good_feature_deviation.max(dev);
                    } else {
                        agg.max_good_noise = agg.max_good_noise.max(w.abs());
                    }
                }
            }
            agg
        });
        self.steps.push(StepRecord {
            t,
            weights: self.neurons.iter().map(|&r| net.row(r).to_vec()).collect(),
            a: net.a().to_vec(),
            sign_stoch: applied_signs.as_deref().map(select),
            sign_pop: pop_signs.as_deref().map(select),
            agreement,
            aggregates,
        });
        Ok(())
    }

    /// Series of neuron `r`'s coordinate `j` over the recorded steps.
    pub fn series(&self, r: usize, j: usize) -> Option<Vec<f64>> {
        let slot = self.neurons.iter().position(|&n| n == r)?;
        Some(self.steps.iter().map(|s| s.weights[slot][j]).collect())
    }

    /// CSV with header `t,neuron,coord,value,kind`; `kind` is one of
    /// `weight`, `a`, `sign_stoch`, `sign_pop`. Second-layer rows leave
    /// `coord` empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_rows(out, None)
    }

    /// Same format restricted to one recorded neuron, preceded by `#` comment
    /// lines describing its class and initial signs.
    pub fn write_neuron_csv<W: Write>(&self, mut out: W, r: usize) -> Result<()> {
        if !self.neurons.contains(&r) {
            return Err(Error::Trace(format!("neuron {r} was not recorded")));
        }
        let io = |e| Error::io("<trace>", e);
        if let (Some(net), Some(tax)) = (&self.initial, &self.taxonomy) {
            let class = if tax.is_good(r) { "good" } else { "bad" };
            let pattern: Vec<String> = self
                .support
                .iter()
                .map(|&j| format!("{:+}", net.row(r)[j]))
                .collect();
            writeln!(out, "# neuron={r} class={class}").map_err(io)?;
            writeln!(out, "# init_feature_signs={} a0={:+}", pattern.join(","), net.a()[r]).map_err(io)?;
            writeln!(
                out,
                "# feature_coords={}",
                self.support.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")
            )
            .map_err(io)?;
        }
        self.write_rows(out, Some(r))
    }

    fn write_rows<W: Write>(&self, mut out: W, only: Option<usize>) -> Result<()> {
        let io = |e| Error::io("<trace>", e);
        writeln!(out, "t,neuron,coord,value,kind").map_err(io)?;
        for step in &self.steps {
            for (slot, &r) in self.neurons.iter().enumerate() {
                if only.is_some_and(|o| o != r) {
                    continue;
                }
                for (j, v) in step.weights[slot].iter().enumerate() {
                    writeln!(out, "{},{r},{j},{},weight", step.t, fmt17(*v)).map_err(io)?;
                }
                writeln!(out, "{},{r},,{},a", step.t, fmt17(step.a[r])).map_err(io)?;
                for (signs, kind) in [(&step.sign_stoch, "sign_stoch"), (&step.sign_pop, "sign_pop")] {
                    if let Some(signs) = signs {
                        for (j, v) in signs[slot].iter().enumerate() {
                            writeln!(out, "{},{r},{j},{},{kind}", step.t, fmt17(*v)).map_err(io)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{train, TrainConfig, TrainMode};
    use crate::rng::{stream, Purpose};

    #[test]
    fn records_every_step_and_final_snapshot() {
        let task = ParityTask::new(6, 2).unwrap();
        let net = Network::init_binary(4, 6, 2, stream(1, Purpose::Init, 0)).unwrap();
        let cfg = TrainConfig {
            steps: 5,
            seed: 1,
            ..Default::default()
        };
        let mut trace = TrajectoryTrace::new(TraceOptions {
            neurons: NeuronSelection::Indices(vec![0, 2]),
            population_signs: true,
        });
        train(&task, &net, &cfg, TrainMode::Stochastic, Some(&mut trace)).unwrap();
        assert_eq!(trace.steps().len(), 6);
        assert!(trace.steps().windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(trace.steps()[0].weights[1], net.row(2));
        assert!(trace.steps()[5].sign_stoch.is_none());
        assert!(trace.steps()[..5].iter().all(|s| s.agreement.is_some()));
        assert!(trace.steps().iter().all(|s| s.weights.iter().all(|w| w.len() == 6)));

        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,neuron,coord,value,kind"));
        // Per step: 2 neurons x (6 weights + 1 a + 6 + 6 signs), final step without signs.
        assert_eq!(text.lines().count(), 1 + 5 * 2 * 19 + 2 * 7);
        assert!(text.contains("0,0,0,"));
        assert!(text.lines().nth(1).unwrap().split(',').nth(3).unwrap().len() >= 17);
    }

    #[test]
    fn rejects_out_of_range_neuron() {
        let task = ParityTask::new(4, 2).unwrap();
        let net = Network::init_binary(3, 4, 2, stream(1, Purpose::Init, 0)).unwrap();
        let mut trace = TrajectoryTrace::new(TraceOptions {
            neurons: NeuronSelection::Indices(vec![3]),
            population_signs: false,
        });
        let cfg = TrainConfig::default();
        assert!(train(&task, &net, &cfg, TrainMode::Population, Some(&mut trace)).is_err());
    }

    #[test]
    fn fmt17_has_seventeen_significant_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
