//! Plain-text experiment configuration.
//!
//! One `key = value` per line, `#` starts a comment. Keys and defaults:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `d`, `k`, `m` | dimension, parity order, width | required |
//! | `steps` | training steps `T` | 25 |
//! | `eta`, `lambda`, `rho` | step size, weight decay, dead zone | 0.1, 1, 0.3 |
//! | `batch` | online batch size `B` | 64 |
//! | `eta2` | second-layer step size, 0 keeps it fixed | 0 |
//! | `second_layer_stat` | `with_label` or `without_label` | `with_label` |
//! | `seed` | master seed | 0 |
//! | `seeds` | repeat runs | 1 |
//! | `delta`, `epsilon` | failure probability, target error | 0.05, 0.1 |
//! | `mode` | `stochastic` or `population` | `stochastic` |
//! | `support` | 1-based feature coordinates, comma separated | `1,...,k` |
//! | `out` | output directory | none |
//! | `checks` | comma list of `dynamics`, `agreement`, `gap`, `drift`, `approximation` | none |
//! | `record` | `none`, `first`, `all` or 0-based neuron indices | `none` |
//! | `workers` | seeds run in parallel | 1 |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{ParityTask, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::optimizer::{SecondLayerStatistic, TrainConfig, TrainMode};
use crate::trace::NeuronSelection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Dynamics,
    Agreement,
    Gap,
    Drift,
    Approximation,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Dynamics => "dynamics",
            Check::Agreement => "agreement",
            Check::Gap => "gap",
            Check::Drift => "drift",
            Check::Approximation => "approximation",
        }
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "dynamics" => Check::Dynamics,
            "agreement" => Check::Agreement,
            "gap" => Check::Gap,
            "drift" => Check::Drift,
            "approximation" => Check::Approximation,
            _ => return Err(format!("unknown check `{s}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub d: usize,
    pub k: usize,
    /// 0-based feature coordinates; `None` means `0..k`.
    pub support: Option<Vec<usize>>,
    pub m: usize,
    /// `train.seed` is the master seed; run `i` uses `run_seed(seed, i)`.
    pub train: TrainConfig,
    pub seeds: usize,
    pub mode: TrainMode,
    /// Left out of reports so they do not depend on where they are written.
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub checks: Vec<Check>,
    /// `None` disables recording.
    pub record: Option<NeuronSelection>,
    pub workers: usize,
}

impl ExperimentSpec {
    pub fn new(d: usize, k: usize, m: usize) -> Self {
        Self {
            d,
            k,
            support: None,
            m,
            train: TrainConfig::default(),
            seeds: 1,
            mode: TrainMode::Stochastic,
            out: None,
            checks: Vec::new(),
            record: None,
            workers: 1,
        }
    }

    pub fn task(&self) -> Result<ParityTask> {
        match &self.support {
            None => ParityTask::new(self.d, self.k),
            Some(s) => {
                let task = ParityTask::with_support(self.d, s.clone())?;
                if task.k() != self.k {
                    return Err(Error::InvalidConfig(format!(
                        "support has {} coordinates but k = {}",
                        task.k(),
                        self.k
                    )));
                }
                Ok(task)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task()?;
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be positive".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if self.checks.contains(&Check::Approximation) && self.d > ENUMERATION_CAP {
            return Err(Error::InvalidConfig(format!(
                "the approximation check enumerates the hypercube and needs d <= {ENUMERATION_CAP}"
            )));
        }
        self.train.validate()
    }

    /// Text form accepted by [`parse_spec`]; every key is written.
    pub fn to_text(&self) -> String {
        let c = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "d = {}\nk = {}\nm = {}", self.d, self.k, self.m);
        if let Some(support) = &self.support {
            let list: Vec<String> = support.iter().map(|j| (j + 1).to_string()).collect();
            let _ = writeln!(s, "support = {}", list.join(","));
        }
        let _ = writeln!(s, "steps = {}", c.steps);
        let _ = writeln!(s, "eta = {:?}\nlambda = {:?}\nrho = {:?}", c.eta, c.lambda, c.rho);
        let _ = writeln!(s, "batch = {}\neta2 = {:?}", c.batch, c.eta2);
        let stat = match c.second_layer_statistic {
            SecondLayerStatistic::WithLabel => "with_label",
            SecondLayerStatistic::WithoutLabel => "without_label",
        };
        let _ = writeln!(s, "second_layer_stat = {stat}");
        let _ = writeln!(s, "seed = {}\nseeds = {}", c.seed, self.seeds);
        let _ = writeln!(s, "delta = {:?}\nepsilon = {:?}", c.delta, c.epsilon);
        let mode = match self.mode {
            TrainMode::Stochastic => "stochastic",
            TrainMode::Population => "population",
        };
        let _ = writeln!(s, "mode = {mode}");
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        let checks: Vec<&str> = self.checks.iter().map(|c| c.name()).collect();
        let _ = writeln!(s, "checks = {}", checks.join(","));
        let record = match &self.record {
            None => "none".to_string(),
            Some(NeuronSelection::First) => "first".to_string(),
            Some(NeuronSelection::All) => "all".to_string(),
            Some(NeuronSelection::Indices(ix)) => ix.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
        };
        let _ = writeln!(s, "record = {record}\nworkers = {}", self.workers);
        s
    }
}

/// Reads and validates a configuration file.
pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec(&text, &path.display().to_string())
}

/// Parses configuration text; `origin` names the source in errors.
pub fn parse_spec(text: &str, origin: &str) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::new(0, 0, 0);
    let (mut d, mut k, mut m) = (None, None, None);
    let mut support = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.into(),
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| parse_err("expected `key = value`".into()))?;
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|e| parse_err(format!("{key}: {e}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse::<usize>().map_err(|e| parse_err(format!("{key}: {e}")))
        };
        match key {
            "d" => d = Some(int(value)?),
            "k" => k = Some(int(value)?),
            "m" => m = Some(int(value)?),
            "steps" => spec.train.steps = int(value)?,
            "eta" => spec.train.eta = num(value)?,
            "lambda" => spec.train.lambda = num(value)?,
            "rho" => spec.train.rho = num(value)?,
            "batch" => spec.train.batch = int(value)?,
            "eta2" => spec.train.eta2 = num(value)?,
            "seed" => {
                spec.train.seed = value.parse().map_err(|e| parse_err(format!("seed: {e}")))?;
            }
            "seeds" => spec.seeds = int(value)?,
            "delta" => spec.train.delta = num(value)?,
            "epsilon" => spec.train.epsilon = num(value)?,
            "workers" => spec.workers = int(value)?,
            "mode" => {
                spec.mode = match value {
                    "stochastic" => TrainMode::Stochastic,
                    "population" => TrainMode::Population,
                    _ => return Err(parse_err(format!("mode must be stochastic or population, got `{value}`"))),
                }
            }
            "second_layer_stat" => {
                spec.train.second_layer_statistic = match value {
                    "with_label" => SecondLayerStatistic::WithLabel,
                    "without_label" => SecondLayerStatistic::WithoutLabel,
                    _ => return Err(parse_err(format!("unknown second-layer statistic `{value}`"))),
                }
            }
            "support" => {
                let coords = split_list(value)
                    .map(|v| match int(v)? {
                        0 => Err(parse_err("support coordinates are 1-based".into())),
                        j => Ok(j - 1),
                    })
                    .collect::<Result<Vec<_>>>()?;
                support = Some(coords);
            }
            "out" => spec.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            "checks" => {
                spec.checks = split_list(value)
                    .map(|v| v.parse::<Check>().map_err(parse_err))
                    .collect::<Result<Vec<_>>>()?;
                spec.checks.sort_unstable();
                spec.checks.dedup();
            }
            "record" => {
                spec.record = match value {
                    "none" | "" => None,
                    "first" => Some(NeuronSelection::First),
                    "all" => Some(NeuronSelection::All),
                    list => Some(NeuronSelection::Indices(split_list(list).map(int).collect::<Result<_>>()?)),
                }
            }
            _ => {
                return Err(Error::UnknownKey {
                    path: origin.into(),
                    line: line_no,
                    key: key.to_string(),
                })
            }
        }
    }
    let missing = |name: &str| Error::InvalidConfig(format!("{origin}: missing required key `{name}`"));
    spec.d = d.ok_or_else(|| missing("d"))?;
    spec.k = k.ok_or_else(|| missing("k"))?;
    spec.m = m.ok_or_else(|| missing("m"))?;
    spec.support = support;
    spec.validate()?;
    Ok(spec)
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Master seed from the value of `PARITY_SEED`, if set and non-empty.
pub fn seed_override(value: Option<&str>) -> Result<Option<u64>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| Error::InvalidConfig(format!("PARITY_SEED = `{v}`: {e}"))),
    }
}

pub const K2_CFG: &str = include_str!("../../configs/k2.cfg");
pub const K3_CFG: &str = include_str!("../../configs/k3.cfg");
pub const K4_CFG: &str = include_str!("../../configs/k4.cfg");

/// Shipped desk-scale configuration for `k` in `2..=4`.
pub fn shipped_spec(k: usize) -> Result<ExperimentSpec> {
    let text = match k {
        2 => K2_CFG,
        3 => K3_CFG,
        4 => K4_CFG,
        _ => return Err(Error::InvalidConfig(format!("no shipped configuration for k = {k}"))),
    };
    parse_spec(text, &format!("k{k}.cfg"))
}
