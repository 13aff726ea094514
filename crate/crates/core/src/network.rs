//! Two-layer network `f(W, x) = sum_r a_r * <w_r, x>^k` without biases.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::RngCore;

use crate::data::{ParityTask, Sample};
use crate::error::{Error, Result};
use crate::oracle;
use crate::rng::SignStream;

/// Whether the second layer is frozen at its initial signs or trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondLayer {
    #[default]
    Fixed,
    Trainable,
}

impl SecondLayer {
    fn as_str(self) -> &'static str {
        match self {
            SecondLayer::Fixed => "fixed",
            SecondLayer::Trainable => "trainable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    m: usize,
    d: usize,
    k: usize,
    /// Row-major `m x d`.
    weights: Vec<f64>,
    second: Vec<f64>,
    layer: SecondLayer,
}

/// `z^k` by repeated multiplication so the result does not depend on the
/// platform `powi`.
#[inline]
pub fn pow_k(z: f64, k: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..k {
        acc *= z;
    }
    acc
}

/// Coordinates `[0, split)` and `[split, d)` form the two blocks of every inner
/// product. The exact oracle tabulates block partial sums, so forward passes
/// and enumeration agree bit for bit.
#[inline]
pub(crate) fn split_point(d: usize) -> usize {
    d / 2
}

#[inline]
pub(crate) fn block_dot(w: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in w.iter().zip(x) {
        acc += a * b;
    }
    acc
}

impl Network {
    pub fn from_parts(
        m: usize,
        d: usize,
        k: usize,
        weights: Vec<f64>,
        second: Vec<f64>,
        layer: SecondLayer,
    ) -> Result<Self> {
        if m == 0 || d == 0 || k == 0 {
            return Err(Error::InvalidSize(format!("m={m}, d={d}, k={k} must all be positive")));
        }
        if weights.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                actual: weights.len(),
            });
        }
        if second.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: second.len(),
            });
        }
        if weights.iter().chain(&second).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        if layer == SecondLayer::Fixed && second.iter().any(|&a| a != 1.0 && a != -1.0) {
            return Err(Error::InvalidConfig(
                "fixed second layer values must be -1 or +1".into(),
            ));
        }
        Ok(Self {
            m,
            d,
            k,
            weights,
            second,
            layer,
        })
    }

    /// Binary initialization: every first-layer entry, then every second-layer
    /// value, drawn uniformly from {-1, +1} off one bit stream.
    pub fn init_binary<R: RngCore>(m: usize, d: usize, k: usize, rng: R) -> Result<Self> {
        if m == 0 || d == 0 || k == 0 {
            return Err(Error::InvalidSize(format!("m={m}, d={d}, k={k} must all be positive")));
        }
        let mut bits = SignStream::new(rng);
        let mut weights = vec![0.0; m * d];
        bits.fill(&mut weights);
        let mut second = vec![0.0; m];
        bits.fill(&mut second);
        Ok(Self {
            m,
            d,
            k,
            weights,
            second,
            layer: SecondLayer::Fixed,
        })
    }

    /// The constructed network with one neuron per sign pattern of the first
    /// `k` coordinates, zero-padded to `d` columns.
    pub fn good_network(k: usize, d: usize) -> Result<Self> {
        let support: Vec<usize> = (0..k).collect();
        Self::good_network_on(k, d, &support)
    }

    /// Good network placed on the support of `task`.
    pub fn good_network_for(task: &ParityTask) -> Result<Self> {
        Self::good_network_on(task.k(), task.d(), task.support())
    }

    fn good_network_on(k: usize, d: usize, support: &[usize]) -> Result<Self> {
        if !(1..=20).contains(&k) {
            return Err(Error::OutOfRange(format!("good network needs 1 <= k <= 20, got {k}")));
        }
        if d < k {
            return Err(Error::InvalidSize(format!("cannot pad k={k} columns into d={d}")));
        }
        let m = 1usize << k;
        let mut weights = vec![0.0; m * d];
        let mut second = vec![0.0; m];
        for (pattern, a) in second.iter_mut().enumerate() {
            let row = &mut weights[pattern * d..(pattern + 1) * d];
            let mut product = 1.0;
            for (i, &j) in support.iter().enumerate() {
                let sign = if (pattern >> (k - 1 - i)) & 1 == 0 { 1.0 } else { -1.0 };
                row[j] = sign;
                product *= sign;
            }
            *a = product;
        }
        Ok(Self {
            m,
            d,
            k,
            weights,
            second,
            layer: SecondLayer::Fixed,
        })
    }

    pub fn with_second_layer(mut self, layer: SecondLayer) -> Self {
        self.layer = layer;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn second_layer(&self) -> SecondLayer {
        self.layer
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.d..(r + 1) * self.d]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.weights[r * self.d..(r + 1) * self.d]
    }

    pub fn a(&self) -> &[f64] {
        &self.second
    }

    pub(crate) fn a_mut(&mut self) -> &mut [f64] {
        &mut self.second
    }

    pub fn preactivation(&self, r: usize, x: &[f64]) -> f64 {
        let w = self.row(r);
        let s = split_point(self.d);
        block_dot(&w[..s], &x[..s]) + block_dot(&w[s..], &x[s..])
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: x.len(),
            });
        }
        let f = self.forward_unchecked(x);
        if !f.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(f)
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for r in 0..self.m {
            f += self.second[r] * pow_k(self.preactivation(r, x), self.k);
        }
        f
    }

    /// `y * f(W, x)`.
    pub fn margin(&self, sample: &Sample) -> Result<f64> {
        Ok(sample.y * self.forward(&sample.x)?)
    }

    pub fn row_norm(&self, r: usize) -> f64 {
        self.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Serializes as `m d k mode`, then `m` weight rows, then the second layer.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.m, self.d, self.k, self.layer.as_str());
        for r in 0..self.m {
            push_row(&mut out, self.row(r));
        }
        push_row(&mut out, &self.second);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("network text: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty input".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 4 {
            return Err(bad(format!("header needs 4 fields, got {}", header.len())));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("{s:?}: {e}")));
        let (m, d, k) = (parse_usize(header[0])?, parse_usize(header[1])?, parse_usize(header[2])?);
        let layer = match header[3] {
            "fixed" => SecondLayer::Fixed,
            "trainable" => SecondLayer::Trainable,
            other => return Err(bad(format!("unknown mode {other:?}"))),
        };
        let mut parse_row = |len: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad("truncated input".into()))?;
            let row = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != len {
                return Err(bad(format!("row has {} values, expected {len}", row.len())));
            }
            Ok(row)
        };
        let mut weights = Vec::with_capacity(m * d);
        for _ in 0..m {
            weights.extend(parse_row(d)?);
        }
        let second = parse_row(m)?;
        Self::from_parts(m, d, k, weights, second, layer)
    }
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

/// Good/bad split of the neurons and their grouping by initial feature signs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronTaxonomy {
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
    /// Keyed by the initial signs of the feature coordinates, in support order.
    pub sign_groups: BTreeMap<Vec<i8>, Vec<usize>>,
    m: usize,
    k: usize,
}

impl NeuronTaxonomy {
    pub fn is_good(&self, r: usize) -> bool {
        self.good.binary_search(&r).is_ok()
    }

    /// Concentration radius for group sizes at failure probability `delta`.
    pub fn alpha(&self, delta: f64) -> f64 {
        concentration_radius(self.m, self.k, delta)
    }

    /// Sizes of `group ∩ good` and `group ∩ bad` for each sign pattern.
    pub fn group_counts(&self) -> BTreeMap<Vec<i8>, (usize, usize)> {
        self.sign_groups
            .iter()
            .map(|(pattern, members)| {
                let good = members.iter().filter(|&&r| self.is_good(r)).count();
                (pattern.clone(), (good, members.len() - good))
            })
            .collect()
    }
}

pub fn concentration_radius(m: usize, k: usize, delta: f64) -> f64 {
    let groups = 2f64.powi(k as i32 + 1);
    (3.0 * groups * (2.0 * groups / delta).ln() / m as f64).sqrt()
}

/// Classifies neurons from their initial weights: a neuron is good when its
/// second-layer sign equals the product of its initial feature signs.
pub fn classify_neurons(net_at_init: &Network, task: &ParityTask) -> Result<NeuronTaxonomy> {
    if net_at_init.d() != task.d() {
        return Err(Error::DimensionMismatch {
            expected: task.d(),
            actual: net_at_init.d(),
        });
    }
    let mut good = Vec::new();
    let mut bad = Vec::new();
    let mut sign_groups: BTreeMap<Vec<i8>, Vec<usize>> = BTreeMap::new();
    for r in 0..net_at_init.m() {
        let row = net_at_init.row(r);
        let mut pattern = Vec::with_capacity(task.k());
        for &j in task.support() {
            let w = row[j];
            if w == 0.0 || !w.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "neuron {r} has feature weight {w} at coordinate {j}; classification needs initial weights"
                )));
            }
            pattern.push(if w > 0.0 { 1i8 } else { -1 });
        }
        let product: i8 = pattern.iter().product();
        let a = net_at_init.a()[r];
        if (a > 0.0 && product > 0) || (a < 0.0 && product < 0) {
            good.push(r);
        } else {
            bad.push(r);
        }
        sign_groups.entry(pattern).or_default().push(r);
    }
    Ok(NeuronTaxonomy {
        good,
        bad,
        sign_groups,
        m: net_at_init.m(),
        k: task.k(),
    })
}

/// How test accuracy is measured.
pub enum AccuracyMode<R> {
    /// Average over the whole hypercube.
    Exact,
    MonteCarlo { samples: usize, rng: R },
}

/// Fraction of inputs with `sign(f) == y`. Zero outputs count as errors.
pub fn test_accuracy<R: RngCore>(
    net: &Network,
    task: &ParityTask,
    mode: AccuracyMode<R>,
) -> Result<f64> {
    match mode {
        AccuracyMode::Exact => oracle::exact_accuracy(net, task),
        AccuracyMode::MonteCarlo { samples, rng } => {
            let batch = task.sample_batch(samples, rng)?;
            let mut correct = 0usize;
            for s in &batch {
                if s.y * net.forward(&s.x)? > 0.0 {
                    correct += 1;
                }
            }
            Ok(correct as f64 / samples as f64)
        }
    }
}
