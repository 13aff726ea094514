//! Sign SGD with weight decay and a dead-zone sign.
//!
//! The training signal for neuron `r`, coordinate `j` is the correlation
//! statistic `mean(sigma'(<w_r, x>) * a_r * y * x_j)`; the step moves each
//! weight by `eta * tilde_sign(statistic)` after shrinking it by `1 - eta * lambda`.

use serde::{Deserialize, Serialize};

use crate::data::{ParityTask, Sample, ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::network::{classify_neurons, pow_k, test_accuracy, AccuracyMode, Network, SecondLayer};
use crate::oracle;
use crate::rng::{stream, Purpose};
use crate::trace::TrajectoryTrace;

/// Statistic driving the second-layer update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondLayerStatistic {
    /// `mean(y * sigma(<w_r, x>))`, the correlation-loss gradient.
    #[default]
    WithLabel,
    /// `mean(sigma(<w_r, x>))`, as printed in the trainable-layer update rule.
    WithoutLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda: f64,
    pub rho: f64,
    pub batch: usize,
    pub steps: usize,
    /// Second-layer step size; zero keeps the second layer fixed.
    pub eta2: f64,
    pub seed: u64,
    pub delta: f64,
    pub epsilon: f64,
    pub second_layer_statistic: SecondLayerStatistic,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            lambda: 1.0,
            rho: 0.3,
            batch: 64,
            steps: 25,
            eta2: 0.0,
            seed: 0,
            delta: 0.05,
            epsilon: 0.1,
            second_layer_statistic: SecondLayerStatistic::WithLabel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta must be a finite non-negative number, got {}", self.eta));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.eta * self.lambda >= 1.0 {
            return bad(format!(
                "eta * lambda = {} must be below 1",
                self.eta * self.lambda
            ));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.batch == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.eta2.is_finite() && self.eta2 >= 0.0) {
            return bad(format!("eta2 must be non-negative, got {}", self.eta2));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        Ok(())
    }

    pub fn decay(&self) -> f64 {
        1.0 - self.eta * self.lambda
    }

    pub fn trains_second_layer(&self) -> bool {
        self.eta2 > 0.0
    }
}

/// Per-neuron, per-coordinate statistic, plus the per-neuron second-layer
/// statistic when the second layer is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    m: usize,
    d: usize,
    first: Vec<f64>,
    second: Option<Vec<f64>>,
}

impl GradientEstimate {
    pub fn from_parts(m: usize, d: usize, first: Vec<f64>, second: Option<Vec<f64>>) -> Self {
        assert_eq!(first.len(), m * d);
        if let Some(s) = &second {
            assert_eq!(s.len(), m);
        }
        Self { m, d, first, second }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn first(&self) -> &[f64] {
        &self.first
    }

    pub fn get(&self, r: usize, j: usize) -> f64 {
        self.first[r * self.d + j]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.first[r * self.d..(r + 1) * self.d]
    }

    pub fn second(&self) -> Option<&[f64]> {
        self.second.as_deref()
    }

    fn check_finite(&self) -> Result<()> {
        if self.first.iter().chain(self.second.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient statistic".into()));
        }
        Ok(())
    }

    /// Element-wise `tilde_sign` of the first-layer statistic.
    pub fn signs(&self, rho: f64) -> Result<Vec<f64>> {
        self.first.iter().map(|&g| tilde_sign(g, rho)).collect()
    }
}

/// Sign with a dead zone: `+1` for `x >= rho`, `-1` for `x <= -rho`, else `0`.
pub fn tilde_sign(x: f64, rho: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("tilde_sign input {x}")));
    }
    Ok(if x >= rho {
        1.0
    } else if x <= -rho {
        -1.0
    } else {
        0.0
    })
}

/// Batch average of the correlation statistic. Sums run over samples in batch
/// order, then neurons, so the result is reproducible bit for bit.
pub fn batch_gradient(
    net: &Network,
    batch: &[Sample],
    task: &ParityTask,
    second: Option<SecondLayerStatistic>,
) -> Result<GradientEstimate> {
    if batch.is_empty() {
        return Err(Error::InvalidSize("empty batch".into()));
    }
    let (m, d, k) = (net.m(), net.d(), net.k());
    if task.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: task.d(),
        });
    }
    let mut first = vec![0.0; m * d];
    let mut second_acc = second.map(|_| vec![0.0; m]);
    let k_f = k as f64;
    for sample in batch {
        if sample.x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: sample.x.len(),
            });
        }
        let y = sample.y;
        for r in 0..m {
            let z = net.preactivation(r, &sample.x);
            let lower = pow_k(z, k - 1);
            let s = k_f * lower * net.a()[r] * y;
            for (acc, &xj) in first[r * d..(r + 1) * d].iter_mut().zip(&sample.x) {
                *acc += s * xj;
            }
            if let (Some(acc), Some(kind)) = (second_acc.as_mut(), second) {
                let sigma = lower * z;
                acc[r] += match kind {
                    SecondLayerStatistic::WithLabel => y * sigma,
                    SecondLayerStatistic::WithoutLabel => sigma,
                };
            }
        }
    }
    let n = batch.len() as f64;
    first.iter_mut().for_each(|g| *g /= n);
    if let Some(acc) = second_acc.as_mut() {
        acc.iter_mut().for_each(|h| *h /= n);
    }
    let grad = GradientEstimate::from_parts(m, d, first, second_acc);
    grad.check_finite()?;
    Ok(grad)
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Closed-form expectation of the correlation statistic under the parity
/// distribution. Only the degree-(k-1) multilinear part of `<w, x>^(k-1)`
/// survives against `y * x_j`, which leaves `k! * a_r * prod_{i in A, i != j} w_i`
/// on the support and zero elsewhere.
pub fn population_gradient(
    net: &Network,
    task: &ParityTask,
    second: Option<SecondLayerStatistic>,
) -> Result<GradientEstimate> {
    let (m, d, k) = (net.m(), net.d(), net.k());
    if task.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: task.d(),
        });
    }
    if k != task.k() {
        return Err(Error::InvalidConfig(format!(
            "closed form needs activation degree equal to parity order, got {k} vs {}",
            task.k()
        )));
    }
    if net.weights().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network weights".into()));
    }
    let k_fact = factorial(k);
    let support = task.support();
    let mut first = vec![0.0; m * d];
    for r in 0..m {
        let row = net.row(r);
        let a = net.a()[r];
        for &j in support {
            let mut product = k_fact * a;
            for &i in support {
                if i != j {
                    product *= row[i];
                }
            }
            first[r * d + j] = product;
        }
    }
    let second = second.map(|kind| {
        (0..m)
            .map(|r| match kind {
                SecondLayerStatistic::WithLabel => {
                    support.iter().fold(k_fact, |acc, &i| acc * net.row(r)[i])
                }
                SecondLayerStatistic::WithoutLabel => uniform_moment(net.row(r), k),
            })
            .collect()
    });
    let grad = GradientEstimate::from_parts(m, d, first, second);
    grad.check_finite()?;
    Ok(grad)
}

/// `E[<w, x>^n]` for uniform signs `x`, by adding one coordinate at a time:
/// odd powers of a symmetric bit vanish and even powers of `w_i x_i` equal `w_i^p`.
fn uniform_moment(w: &[f64], n: usize) -> f64 {
    let mut binom = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..=n {
        binom[i][0] = 1.0;
        for j in 1..=i {
            binom[i][j] = binom[i - 1][j - 1] + if j < i { binom[i - 1][j] } else { 0.0 };
        }
    }
    let mut moments = vec![0.0; n + 1];
    moments[0] = 1.0;
    for &wi in w {
        let mut next = vec![0.0; n + 1];
        for (order, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in (0..=order).step_by(2) {
                acc += binom[order][p] * pow_k(wi, p) * moments[order - p];
            }
            *slot = acc;
        }
        moments = next;
    }
    moments[n]
}

pub(crate) fn apply_step(net: &mut Network, grad: &GradientEstimate, cfg: &TrainConfig) -> Result<()> {
    if grad.m() != net.m() || grad.d() != net.d() {
        return Err(Error::DimensionMismatch {
            expected: net.m() * net.d(),
            actual: grad.m() * grad.d(),
        });
    }
    let decay = cfg.decay();
    for r in 0..net.m() {
        let g = grad.row(r);
        for (w, &gj) in net.row_mut(r).iter_mut().zip(g) {
            *w = decay * *w + cfg.eta * tilde_sign(gj, cfg.rho)?;
        }
    }
    if net.second_layer() == SecondLayer::Trainable && cfg.eta2 > 0.0 {
        let h = grad.second().ok_or_else(|| {
            Error::InvalidConfig("trainable second layer needs a second-layer statistic".into())
        })?;
        for (a, &hr) in net.a_mut().iter_mut().zip(h) {
            *a += cfg.eta2 * tilde_sign(hr, cfg.rho)?;
        }
    }
    if net.weights().iter().chain(net.a()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("updated parameters".into()));
    }
    Ok(())
}

/// One sign step computed entirely from the pre-step weights.
pub fn sgd_step(net: &Network, grad: &GradientEstimate, cfg: &TrainConfig) -> Result<Network> {
    let mut next = net.clone();
    apply_step(&mut next, grad, cfg)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Fresh online batch every step.
    #[default]
    Stochastic,
    /// Closed-form expected statistic.
    Population,
}

/// Margin threshold factor: a margin counts as large when `y f >= gamma * m`.
pub fn gamma(k: usize) -> f64 {
    0.25 * factorial(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub samples_consumed: u64,
    pub test_accuracy: f64,
    pub exact_evaluation: bool,
    /// Fraction of inputs with `y f >= gamma * m`.
    pub large_margin_fraction: f64,
    pub gamma: f64,
    pub good_neurons: Option<usize>,
    pub bad_neurons: Option<usize>,
}

pub const MONTE_CARLO_TEST_SIZE: usize = 100_000;

/// Runs `cfg.steps` sign steps from `net0`. Stochastic mode reads the batch
/// for step `t` from stream `(cfg.seed, Batch, t)`, so no sample is reused.
pub fn train(
    task: &ParityTask,
    net0: &Network,
    cfg: &TrainConfig,
    mode: TrainMode,
    mut recorder: Option<&mut TrajectoryTrace>,
) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    if net0.d() != task.d() {
        return Err(Error::DimensionMismatch {
            expected: task.d(),
            actual: net0.d(),
        });
    }
    let mut net = net0.clone();
    let second = if cfg.trains_second_layer() {
        net = net.with_second_layer(SecondLayer::Trainable);
        Some(cfg.second_layer_statistic)
    } else {
        None
    };
    let taxonomy = classify_neurons(net0, task).ok();
    if let Some(trace) = recorder.as_deref_mut() {
        trace.begin(&net, taxonomy.clone(), task)?;
    }

    for t in 0..cfg.steps {
        let grad = match mode {
            TrainMode::Stochastic => {
                let batch = task.sample_batch(cfg.batch, stream(cfg.seed, Purpose::Batch, t as u64))?;
                batch_gradient(&net, &batch, task, second)?
            }
            TrainMode::Population => population_gradient(&net, task, second)?,
        };
        if let Some(trace) = recorder.as_deref_mut() {
            let reference = if trace.wants_population_signs() {
                match mode {
                    TrainMode::Stochastic => Some(population_gradient(&net, task, None)?),
                    TrainMode::Population => Some(grad.clone()),
                }
            } else {
                None
            };
            trace.record(t, &net, Some(&grad), reference.as_ref(), cfg.rho)?;
        }
        apply_step(&mut net, &grad, cfg)?;
    }
    if let Some(trace) = recorder {
        trace.record(cfg.steps, &net, None, None, cfg.rho)?;
    }

    let report = evaluate(task, &net, cfg, mode, taxonomy.as_ref().map(|t| (t.good.len(), t.bad.len())))?;
    Ok((net, report))
}

fn evaluate(
    task: &ParityTask,
    net: &Network,
    cfg: &TrainConfig,
    mode: TrainMode,
    classes: Option<(usize, usize)>,
) -> Result<TrainReport> {
    let g = gamma(net.k());
    let threshold = g * net.m() as f64;
    let exact = task.d() <= ENUMERATION_CAP;
    let (test_accuracy, large_margin_fraction) = if exact {
        (
            test_accuracy::<rand_chacha::ChaCha8Rng>(net, task, AccuracyMode::Exact)?,
            oracle::exact_margin_fraction(net, task, threshold)?,
        )
    } else {
        let samples = task.sample_batch(MONTE_CARLO_TEST_SIZE, stream(cfg.seed, Purpose::TestSet, 0))?;
        let mut correct = 0usize;
        let mut large = 0usize;
        for s in &samples {
            let margin = net.margin(s)?;
            correct += (margin > 0.0) as usize;
            large += (margin >= threshold) as usize;
        }
        let n = samples.len() as f64;
        (correct as f64 / n, large as f64 / n)
    };
    Ok(TrainReport {
        steps: cfg.steps,
        samples_consumed: match mode {
            TrainMode::Stochastic => (cfg.batch as u64) * (cfg.steps as u64),
            TrainMode::Population => 0,
        },
        test_accuracy,
        exact_evaluation: exact,
        large_margin_fraction,
        gamma: g,
        good_neurons: classes.map(|c| c.0),
        bad_neurons: classes.map(|c| c.1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionBullet {
    Width,
    Dimension,
    BatchSize,
    StepSize,
    WeightDecay,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionWarning {
    pub bullet: ConditionBullet,
    pub message: String,
}

/// Batch size lower bound of the training condition with constant `c`.
pub fn required_batch(k: usize, d: usize, m: usize, batch: usize, steps: usize, delta: f64, c: f64) -> f64 {
    let (m, d, b, t) = (m as f64, d as f64, batch as f64, steps.max(1) as f64);
    let kf = k as i32;
    let inner = (16.0 * m * d * b * t / delta).ln();
    let outer = (8.0 * m * d * t / delta).ln();
    c * 2f64.powi(kf) / factorial(k - 1).powi(2) * d.powi(kf - 1) * inner.powi(kf - 1) * outer.powi(2)
}

/// Checks every bullet of the training condition with constant `C = 1` and
/// returns one warning per violated bullet.
pub fn validate_condition(task: &ParityTask, m: usize, cfg: &TrainConfig) -> Vec<ConditionWarning> {
    let (k, d) = (task.k(), task.d());
    let mut out = Vec::new();
    let mut warn = |bullet, message: String| out.push(ConditionWarning { bullet, message });

    let min_width = 5f64.powi(k as i32) * (1.0 / cfg.delta).ln();
    if (m as f64) < min_width {
        warn(ConditionBullet::Width, format!("m = {m} < 5^k log(1/delta) = {min_width:.3}"));
    }
    let min_dim = (2.0 * m as f64 / cfg.epsilon).ln().powi(2);
    if (d as f64) < min_dim {
        warn(ConditionBullet::Dimension, format!("d = {d} < log^2(2m/epsilon) = {min_dim:.3}"));
    }
    let min_batch = required_batch(k, d, m, cfg.batch, cfg.steps, cfg.delta, 1.0);
    if (cfg.batch as f64) < min_batch {
        warn(
            ConditionBullet::BatchSize,
            format!("B = {} < batch bound {min_batch:.4e}", cfg.batch),
        );
    }
    if cfg.eta > 1.0 {
        warn(ConditionBullet::StepSize, format!("eta = {} > 1", cfg.eta));
    }
    if cfg.lambda != 1.0 {
        warn(ConditionBullet::WeightDecay, format!("lambda = {} != 1", cfg.lambda));
    }
    let rho_target = 0.1 * factorial(k);
    if (cfg.rho - rho_target).abs() > 1e-12 * rho_target {
        warn(
            ConditionBullet::Threshold,
            format!("rho = {} != 0.1 k! = {rho_target}", cfg.rho),
        );
    }
    out
}
