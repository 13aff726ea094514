//! Exact expectations over the full hypercube.
//!
//! Inner products are tabulated per coordinate block (see
//! `network::split_point`), so every enumerated output is bit-identical to
//! `Network::forward`. Sums over inputs use an exactly rounded accumulator,
//! which makes every statistic independent of the enumeration order.

use crate::data::{check_cap, ParityTask};
use crate::error::{Error, Result};
use crate::network::{block_dot, pow_k, split_point, Network};
use crate::optimizer::GradientEstimate;

/// Exactly rounded floating-point sum (Shewchuk's non-overlapping partials,
/// with the half-even correction used by Python's `math.fsum`).
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum, sign: f64) {
        for &p in &other.partials {
            self.add(sign * p);
        }
    }

    pub fn clear(&mut self) {
        self.partials.clear();
    }

    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnumerationOrder {
    #[default]
    Forward,
    Reversed,
}

#[derive(Debug, Clone)]
pub struct ExactStatistics {
    /// Population correlation loss `1 - E[y f(W, x)]`.
    pub exact_loss: f64,
    /// `E[y f(W, x)]`, summed independently of the loss.
    pub mean_margin: f64,
    /// First-layer statistic and the labelled second-layer statistic.
    pub exact_gradient: GradientEstimate,
    /// `E[sigma(<w_r, x>)]` without the label.
    pub second_unlabeled: Vec<f64>,
    pub exact_accuracy: f64,
    /// Distinct margin values in increasing order with their input counts.
    pub margin_histogram: Vec<(f64, u64)>,
}

struct BlockTables {
    m: usize,
    split: usize,
    lo_bits: usize,
    hi: Vec<f64>,
    lo: Vec<f64>,
    label_mask: u64,
}

impl BlockTables {
    fn new(net: &Network, task: &ParityTask) -> Result<Self> {
        check_cap(task.d())?;
        if net.d() != task.d() {
            return Err(Error::DimensionMismatch {
                expected: task.d(),
                actual: net.d(),
            });
        }
        let (m, d) = (net.m(), net.d());
        let split = split_point(d);
        let lo_bits = d - split;
        let tabulate = |range: std::ops::Range<usize>| {
            let width = range.len();
            let mut table = vec![0.0; (1usize << width) * m];
            let mut x = vec![0.0; width];
            for p in 0..1usize << width {
                crate::data::hypercube_point(p as u64, &mut x);
                for r in 0..m {
                    table[p * m + r] = block_dot(&net.row(r)[range.clone()], &x);
                }
            }
            table
        };
        let label_mask = task
            .support()
            .iter()
            .fold(0u64, |mask, &j| mask | 1 << (d - 1 - j));
        Ok(Self {
            m,
            split,
            lo_bits,
            hi: tabulate(0..split),
            lo: tabulate(split..d),
            label_mask,
        })
    }

    fn label(&self, p: usize, q: usize) -> f64 {
        let index = ((p as u64) << self.lo_bits) | q as u64;
        if (index & self.label_mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    fn indices(n: usize, order: EnumerationOrder) -> Box<dyn Iterator<Item = usize>> {
        match order {
            EnumerationOrder::Forward => Box::new(0..n),
            EnumerationOrder::Reversed => Box::new((0..n).rev()),
        }
    }

    /// Calls `visit(p, q, y, z)` for every input, `z` holding all preactivations.
    fn for_each(&self, order: EnumerationOrder, mut visit: impl FnMut(usize, usize, f64, &[f64])) {
        let mut z = vec![0.0; self.m];
        for p in Self::indices(1 << self.split, order) {
            let hi = &self.hi[p * self.m..(p + 1) * self.m];
            for q in Self::indices(1 << self.lo_bits, order) {
                let lo = &self.lo[q * self.m..(q + 1) * self.m];
                for ((zr, h), l) in z.iter_mut().zip(hi).zip(lo) {
                    *zr = h + l;
                }
                visit(p, q, self.label(p, q), &z);
            }
        }
    }
}

#[inline]
fn output(net: &Network, z: &[f64]) -> f64 {
    let mut f = 0.0;
    for (a, &zr) in net.a().iter().zip(z) {
        f += a * pow_k(zr, net.k());
    }
    f
}

pub fn exact_statistics(net: &Network, task: &ParityTask) -> Result<ExactStatistics> {
    exact_statistics_in_order(net, task, EnumerationOrder::Forward)
}

pub fn exact_statistics_in_order(
    net: &Network,
    task: &ParityTask,
    order: EnumerationOrder,
) -> Result<ExactStatistics> {
    let tables = BlockTables::new(net, task)?;
    let (m, d, k) = (net.m(), net.d(), net.k());
    let split = tables.split;
    let n_lo = 1usize << tables.lo_bits;

    let mut margin_sum = ExactSum::new();
    let mut correct = 0u64;
    let mut margins = Vec::with_capacity(1 << d);
    let mut grad = vec![ExactSum::new(); m * d];
    let mut row_acc = vec![ExactSum::new(); m];
    let mut col_acc = vec![ExactSum::new(); n_lo * m];
    let mut second = vec![ExactSum::new(); m];
    let mut second_unlabeled = vec![ExactSum::new(); m];
    let mut hi_x = vec![0.0; split];
    let mut current_p = None;

    let flush_rows = |p: usize, row_acc: &mut [ExactSum], grad: &mut [ExactSum], hi_x: &mut [f64]| {
        crate::data::hypercube_point(p as u64, hi_x);
        for (r, acc) in row_acc.iter_mut().enumerate() {
            for (j, &xj) in hi_x.iter().enumerate() {
                grad[r * d + j].merge(acc, xj);
            }
            acc.clear();
        }
    };

    tables.for_each(order, |p, q, y, z| {
        if current_p != Some(p) {
            if let Some(prev) = current_p {
                flush_rows(prev, &mut row_acc, &mut grad, &mut hi_x);
            }
            current_p = Some(p);
        }
        let mut f = 0.0;
        for r in 0..m {
            let zr = z[r];
            let lower = pow_k(zr, k - 1);
            let sigma = lower * zr;
            let a = net.a()[r];
            f += a * sigma;
            let s = k as f64 * lower * a * y;
            row_acc[r].add(s);
            col_acc[q * m + r].add(s);
            second[r].add(y * sigma);
            second_unlabeled[r].add(sigma);
        }
        let margin = y * f;
        margin_sum.add(margin);
        correct += (margin > 0.0) as u64;
        margins.push(margin);
    });
    if let Some(prev) = current_p {
        flush_rows(prev, &mut row_acc, &mut grad, &mut hi_x);
    }
    let mut lo_x = vec![0.0; d - split];
    for q in 0..n_lo {
        crate::data::hypercube_point(q as u64, &mut lo_x);
        for r in 0..m {
            for (offset, &xj) in lo_x.iter().enumerate() {
                grad[r * d + split + offset].merge(&col_acc[q * m + r], xj);
            }
        }
    }

    let total = (1u64 << d) as f64;
    // Division by 2^d is exact, so the averages stay correctly rounded.
    let mean = |acc: &ExactSum| acc.value() / total;
    let mut loss = ExactSum::new();
    loss.add(1.0);
    loss.merge(&margin_sum, -1.0 / total);

    Ok(ExactStatistics {
        exact_loss: loss.value(),
        mean_margin: mean(&margin_sum),
        exact_gradient: GradientEstimate::from_parts(
            m,
            d,
            grad.iter().map(mean).collect(),
            Some(second.iter().map(mean).collect()),
        ),
        second_unlabeled: second_unlabeled.iter().map(mean).collect(),
        exact_accuracy: correct as f64 / total,
        margin_histogram: histogram(margins),
    })
}

fn histogram(mut margins: Vec<f64>) -> Vec<(f64, u64)> {
    margins.sort_unstable_by(f64::total_cmp);
    let mut out: Vec<(f64, u64)> = Vec::new();
    for v in margins {
        match out.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Exact test accuracy; outputs equal to zero count as errors.
pub fn exact_accuracy(net: &Network, task: &ParityTask) -> Result<f64> {
    let tables = BlockTables::new(net, task)?;
    let mut correct = 0u64;
    tables.for_each(EnumerationOrder::Forward, |_, _, y, z| {
        correct += (y * output(net, z) > 0.0) as u64;
    });
    Ok(correct as f64 / (1u64 << task.d()) as f64)
}

/// All margins `y f(W, x)` over the hypercube, sorted ascending.
pub fn exact_margins(net: &Network, task: &ParityTask) -> Result<Vec<f64>> {
    let tables = BlockTables::new(net, task)?;
    let mut margins = Vec::with_capacity(1 << task.d());
    tables.for_each(EnumerationOrder::Forward, |_, _, y, z| {
        margins.push(y * output(net, z));
    });
    margins.sort_unstable_by(f64::total_cmp);
    Ok(margins)
}

/// Smallest margin `v` with `P(y f <= v) >= q`; `q = 0` gives the minimum.
pub fn exact_margin_quantile(net: &Network, task: &ParityTask, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::OutOfRange(format!("quantile {q} outside [0, 1]")));
    }
    let margins = exact_margins(net, task)?;
    Ok(margins[lower_quantile_index(margins.len(), q)])
}

pub(crate) fn lower_quantile_index(n: usize, q: f64) -> usize {
    ((q * n as f64).ceil() as usize).clamp(1, n) - 1
}

/// Exact fraction of inputs whose margin is at least `threshold`.
pub fn exact_margin_fraction(net: &Network, task: &ParityTask, threshold: f64) -> Result<f64> {
    let tables = BlockTables::new(net, task)?;
    let mut hits = 0u64;
    tables.for_each(EnumerationOrder::Forward, |_, _, y, z| {
        hits += (y * output(net, z) >= threshold) as u64;
    });
    Ok(hits as f64 / (1u64 << task.d()) as f64)
}

/// Calls `visit(x, y, f)` for every input, with `f` bit-identical to
/// `Network::forward(x)`.
pub fn for_each_output(
    net: &Network,
    task: &ParityTask,
    mut visit: impl FnMut(&[f64], f64, f64),
) -> Result<()> {
    let tables = BlockTables::new(net, task)?;
    let mut x = vec![0.0; task.d()];
    let lo_bits = tables.lo_bits;
    tables.for_each(EnumerationOrder::Forward, |p, q, y, z| {
        crate::data::hypercube_point(((p as u64) << lo_bits) | q as u64, &mut x);
        visit(&x, y, output(net, z));
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::network::SecondLayer;
    use crate::rng::{stream, Purpose};

    fn real_network(m: usize, d: usize, k: usize, seed: u64) -> Network {
        let mut rng = stream(seed, Purpose::Auxiliary, 0);
        let weights = (0..m * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let second = (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Network::from_parts(m, d, k, weights, second, SecondLayer::Fixed).unwrap()
    }

    #[test]
    fn exact_sum_is_correctly_rounded() {
        let mut s = ExactSum::new();
        s.extend([1e100, 1.0, -1e100, 1e-30]);
        assert_eq!(s.value(), 1.0);
        let mut s = ExactSum::new();
        s.extend(std::iter::repeat_n(0.1, 10));
        assert_eq!(s.value(), 1.0);
        let mut s = ExactSum::new();
        s.extend([1.0, 1e-16, 1e-16]);
        assert_eq!(s.value(), 1.0000000000000002);
        assert_eq!(ExactSum::new().value(), 0.0);
    }

    #[test]
    fn exact_sum_merge_with_sign() {
        let mut a = ExactSum::new();
        a.extend([0.3, 1e20, -0.1]);
        let mut b = ExactSum::new();
        b.extend([1e20, 0.7]);
        a.merge(&b, -1.0);
        let mut direct = ExactSum::new();
        direct.extend([0.3, 1e20, -0.1, -1e20, -0.7]);
        assert_eq!(a.value(), direct.value());
    }

    #[test]
    fn good_network_statistics() {
        let task = ParityTask::new(6, 2).unwrap();
        let net = Network::good_network(2, 6).unwrap();
        let stats = exact_statistics(&net, &task).unwrap();
        assert_eq!(stats.exact_loss, -7.0);
        assert_eq!(stats.exact_accuracy, 1.0);
        assert_eq!(stats.margin_histogram, vec![(8.0, 64)]);
        for q in [0.0, 0.1, 0.5, 1.0] {
            assert_eq!(exact_margin_quantile(&net, &task, q).unwrap(), 8.0);
        }
    }

    #[test]
    fn zero_network_statistics() {
        let task = ParityTask::new(5, 3).unwrap();
        let net = Network::from_parts(2, 5, 3, vec![0.0; 10], vec![1.0, -1.0], SecondLayer::Fixed).unwrap();
        let stats = exact_statistics(&net, &task).unwrap();
        assert_eq!(stats.exact_loss, 1.0);
        assert_eq!(stats.exact_accuracy, 0.0);
        assert_eq!(stats.margin_histogram.iter().map(|h| h.1).sum::<u64>(), 32);
    }

    #[test]
    fn quantile_extremes_and_errors() {
        let task = ParityTask::new(7, 2).unwrap();
        let net = Network::init_binary(6, 7, 2, stream(4, Purpose::Init, 0)).unwrap();
        let margins: Vec<f64> = task.enumerate_all().unwrap().map(|s| net.margin(&s).unwrap()).collect();
        let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
        let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(exact_margin_quantile(&net, &task, 0.0).unwrap(), min);
        assert_eq!(exact_margin_quantile(&net, &task, 1.0).unwrap(), max);
        assert!(exact_margin_quantile(&net, &task, 1.5).is_err());
        assert!(exact_margin_quantile(&net, &ParityTask::new(25, 2).unwrap(), 0.5).is_err());
    }

    #[test]
    fn outputs_match_forward_bitwise() {
        let task = ParityTask::with_support(9, vec![2, 7]).unwrap();
        let net = real_network(5, 9, 3, 8);
        let mut inputs = task.enumerate_all().unwrap();
        for_each_output(&net, &task, |x, y, f| {
            let s = inputs.next().unwrap();
            assert_eq!(s.x, x);
            assert_eq!(s.y, y);
            assert_eq!(net.forward(x).unwrap().to_bits(), f.to_bits());
        })
        .unwrap();
    }

    #[test]
    fn statistics_match_naive_enumeration() {
        let task = ParityTask::new(7, 2).unwrap();
        let net = real_network(4, 7, 2, 3);
        let stats = exact_statistics(&net, &task).unwrap();
        let n = 128.0;
        let mut grad = vec![0.0; 4 * 7];
        let mut second = vec![0.0; 4];
        let mut mean_margin = 0.0;
        for s in task.enumerate_all().unwrap() {
            mean_margin += net.margin(&s).unwrap() / n;
            for r in 0..4 {
                let z = net.preactivation(r, &s.x);
                second[r] += s.y * z * z / n;
                for j in 0..7 {
                    grad[r * 7 + j] += 2.0 * z * net.a()[r] * s.y * s.x[j] / n;
                }
            }
        }
        assert!((stats.mean_margin - mean_margin).abs() < 1e-12);
        for (a, b) in stats.exact_gradient.first().iter().zip(&grad) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        for (a, b) in stats.exact_gradient.second().unwrap().iter().zip(&second) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn enumeration_order_does_not_matter(seed in any::<u64>(), k in 1usize..5) {
            let task = ParityTask::new(8, k).unwrap();
            let net = real_network(6, 8, k, seed);
            let fwd = exact_statistics_in_order(&net, &task, EnumerationOrder::Forward).unwrap();
            let rev = exact_statistics_in_order(&net, &task, EnumerationOrder::Reversed).unwrap();
            prop_assert_eq!(fwd.exact_loss.to_bits(), rev.exact_loss.to_bits());
            prop_assert_eq!(fwd.exact_accuracy, rev.exact_accuracy);
            prop_assert_eq!(&fwd.margin_histogram, &rev.margin_histogram);
            prop_assert_eq!(fwd.exact_gradient.first(), rev.exact_gradient.first());
            prop_assert_eq!(fwd.exact_gradient.second(), rev.exact_gradient.second());
            let per_input_loss: f64 = task
                .enumerate_all()
                .unwrap()
                .map(|s| 1.0 - net.margin(&s).unwrap())
                .sum::<f64>()
                / 256.0;
            let scale = 1.0 + fwd.mean_margin.abs();
            prop_assert!((fwd.exact_loss - per_input_loss).abs() <= 1e-12 * scale);
            prop_assert!((fwd.exact_loss + fwd.mean_margin - 1.0).abs() <= 1e-15 * scale);
        }
    }
}
