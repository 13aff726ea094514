//! The k-sparse parity distribution: uniform ±1 inputs, label equal to the
//! product of the input bits on a hidden support set.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::SignStream;

/// Largest dimension for which the full hypercube is enumerated.
pub const ENUMERATION_CAP: usize = 24;

/// A parity problem instance. `support` holds 0-based coordinate indices in
/// increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityTask {
    d: usize,
    support: Vec<usize>,
}

impl ParityTask {
    /// The canonical instance with support on the first `k` coordinates.
    pub fn new(d: usize, k: usize) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::InvalidTask(format!("need 1 <= k <= d, got k={k}, d={d}")));
        }
        Ok(Self {
            d,
            support: (0..k).collect(),
        })
    }

    pub fn with_support(d: usize, mut support: Vec<usize>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidTask("support must be non-empty".into()));
        }
        support.sort_unstable();
        if let Some(&j) = support.iter().find(|&&j| j >= d) {
            return Err(Error::InvalidTask(format!("support index {j} outside [0, {d})")));
        }
        if support.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidTask("support indices must be distinct".into()));
        }
        Ok(Self { d, support })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_feature(&self, j: usize) -> bool {
        self.support.binary_search(&j).is_ok()
    }

    pub fn is_canonical(&self) -> bool {
        self.support.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// Product of `x` over the support. Entries must be exactly ±1.
    pub fn label(&self, x: &[f64]) -> Result<f64> {
        check_signed_bits(x, self.d)?;
        Ok(self.label_unchecked(x))
    }

    pub(crate) fn label_unchecked(&self, x: &[f64]) -> f64 {
        self.support.iter().map(|&j| x[j]).product()
    }

    /// Draws `batch` fresh samples from `rng`.
    pub fn sample_batch<R: RngCore>(&self, batch: usize, rng: R) -> Result<Vec<Sample>> {
        if batch == 0 {
            return Err(Error::InvalidSize("batch size must be at least 1".into()));
        }
        let mut bits = SignStream::new(rng);
        Ok((0..batch)
            .map(|_| {
                let mut x = vec![0.0; self.d];
                bits.fill(&mut x);
                let y = self.label_unchecked(&x);
                Sample { x, y }
            })
            .collect())
    }

    /// Iterates over all `2^d` inputs in lexicographic bit order, coordinate 0
    /// being the most significant bit and bit value 0 mapping to `+1`.
    pub fn enumerate_all(&self) -> Result<Hypercube<'_>> {
        check_cap(self.d)?;
        Ok(Hypercube {
            task: self,
            next: 0,
            end: 1u64 << self.d,
        })
    }
}

pub(crate) fn check_cap(d: usize) -> Result<()> {
    if d > ENUMERATION_CAP {
        return Err(Error::EnumerationCap {
            d,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

pub(crate) fn check_signed_bits(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    match x.iter().position(|&v| v != 1.0 && v != -1.0) {
        Some(index) => Err(Error::NotSignedBit {
            index,
            value: x[index],
        }),
        None => Ok(()),
    }
}

/// Writes the hypercube point with the given enumeration index into `out`.
pub fn hypercube_point(index: u64, out: &mut [f64]) {
    let d = out.len();
    for (j, v) in out.iter_mut().enumerate() {
        *v = if (index >> (d - 1 - j)) & 1 == 0 { 1.0 } else { -1.0 };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

pub struct Hypercube<'a> {
    task: &'a ParityTask,
    next: u64,
    end: u64,
}

impl Iterator for Hypercube<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        if self.next == self.end {
            return None;
        }
        let mut x = vec![0.0; self.task.d];
        hypercube_point(self.next, &mut x);
        self.next += 1;
        let y = self.task.label_unchecked(&x);
        Some(Sample { x, y })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Hypercube<'_> {}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn label_examples() {
        let task = ParityTask::new(4, 2).unwrap();
        assert_eq!(task.label(&[1.0, -1.0, 1.0, 1.0]).unwrap(), -1.0);
        assert_eq!(task.label(&[1.0; 4]).unwrap(), 1.0);
        let task = ParityTask::new(3, 3).unwrap();
        assert_eq!(task.label(&[-1.0, -1.0, -1.0]).unwrap(), -1.0);
    }

    #[test]
    fn label_rejects_bad_input() {
        let task = ParityTask::new(3, 2).unwrap();
        assert!(matches!(task.label(&[1.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            task.label(&[1.0, 0.5, 1.0]),
            Err(Error::NotSignedBit { index: 1, .. })
        ));
    }

    #[test]
    fn task_validation() {
        assert!(ParityTask::new(3, 0).is_err());
        assert!(ParityTask::new(3, 4).is_err());
        assert!(ParityTask::with_support(3, vec![0, 3]).is_err());
        assert!(ParityTask::with_support(3, vec![1, 1]).is_err());
        let t = ParityTask::with_support(5, vec![4, 1]).unwrap();
        assert_eq!(t.support(), &[1, 4]);
        assert!(!t.is_canonical());
        assert!(ParityTask::new(5, 2).unwrap().is_canonical());
    }

    #[test]
    fn batches_are_deterministic() {
        let task = ParityTask::new(8, 2).unwrap();
        let a = task.sample_batch(64, stream(11, Purpose::Batch, 0)).unwrap();
        let b = task.sample_batch(64, stream(11, Purpose::Batch, 0)).unwrap();
        assert_eq!(a, b);
        assert!(task.sample_batch(0, stream(11, Purpose::Batch, 0)).is_err());
    }

    #[test]
    fn batch_statistics() {
        let task = ParityTask::new(8, 2).unwrap();
        let n = 1_000_000;
        let batch = task.sample_batch(n, stream(3, Purpose::Batch, 0)).unwrap();
        let mut sums = [0.0; 8];
        let mut positive = 0usize;
        for s in &batch {
            for (acc, v) in sums.iter_mut().zip(&s.x) {
                *acc += v;
            }
            assert_eq!(s.y, task.label(&s.x).unwrap());
            positive += (s.y > 0.0) as usize;
        }
        for acc in sums {
            assert!((acc / n as f64).abs() <= 0.01);
        }
        let p = positive as f64 / n as f64;
        assert!((0.497..=0.503).contains(&p), "P(y=+1) = {p}");
    }

    #[test]
    fn enumeration_cardinality_and_balance() {
        let task = ParityTask::new(3, 2).unwrap();
        let all: Vec<Sample> = task.enumerate_all().unwrap().collect();
        assert_eq!(all.len(), 8);
        let distinct: HashSet<Vec<i8>> = all
            .iter()
            .map(|s| s.x.iter().map(|&v| v as i8).collect())
            .collect();
        assert_eq!(distinct.len(), 8);
        assert_eq!(all.iter().filter(|s| s.y > 0.0).count(), 4);
        assert_eq!(all[0].x, vec![1.0, 1.0, 1.0]);
        assert_eq!(all[1].x, vec![1.0, 1.0, -1.0]);
        assert_eq!(all[7].x, vec![-1.0, -1.0, -1.0]);
    }

    #[test]
    fn enumeration_identity_parity() {
        let task = ParityTask::new(1, 1).unwrap();
        let all: Vec<Sample> = task.enumerate_all().unwrap().collect();
        assert_eq!(
            all,
            vec![
                Sample { x: vec![1.0], y: 1.0 },
                Sample { x: vec![-1.0], y: -1.0 }
            ]
        );
    }

    #[test]
    fn enumeration_cap() {
        let task = ParityTask::new(25, 2).unwrap();
        assert!(matches!(task.enumerate_all(), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn every_enumerated_label_is_consistent() {
        for d in 1..=12 {
            let task = ParityTask::with_support(d, vec![0, d - 1].into_iter().collect::<HashSet<_>>().into_iter().collect()).unwrap();
            let mut seen = HashSet::new();
            for s in task.enumerate_all().unwrap() {
                assert_eq!(task.label(&s.x).unwrap(), s.y);
                assert!(seen.insert(s.x.iter().map(|&v| v > 0.0).collect::<Vec<_>>()));
            }
            assert_eq!(seen.len(), 1 << d);
        }
    }
}
