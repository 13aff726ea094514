use serde::{Deserialize, Serialize};

use crate::data::ParityTask;
use crate::error::{Error, Result};
use crate::network::{classify_neurons, concentration_radius, Network, NeuronTaxonomy};
use crate::rng::{run_seed, stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSizeReport {
    pub alpha: f64,
    /// `alpha >= 1` makes the lower bound non-positive, so the check says little.
    pub vacuous: bool,
    pub per_seed: Vec<bool>,
    pub pass_fraction: f64,
}

/// True when, for every sign pattern of the feature coordinates, both the
/// good and the bad members of that group number within
/// `[(1 - alpha) m / 2^(k+1), (1 + alpha) m / 2^(k+1)]`. Patterns with no
/// neurons count as zero.
pub fn groups_within_bounds(taxonomy: &NeuronTaxonomy, m: usize, k: usize, alpha: f64) -> bool {
    let expected = m as f64 / 2f64.powi(k as i32 + 1);
    let (lo, hi) = ((1.0 - alpha) * expected, (1.0 + alpha) * expected);
    let counts = taxonomy.group_counts();
    let inside = |n: usize| (lo..=hi).contains(&(n as f64));
    (0..1usize << k).all(|p| {
        let pattern: Vec<i8> = (0..k)
            .map(|i| if (p >> (k - 1 - i)) & 1 == 0 { 1 } else { -1 })
            .collect();
        let (good, bad) = counts.get(&pattern).copied().unwrap_or((0, 0));
        inside(good) && inside(bad)
    })
}

/// Initializes `n_seeds` networks of width `m` (runs `0..n_seeds` of
/// `master_seed`) and reports how often every group size is concentrated.
pub fn group_size_check(m: usize, k: usize, n_seeds: usize, delta: f64, master_seed: u64) -> Result<GroupSizeReport> {
    if m < 1 << (k + 1) {
        return Err(Error::InvalidSize(format!("m = {m} is below 2^(k+1) = {}", 1 << (k + 1))));
    }
    if n_seeds == 0 {
        return Err(Error::InvalidSize("need at least one seed".into()));
    }
    let task = ParityTask::new(k, k)?;
    let alpha = concentration_radius(m, k, delta);
    let per_seed = (0..n_seeds)
        .map(|run| {
            let net = Network::init_binary(m, k, k, stream(run_seed(master_seed, run), Purpose::Init, 0))?;
            let taxonomy = classify_neurons(&net, &task)?;
            Ok(groups_within_bounds(&taxonomy, m, k, alpha))
        })
        .collect::<Result<Vec<bool>>>()?;
    let pass_fraction = per_seed.iter().filter(|&&p| p).count() as f64 / n_seeds as f64;
    Ok(GroupSizeReport {
        alpha,
        vacuous: alpha >= 1.0,
        per_seed,
        pass_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::SecondLayer;

    #[test]
    fn one_neuron_per_group_is_degenerate() {
        let k = 2;
        let m = 8;
        let mut weights = Vec::new();
        let mut second = Vec::new();
        for p in 0..4usize {
            let signs = [
                if p & 2 == 0 { 1.0 } else { -1.0 },
                if p & 1 == 0 { 1.0 } else { -1.0 },
            ];
            for a in [signs[0] * signs[1], -signs[0] * signs[1]] {
                weights.extend_from_slice(&signs);
                second.push(a);
            }
        }
        let net = Network::from_parts(m, 2, k, weights, second, SecondLayer::Fixed).unwrap();
        let task = ParityTask::new(2, 2).unwrap();
        let tax = classify_neurons(&net, &task).unwrap();
        assert!(tax.group_counts().values().all(|&c| c == (1, 1)));
        let alpha = tax.alpha(0.05);
        assert!(alpha >= 1.0);
        assert!(groups_within_bounds(&tax, m, k, alpha));
        assert!(groups_within_bounds(&tax, m, k, 0.0));
        assert!(group_size_check(m, k, 5, 0.05, 0).unwrap().vacuous);
    }

    #[test]
    fn missing_pattern_fails() {
        let task = ParityTask::new(2, 2).unwrap();
        let net = Network::from_parts(8, 2, 2, vec![1.0; 16], vec![1.0; 8], SecondLayer::Fixed).unwrap();
        let tax = classify_neurons(&net, &task).unwrap();
        assert!(!groups_within_bounds(&tax, 8, 2, 0.5));
    }

    #[test]
    fn wide_networks_concentrate() {
        let report = group_size_check(4096, 2, 200, 0.05, 7).unwrap();
        assert!(!report.vacuous);
        assert!(report.pass_fraction >= 0.95, "{}", report.pass_fraction);
    }

    #[test]
    fn looser_delta_never_widens_the_band() {
        let radii: Vec<f64> = [0.01, 0.05, 0.2, 0.5]
            .iter()
            .map(|&d| group_size_check(256, 2, 1, d, 0).unwrap().alpha)
            .collect();
        assert!(radii.windows(2).all(|w| w[0] > w[1]));
        let fractions: Vec<f64> = [0.01, 0.05, 0.2, 0.5]
            .iter()
            .map(|&d| group_size_check(256, 2, 50, d, 0).unwrap().pass_fraction)
            .collect();
        assert!(fractions.windows(2).all(|w| w[0] >= w[1]), "{fractions:?}");
    }

    #[test]
    fn rejects_tiny_width() {
        assert!(group_size_check(7, 2, 10, 0.05, 0).is_err());
    }
}
