//! Numerical checks of the training dynamics and supporting identities.
//!
//! Every check reports pass/fail with its measured slack instead of aborting,
//! so negative controls can be run through the same code.

mod agreement;
mod approximation;
mod concentration;
mod drift;
mod dynamics;
mod gradient_gap;
mod identities;

use serde::{Deserialize, Serialize};

pub use agreement::{sign_agreement, AgreementReport};
pub use approximation::approximation_ratio;
pub use concentration::{group_size_check, groups_within_bounds, GroupSizeReport};
pub use drift::{drift_constant, second_layer_drift, DriftReport};
pub use dynamics::{check_population_dynamics, required_steps, DynamicsReport};
pub use gradient_gap::{epsilon1, gap_for_batch, measure_gradient_gap, normalized_gap, GradientGapReport};
pub use identities::{bound_f3, identity_f2, F3Bound};

/// Outcome of one assertion. `slack` is the distance to the threshold,
/// negative when the assertion fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub slack: f64,
    pub detail: String,
}

impl CheckOutcome {
    pub(crate) fn new(name: &str, passed: bool, slack: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            slack,
            detail,
        }
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
