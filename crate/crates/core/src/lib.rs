//! Sign SGD on two-layer polynomial-activation networks for k-sparse parity,
//! with exact hypercube evaluation and numerical checks of the training
//! dynamics.

pub mod analysis;
pub mod data;
pub mod error;
pub mod harness;
pub mod network;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod trace;

pub use data::{ParityTask, Sample};
pub use error::{Error, Result};
pub use network::{classify_neurons, Network, NeuronTaxonomy, SecondLayer};
pub use optimizer::{train, GradientEstimate, TrainConfig, TrainMode, TrainReport};
pub use harness::{load_spec, run, ExperimentSpec, RunReport};
pub use trace::{NeuronSelection, TraceOptions, TrajectoryTrace};
