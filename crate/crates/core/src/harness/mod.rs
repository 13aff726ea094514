//! Configuration, experiment orchestration and persistence.

mod figures;
mod run;
mod spec;
mod table3;
mod verify;

pub use figures::{check_figure_trace, emit_figure_traces, FigureTraces, NeuronPick};
pub use run::{initial_network, run, Aggregate, RunReport, SeedReport, GAP_BATCHES, REPORT_SCHEMA};
pub use spec::{
    load_spec, parse_spec, seed_override, shipped_spec, Check, ExperimentSpec, K2_CFG, K3_CFG, K4_CFG,
};
pub use table3::{reproduce_table3, reproduce_table3_with, Table3Row, PUBLISHED_ACCURACY};
pub use verify::{
    agreement_counts, gap_shrink_factor, identity_checks, margin_check, oracle_check, oracle_relative_error,
    random_real_network, rho_variants, second_layer_runs, verify_suite,
};
