use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use parity_signsgd::analysis::CheckOutcome;
use parity_signsgd::harness::{
    self, check_figure_trace, emit_figure_traces, load_spec, oracle_check, seed_override, verify_suite,
    ExperimentSpec, NeuronPick,
};
use parity_signsgd::{NeuronSelection, TrainMode};

#[derive(Parser)]
#[command(name = "parity", version, about = "Sign SGD on k-sparse parity with an exact hypercube oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed; overrides the config file and PARITY_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of repeat runs.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Train the second layer with this step size.
    #[arg(long = "second-layer", global = true, value_name = "ETA2")]
    second_layer: Option<f64>,
    /// Output directory for reports and traces.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 1 when any check fails.
    #[arg(long, global = true)]
    strict: bool,
    /// Seeds run in parallel.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stochastic,
    Population,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a configuration and report accuracy and checks.
    Train { config: PathBuf },
    /// Run the check suite.
    Verify,
    /// Compare the closed-form population gradient with enumeration.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        networks: usize,
    },
    /// Accuracy over the shipped k = 2, 3, 4 configurations.
    ReproduceTable3,
    /// Write the trajectory of one neuron of run 0 as CSV.
    Trace {
        config: PathBuf,
        /// Neuron index, or `good` / `bad` for the first neuron of that class.
        #[arg(long, default_value = "0")]
        neuron: String,
    },
}

fn apply_overrides(cli: &Cli, spec: &mut ExperimentSpec) -> parity_signsgd::Result<()> {
    if let Some(seed) = seed_override(std::env::var("PARITY_SEED").ok().as_deref())? {
        spec.train.seed = seed;
    }
    if let Some(seed) = cli.seed {
        spec.train.seed = seed;
    }
    if let Some(n) = cli.seeds {
        spec.seeds = n;
    }
    if let Some(mode) = cli.mode {
        spec.mode = match mode {
            ModeArg::Stochastic => TrainMode::Stochastic,
            ModeArg::Population => TrainMode::Population,
        };
    }
    if let Some(eta2) = cli.second_layer {
        spec.train.eta2 = eta2;
    }
    if let Some(out) = &cli.out {
        spec.out = Some(out.clone());
    }
    if let Some(w) = cli.workers {
        spec.workers = w;
    }
    spec.validate()
}

fn master_seed(cli: &Cli) -> parity_signsgd::Result<u64> {
    Ok(match cli.seed {
        Some(s) => s,
        None => seed_override(std::env::var("PARITY_SEED").ok().as_deref())?.unwrap_or(0),
    })
}

fn print_checks(checks: &[CheckOutcome]) -> bool {
    for c in checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} (slack {:.4e}) {}", c.name, c.slack, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn execute(cli: &Cli) -> parity_signsgd::Result<bool> {
    match &cli.command {
        Command::Train { config } => {
            let mut spec = load_spec(config)?;
            apply_overrides(cli, &mut spec)?;
            let report = harness::run(&spec)?;
            print!("{}", report.to_text());
            println!("wall clock {:.2} s", report.wall_clock_seconds);
            Ok(report.all_checks_passed())
        }
        Command::Verify => {
            let seed = master_seed(cli)?;
            let passed = print_checks(&verify_suite(seed)?);
            println!("\ndead zone variants ({} seeds):", cli.seeds.unwrap_or(3));
            for (k, rho, acc) in harness::rho_variants(cli.seeds.unwrap_or(3), seed)? {
                println!("  k={k} rho={rho:<4.1} mean accuracy {:.2}%", 100.0 * acc);
            }
            Ok(passed)
        }
        Command::OracleCheck { networks } => Ok(print_checks(&oracle_check(*networks, master_seed(cli)?)?)),
        Command::ReproduceTable3 => {
            let seed = cli.seed.or(seed_override(std::env::var("PARITY_SEED").ok().as_deref())?);
            let rows = harness::reproduce_table3_with(seed, cli.seeds, cli.workers.unwrap_or(1))?;
            for row in &rows {
                println!("{row}");
            }
            Ok(true)
        }
        Command::Trace { config, neuron } => {
            let mut spec = load_spec(config)?;
            apply_overrides(cli, &mut spec)?;
            let pick = match neuron.as_str() {
                "good" => NeuronPick::FirstGood,
                "bad" => NeuronPick::FirstBad,
                n => NeuronPick::Index(n.parse().map_err(|_| {
                    parity_signsgd::Error::InvalidConfig(format!("--neuron expects an index, `good` or `bad`, got `{n}`"))
                })?),
            };
            if spec.record.is_none() {
                spec.record = Some(NeuronSelection::First);
            }
            let figs = emit_figure_traces(&spec, &[pick])?;
            let r = figs.neurons[0];
            if figs.files.is_empty() {
                figs.trace.write_neuron_csv(std::io::stdout().lock(), r)?;
                Ok(true)
            } else {
                for f in &figs.files {
                    println!("wrote {}", f.display());
                }
                Ok(print_checks(&check_figure_trace(&figs.trace, &figs.task, r)?))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(passed) if passed || !cli.strict => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
