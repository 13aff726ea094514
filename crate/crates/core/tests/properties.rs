use proptest::prelude::*;

use parity_signsgd::analysis::sign_agreement;
use parity_signsgd::harness::{self, parse_spec};
use parity_signsgd::rng::{run_seed, stream, Purpose};
use parity_signsgd::{train, Network, NeuronSelection, ParityTask, TraceOptions, TrainConfig, TrainMode, TrajectoryTrace};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[(v.len() - 1) / 2] + v[v.len() / 2])
}

#[test]
fn agreement_grows_with_batch_size() {
    let task = ParityTask::new(8, 2).unwrap();
    let medians: Vec<f64> = [1, 16, 256, 4096]
        .iter()
        .map(|&batch| {
            median(
                (0..20)
                    .map(|run| {
                        let seed = run_seed(3, run);
                        let net0 = Network::init_binary(12, 8, 2, stream(seed, Purpose::Init, 0)).unwrap();
                        let cfg = TrainConfig {
                            batch,
                            seed,
                            ..Default::default()
                        };
                        sign_agreement(&task, &net0, &cfg, TrainMode::Stochastic).unwrap().mean()
                    })
                    .collect(),
            )
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{medians:?}");
    assert!(medians[0] < medians[3]);
}

#[test]
fn run_twice_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = parse_spec(
        "d = 8\nk = 2\nm = 12\nsteps = 8\nseeds = 2\nrecord = all\nchecks = gap,agreement\n",
        "t",
    )
    .unwrap();
    let mut contents = Vec::new();
    for name in ["a", "b"] {
        spec.out = Some(dir.path().join(name));
        let report = harness::run(&spec).unwrap();
        let mut files: Vec<Vec<u8>> = Vec::new();
        for file in ["report.json", "report.txt", "trace_run0.csv", "trace_run1.csv"] {
            files.push(std::fs::read(dir.path().join(name).join(file)).unwrap());
        }
        assert_eq!(report.traces.len(), 2);
        contents.push(files);
    }
    assert!(contents[0] == contents[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn samples_consumed_is_batch_times_steps(batch in 1usize..200, steps in 0usize..12, seed in any::<u64>()) {
        let task = ParityTask::new(6, 2).unwrap();
        let net0 = Network::init_binary(8, 6, 2, stream(seed, Purpose::Init, 0)).unwrap();
        let cfg = TrainConfig { batch, steps, seed, ..Default::default() };
        let (_, report) = train(&task, &net0, &cfg, TrainMode::Stochastic, None).unwrap();
        prop_assert_eq!(report.samples_consumed, (batch * steps) as u64);
        prop_assert!((0.0..=1.0).contains(&report.test_accuracy));
    }

    #[test]
    fn population_noise_decays_geometrically(seed in any::<u64>(), eta in 0.01f64..0.3) {
        let task = ParityTask::new(7, 2).unwrap();
        let net0 = Network::init_binary(6, 7, 2, stream(seed, Purpose::Init, 0)).unwrap();
        let cfg = TrainConfig { eta, rho: 0.3, steps: 15, ..Default::default() };
        let mut trace = TrajectoryTrace::new(TraceOptions { neurons: NeuronSelection::All, population_signs: false });
        train(&task, &net0, &cfg, TrainMode::Population, Some(&mut trace)).unwrap();
        for r in 0..6 {
            for j in 2..7 {
                let series = trace.series(r, j).unwrap();
                for pair in series.windows(2) {
                    prop_assert_eq!(pair[1], (1.0 - eta) * pair[0]);
                }
            }
        }
    }

    #[test]
    fn spec_text_round_trips(
        d in 2usize..20,
        m in 1usize..64,
        steps in 0usize..500,
        eta in 0.0f64..0.9,
        rho in 0.001f64..10.0,
        seed in any::<u64>(),
        seeds in 1usize..20,
        population in any::<bool>(),
    ) {
        let mode = if population { "population" } else { "stochastic" };
        let text = format!("d = {d}\nk = 2\nm = {m}\nsteps = {steps}\neta = {eta:?}\nrho = {rho:?}\nseed = {seed}\nseeds = {seeds}\nmode = {mode}\n");
        let spec = parse_spec(&text, "t").unwrap();
        prop_assert_eq!(parse_spec(&spec.to_text(), "t").unwrap(), spec);
    }
}
