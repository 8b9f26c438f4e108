use fedasync_core::experiment::{DelayDist, ExperimentConfig, LatencyProfile, StalenessMode};
use fedasync_core::metrics::RunOutput;
use fedasync_core::server::StalenessStrategy;
use fedasync_core::simulator::{run_fedasync_latency, run_fedasync_sampled};
use proptest::prelude::*;

fn base(devices: usize, k: u64, total: u64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.devices = devices;
    cfg.server.max_staleness = k;
    cfg.server.total_epochs = total;
    cfg.seed = seed;
    cfg.data.samples = 200;
    cfg.data.dim = 4;
    cfg.worker.h_min = 1;
    cfg.worker.h_max = 4;
    cfg.worker.batch = fedasync_core::data::BatchSize::Sampled(4);
    cfg.partition = fedasync_core::experiment::PartitionSpec::Iid;
    cfg
}

fn check_trace(out: &RunOutput, cfg: &ExperimentConfig) {
    assert!(out.failure.is_none(), "{:?}", out.failure);
    let epochs: Vec<u64> = out.updates.iter().map(|u| u.epoch).collect();
    let want: Vec<u64> = (1..=cfg.server.total_epochs).collect();
    assert_eq!(epochs, want, "committed epochs must be 1..=T without gaps");
    for u in &out.updates {
        assert!(u.staleness <= cfg.server.max_staleness, "{u:?}");
        assert_eq!(u.tau + 1 + u.staleness, u.epoch);
        assert!((cfg.worker.h_min..=cfg.worker.h_max).contains(&u.local_iters));
    }
    let grads = out.final_record().unwrap().gradients;
    let t = cfg.server.total_epochs;
    assert!(grads >= t * cfg.worker.h_min && grads <= t * cfg.worker.h_max);
    assert_eq!(grads, out.updates.iter().map(|u| u.local_iters).sum::<u64>());
    assert_eq!(out.rejected, 0);
}

fn delay() -> impl Strategy<Value = DelayDist> {
    prop_oneof![
        (0.0..5.0f64).prop_map(DelayDist::Constant),
        (0.0..2.0f64, 0.0..5.0f64).prop_map(|(lo, w)| DelayDist::Uniform { lo, hi: lo + w }),
        (0.1..5.0f64).prop_map(|mean| DelayDist::Exponential { mean }),
    ]
}

fn profile() -> impl Strategy<Value = LatencyProfile> {
    (delay(), delay(), 0.1..10.0f64).prop_map(|(compute, network, scale)| LatencyProfile {
        compute,
        network,
        scale,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn latency_runs_respect_the_staleness_bound(
        profiles in prop::collection::vec(profile(), 2..=20),
        k in 0u64..=16,
        seed in any::<u64>(),
    ) {
        let mut cfg = base(profiles.len(), k, 150, seed);
        cfg.mode = StalenessMode::Latency { profiles };
        let out = run_fedasync_latency(&cfg).unwrap();
        check_trace(&out, &cfg);
        let times: Vec<f64> = out.updates.iter().map(|u| u.sim_time.unwrap()).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sampled_runs_respect_the_staleness_bound(
        devices in 1usize..=20,
        k in 0u64..=16,
        seed in any::<u64>(),
        poly in any::<bool>(),
    ) {
        let mut cfg = base(devices, k, 150, seed);
        if poly {
            cfg.server.strategy = StalenessStrategy::Polynomial { a: 0.5 };
        }
        let out = run_fedasync_sampled(&cfg).unwrap();
        check_trace(&out, &cfg);
        for u in &out.updates {
            let want = fedasync_core::server::staleness_weight(&cfg.server.strategy, cfg.server.alpha, u.staleness);
            prop_assert_eq!(u.alpha_t, want);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = base(6, 3, 200, 11);
    let a = run_fedasync_sampled(&cfg).unwrap();
    let b = run_fedasync_sampled(&cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.updates, b.updates);
    cfg.mode = StalenessMode::Latency {
        profiles: vec![
            LatencyProfile {
                compute: DelayDist::Exponential { mean: 1.0 },
                network: DelayDist::Uniform { lo: 0.0, hi: 0.5 },
                scale: 1.0,
            };
            6
        ],
    };
    let a = run_fedasync_latency(&cfg).unwrap();
    let b = run_fedasync_latency(&cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.updates, b.updates);
    assert_eq!(a.final_model, b.final_model);
}

#[test]
fn different_seeds_differ() {
    let a = run_fedasync_sampled(&base(6, 3, 50, 1)).unwrap();
    let b = run_fedasync_sampled(&base(6, 3, 50, 2)).unwrap();
    assert_ne!(a.final_model, b.final_model);
}
