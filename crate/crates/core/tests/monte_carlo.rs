use qreuse::dataset::{ConceptDataset, Mode};
use qreuse::protocol::{estimate_reusability, monte_carlo, ProtocolConfig};

fn config(l: f64, xi0: f64, trials: u64, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        trials,
        master_seed: seed,
        ..ProtocolConfig::new(l, ConceptDataset::from_class_weight(xi0, 1).unwrap())
    }
}

#[test]
fn same_seed_same_stats() {
    let cfg = config(0.45, 0.6, 30_000, 17);
    assert_eq!(monte_carlo(&cfg).unwrap(), monte_carlo(&cfg).unwrap());
    let other = ProtocolConfig { master_seed: 18, ..cfg.clone() };
    assert_ne!(monte_carlo(&cfg).unwrap().emp_p0, monte_carlo(&other).unwrap().emp_p0);
}

#[test]
fn half_reliability_takes_two_cycles() {
    let stats = monte_carlo(&config(0.5, 0.5, 100_000, 1)).unwrap();
    let mean = stats.mean_cycles.unwrap();
    assert!((mean.value - 2.0).abs() <= 0.02, "{mean:?}");
    assert!(mean.within(2.0, 4.0, 0.0));
    assert_eq!(stats.max_qram_queries_per_success, 1);
    assert_eq!(stats.emp_success_rate.value, 1.0);
}

#[test]
fn reusability_estimate_at_high_reliability() {
    let r = estimate_reusability(&ProtocolConfig { max_cycles: 1, ..config(0.8, 0.3, 200_000, 4) }).unwrap();
    assert!(r.within(0.2, 4.0, 0.0), "{r:?}");
}

#[test]
fn full_mode_matches_reduced_statistics() {
    let ds = ConceptDataset::from_class_weight(0.7, 3).unwrap();
    let full = monte_carlo(&ProtocolConfig {
        mode: Mode::Full,
        trials: 40_000,
        master_seed: 2,
        ..ProtocolConfig::new(0.6, ds)
    })
    .unwrap();
    assert_eq!(full.misclassified, 0);
    assert!(full.emp_p0.within(full.analytic_p0, 4.0, 0.0), "{:?}", full.emp_p0);
    assert!(full.emp_cycle_success.within(0.6, 4.0, 0.0));
    assert!(full.mean_reuses.unwrap().within(0.4 / 0.6, 4.0, 0.0));
}
