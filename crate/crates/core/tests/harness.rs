use fedspectrum::aggregation::{AggregatorConfig, AggregatorKind};
use fedspectrum::attacks::AttackConfig;
use fedspectrum::harness::{
    emit_report, emit_sweep, load_report, load_sweep, parse_config, run_experiment, run_seed_sweep, AdversaryConfig,
    ExperimentConfig, Simulation, ROUNDS_FILE,
};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.task.samples_per_class_train = 200;
    cfg.task.samples_per_class_test = 200;
    cfg.n_clients_total = 50;
    cfg.clients_per_round = 10;
    cfg.rounds = 12;
    cfg.seeds = vec![0, 1, 2];
    cfg
}

fn with_adversary(
    mut cfg: ExperimentConfig,
    n_compromised: usize,
    ratio: Option<f64>,
    attack: AttackConfig,
) -> ExperimentConfig {
    cfg.adversary = AdversaryConfig {
        n_compromised,
        n_fake: 0,
        malicious_ratio: ratio,
        attack,
    };
    cfg
}

#[test]
fn clean_run_has_zero_impact() {
    let report = run_experiment(&small(), 4).unwrap();
    assert_eq!(report.attack_impact, 0.0);
    assert_eq!(report.per_round, report.clean_per_round);
    assert!(report.per_round.iter().all(|r| r.n_malicious_selected == 0));
    assert_eq!(report.per_round.len(), 12);
    let max = report.per_round.iter().map(|r| r.test_accuracy).fold(0.0, f64::max);
    assert_eq!(report.max_test_accuracy, max);
}

#[test]
fn paired_clean_run_matches_unattacked_config() {
    let mut cfg = with_adversary(small(), 2, Some(0.2), AttackConfig::dyn_opt());
    cfg.aggregator = AggregatorConfig::new(AggregatorKind::Median);
    let attacked = run_experiment(&cfg, 7).unwrap();
    let clean = run_experiment(&cfg.clean(), 7).unwrap();
    assert_eq!(attacked.clean_per_round, clean.per_round);
    assert_eq!(
        attacked.attack_impact,
        attacked.clean_max_test_accuracy - attacked.max_test_accuracy
    );
}

#[test]
fn mpaf_collapses_fedavg() {
    let mut cfg = with_adversary(ExperimentConfig::desk_default(), 0, Some(0.1), AttackConfig::mpaf(1e6));
    cfg.rounds = 20;
    let report = run_experiment(&cfg, 0).unwrap();
    let last = report.per_round.last().unwrap();
    assert!(
        (last.test_accuracy - 0.1).abs() < 0.05,
        "final accuracy {}",
        last.test_accuracy
    );
    assert!(report.clean_per_round.last().unwrap().test_accuracy > 0.5);
}

#[test]
fn malicious_selection_follows_hypergeometric_mean() {
    // 200 real clients at 10% gives 23 fake; 25 of 223 per round
    let cfg = with_adversary(ExperimentConfig::desk_default(), 0, Some(0.1), AttackConfig::mpaf(1e6));
    let sim = Simulation::new(&cfg, 1, true).unwrap();
    let population = sim.population();
    assert_eq!(population, 223);
    let rounds = 200;
    let total: usize = (0..rounds)
        .map(|t| sim.select_clients(t).iter().filter(|&&id| sim.is_malicious(id)).count())
        .sum();
    let mean = total as f64 / rounds as f64;
    let expected = 25.0 * 23.0 / 223.0;
    // hypergeometric variance, then 4 standard errors of the mean
    let var = 25.0 * (23.0 / 223.0) * (200.0 / 223.0) * (198.0 / 222.0);
    assert!(
        (mean - expected).abs() < 4.0 * (var / rounds as f64).sqrt(),
        "mean {mean} vs {expected}"
    );
}

#[test]
fn selection_is_uniform_without_replacement() {
    let cfg = small();
    let sim = Simulation::new(&cfg, 3, true).unwrap();
    for t in 0..20 {
        let ids = sim.select_clients(t);
        assert_eq!(ids.len(), 10);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(ids.iter().all(|&id| id < 50));
    }
    assert_ne!(sim.select_clients(0), sim.select_clients(1));
}

#[test]
fn norm_bounding_trajectory() {
    let tau = 0.3;
    let mut cfg = with_adversary(ExperimentConfig::desk_default(), 0, Some(0.1), AttackConfig::mpaf(1e6));
    cfg.aggregator = AggregatorConfig::with_tau(AggregatorKind::NormBounding, tau);
    cfg.rounds = 60;
    let report = run_experiment(&cfg, 2).unwrap();
    let late = &report.per_round[40..];
    let attacked: Vec<_> = late.iter().filter(|r| r.n_malicious_selected > 0).collect();
    assert!(!attacked.is_empty());
    assert!(attacked.iter().all(|r| r.mean_malicious_norm > tau));
    let benign = late.iter().map(|r| r.mean_benign_norm).sum::<f64>() / late.len() as f64;
    assert!(benign < tau, "late benign norm {benign}");
}

#[test]
fn report_round_trips_bitwise() {
    let cfg = with_adversary(small(), 1, Some(0.2), AttackConfig::dyn_opt());
    let report = run_experiment(&cfg, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let back = load_report(dir.path()).unwrap();
    assert_eq!(back.attack_impact.to_bits(), report.attack_impact.to_bits());
    assert_eq!(back.per_round.len(), cfg.rounds);
    for (a, b) in back
        .per_round
        .iter()
        .chain(&back.clean_per_round)
        .zip(report.per_round.iter().chain(&report.clean_per_round))
    {
        assert_eq!(a.test_accuracy.to_bits(), b.test_accuracy.to_bits());
        assert_eq!(a.test_loss.to_bits(), b.test_loss.to_bits());
        assert_eq!(a.aggregate_norm.to_bits(), b.aggregate_norm.to_bits());
        assert_eq!(a.mean_malicious_norm.to_bits(), b.mean_malicious_norm.to_bits());
    }
    assert_eq!(back, report);
    let header = std::fs::read_to_string(dir.path().join(ROUNDS_FILE)).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "round,test_accuracy,test_loss,n_malicious_selected,aggregate_norm,mean_benign_norm,mean_malicious_norm"
    );
}

#[test]
fn sweep_round_trips_and_ignores_seed_order() {
    let cfg = with_adversary(small(), 0, Some(0.2), AttackConfig::mpaf(1e6));
    let sweep = run_seed_sweep(&cfg).unwrap();
    assert_eq!(sweep.per_seed.len(), 3);
    let mut reversed = cfg.clone();
    reversed.seeds.reverse();
    let other = run_seed_sweep(&reversed).unwrap();
    assert_eq!(sweep.attack_impact, other.attack_impact);
    assert_eq!(sweep.max_test_accuracy, other.max_test_accuracy);

    let dir = tempfile::tempdir().unwrap();
    emit_sweep(&sweep, dir.path()).unwrap();
    assert_eq!(load_sweep(dir.path()).unwrap(), sweep);
}

#[test]
fn single_seed_sweep_has_zero_std() {
    let mut cfg = with_adversary(small(), 0, Some(0.2), AttackConfig::mpaf(1e6));
    cfg.seeds = vec![9];
    let sweep = run_seed_sweep(&cfg).unwrap();
    assert_eq!(sweep.attack_impact.std, 0.0);
    assert_eq!(sweep.attack_impact.median, sweep.runs[0].attack_impact);
}

#[test]
fn reruns_are_identical() {
    let mut cfg = with_adversary(small(), 2, Some(0.2), AttackConfig::dyn_opt());
    cfg.aggregator = AggregatorConfig::new(AggregatorKind::TrimmedMean);
    assert_eq!(run_experiment(&cfg, 8).unwrap(), run_experiment(&cfg, 8).unwrap());
}

#[test]
fn adaptive_defense_runs_end_to_end() {
    let mut cfg = with_adversary(small(), 3, Some(0.2), AttackConfig::dyn_opt());
    cfg.aggregator = AggregatorConfig::with_tau(AggregatorKind::AdaptiveStolen, 0.5);
    let report = run_experiment(&cfg, 0).unwrap();
    assert_eq!(report.per_round.len(), cfg.rounds);
    assert!(report.per_round.iter().all(|r| r.test_accuracy.is_finite()));
}

#[test]
fn config_errors_name_the_field() {
    let mut value = serde_json::to_value(small()).unwrap();
    value.as_object_mut().unwrap().remove("rounds");
    let err = parse_config(&value.to_string()).unwrap_err();
    assert_eq!(err.to_string(), "missing field: rounds");
}
