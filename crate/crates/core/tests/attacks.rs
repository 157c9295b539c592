use nmq_puf::attacks::{
    cmaes_reliability_attack, collect_reliability_data, evaluate_accuracy, parity_transform,
    train_logistic_regression, LinearModel, LogisticConfig, Model, ReliabilityAttackConfig,
};
use nmq_puf::dataset::{
    generate_dataset, sample_challenges, sample_challenges_excluding, CrpRecord,
};
use nmq_puf::entropy::{EnvironmentCondition, InstanceConfig, NoiseModel};
use nmq_puf::puf::{ApufInstance, Architecture, Puf};

fn env() -> EnvironmentCondition {
    EnvironmentCondition::enrollment()
}

#[test]
fn logistic_regression_breaks_apuf() {
    let cfg = InstanceConfig::default().with_seed(21);
    let ds = generate_dataset(
        &cfg,
        Architecture::Apuf,
        11_000,
        21,
        &env(),
        &NoiseModel::none(),
    )
    .unwrap();
    let (train, test) = ds.split(1.0 / 11.0).unwrap();
    let (model, report) =
        train_logistic_regression(&train, &test, &LogisticConfig::default(), "APUF").unwrap();
    assert!(report.test_accuracy >= 0.95, "{}", report.test_accuracy);
    assert_eq!(report.overlap, 0);

    // Recount the accuracy by hand from the model margin.
    let hits = test
        .iter()
        .filter(|r| (model.margin(&r.challenge) < 0.0) == r.response)
        .count();
    assert_eq!(report.test_accuracy, hits as f64 / test.len() as f64);
}

#[test]
fn true_weights_separate_every_crp() {
    let puf = ApufInstance::new(InstanceConfig::default().with_seed(22).instance().unwrap());
    let model = LinearModel {
        weights: puf.linear_weights(),
    };
    let records: Vec<CrpRecord> = sample_challenges(64, 5000, 22)
        .unwrap()
        .into_iter()
        .map(|c| CrpRecord::new(c, puf.eval(&c, &env(), &NoiseModel::none(), 0).unwrap()))
        .collect();
    assert_eq!(evaluate_accuracy(&model, &records).unwrap(), 1.0);
    let phi = parity_transform(&records[0].challenge);
    assert_eq!(phi.len(), 65);
    assert_eq!(*phi.last().unwrap(), 1.0);
}

#[test]
fn overlapping_splits_are_rejected() {
    let cfg = InstanceConfig::default();
    let ds = generate_dataset(
        &cfg,
        Architecture::Apuf,
        100,
        1,
        &env(),
        &NoiseModel::none(),
    )
    .unwrap();
    assert!(train_logistic_regression(
        &ds.records,
        &ds.records[..5],
        &LogisticConfig::default(),
        "x"
    )
    .is_err());
}

fn reliability_accuracy(arch: Architecture, seed: u64) -> (f64, bool) {
    let cfg = InstanceConfig::desk().with_seed(seed);
    let puf = arch.build(&cfg).unwrap();
    let train_c = sample_challenges(32, 10_000, seed).unwrap();
    let test_c = sample_challenges_excluding(32, 2000, seed, &train_c).unwrap();
    let train = collect_reliability_data(&puf, &train_c, &env(), &cfg.noise(), 11).unwrap();
    let test: Vec<CrpRecord> = test_c
        .iter()
        .map(|&c| CrpRecord::new(c, puf.eval(&c, &env(), &NoiseModel::none(), 0).unwrap()))
        .collect();
    let attack = ReliabilityAttackConfig {
        epsilon_grid: vec![0.05],
        seed,
        ..ReliabilityAttackConfig::default()
    };
    let (model, report) = cmaes_reliability_attack(&train, &test, &attack, "target").unwrap();
    assert_eq!(
        model.predict(&test[0].challenge),
        model.predict(&test[0].challenge)
    );
    (report.test_accuracy, report.failed)
}

#[test]
fn reliability_attack_recovers_noisy_apuf() {
    let (acc, failed) = reliability_accuracy(Architecture::Apuf, 23);
    assert!(!failed);
    assert!(acc >= 0.90, "{acc}");
}

#[test]
fn reliability_attack_does_not_transfer_to_nmq() {
    let (acc, _) = reliability_accuracy(Architecture::NmqRo { g: 400 }, 24);
    assert!((0.45..=0.60).contains(&acc), "{acc}");
}
