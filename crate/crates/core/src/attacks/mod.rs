//! Model-building attacks and their common reporting surface.

mod cmaes;
mod features;
mod fourier;
mod logistic;
mod mlp;
mod reliability;
mod report;

pub use cmaes::{CmaEs, CmaEsConfig, CmaEsOutcome};
pub use features::{parity_transform, sign_encoding};
pub use fourier::{fourier_low_degree_attack, subset_count, FourierConfig, FourierModel};
pub use logistic::{train_logistic_regression, LinearModel, LogisticConfig};
pub use mlp::{train_mlp, Activation, MlpConfig, MlpModel};
pub use reliability::{
    cmaes_reliability_attack, collect_reliability_data, ReliabilityAttackConfig, ReliabilityRecord,
};
pub use report::{AttackKind, AttackReport};

use std::collections::HashSet;

use crate::dataset::CrpRecord;
use crate::entropy::{Challenge, EnvironmentCondition, NoiseModel};
use crate::error::{Error, Result};
use crate::puf::Puf;

/// A trained predictor of responses.
pub trait Model {
    fn predict(&self, c: &Challenge) -> bool;
}

/// Uses a PUF instance itself, evaluated noiselessly at enrollment, as the model.
pub struct PufOracle<'a, P>(pub &'a P);

impl<P: Puf> Model for PufOracle<'_, P> {
    fn predict(&self, c: &Challenge) -> bool {
        self.0
            .eval(
                c,
                &EnvironmentCondition::enrollment(),
                &NoiseModel::none(),
                0,
            )
            .unwrap_or(false)
    }
}

/// Fraction of test records the model predicts correctly.
pub fn evaluate_accuracy<M: Model + ?Sized>(model: &M, test: &[CrpRecord]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let hits = test
        .iter()
        .filter(|r| model.predict(&r.challenge) == r.response)
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// Number of test challenges that also appear in the training set.
pub fn challenge_overlap(train: &[CrpRecord], test: &[CrpRecord]) -> usize {
    let seen: HashSet<Challenge> = train.iter().map(|r| r.challenge).collect();
    test.iter().filter(|r| seen.contains(&r.challenge)).count()
}

pub(crate) fn ensure_disjoint(train: &[CrpRecord], test: &[CrpRecord]) -> Result<()> {
    let overlap = challenge_overlap(train, test);
    if overlap > 0 {
        return Err(Error::Attack(format!(
            "{overlap} test challenges also appear in the training set"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_width(records: &[CrpRecord]) -> Result<usize> {
    let n = records
        .first()
        .ok_or(Error::Empty("training set"))?
        .challenge
        .len();
    if let Some(r) = records.iter().find(|r| r.challenge.len() != n) {
        return Err(Error::ChallengeLength {
            expected: n,
            got: r.challenge.len(),
        });
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{random_labels, sample_challenges};
    use crate::entropy::InstanceConfig;
    use crate::puf::Architecture;

    struct Constant(bool);
    impl Model for Constant {
        fn predict(&self, _: &Challenge) -> bool {
            self.0
        }
    }

    #[test]
    fn oracle_copy_is_perfect_on_noiseless_data() {
        let cfg = InstanceConfig::default();
        let puf = Architecture::NmqRo { g: 400 }.build(&cfg).unwrap();
        let challenges = sample_challenges(64, 2000, 3).unwrap();
        let env = EnvironmentCondition::enrollment();
        let records: Vec<CrpRecord> = challenges
            .iter()
            .map(|c| CrpRecord::new(*c, puf.eval(c, &env, &NoiseModel::none(), 0).unwrap()))
            .collect();
        assert_eq!(evaluate_accuracy(&PufOracle(&puf), &records).unwrap(), 1.0);
    }

    #[test]
    fn random_guessing_stays_within_binomial_bound() {
        let test = random_labels(&sample_challenges(64, 10_000, 4).unwrap(), 9);
        let acc = evaluate_accuracy(&Constant(true), &test).unwrap();
        // 3 sigma of Binomial(10_000, 0.5) / 10_000 = 0.015.
        assert!((acc - 0.5).abs() <= 0.015, "{acc}");
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(matches!(
            evaluate_accuracy(&Constant(true), &[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn overlap_is_detected() {
        let cs = sample_challenges(16, 10, 1).unwrap();
        let recs: Vec<CrpRecord> = cs.iter().map(|&c| CrpRecord::new(c, true)).collect();
        assert_eq!(challenge_overlap(&recs[..6], &recs[4..]), 2);
        assert!(ensure_disjoint(&recs[..6], &recs[4..]).is_err());
        assert!(ensure_disjoint(&recs[..6], &recs[6..]).is_ok());
    }
}
