use std::time::Instant;

use rand::seq::SliceRandom;

use super::report::digest;
use super::{
    ensure_disjoint, ensure_width, evaluate_accuracy, parity_transform, AttackKind, AttackReport,
    Model,
};
use crate::dataset::CrpRecord;
use crate::entropy::Challenge;
use crate::error::Result;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    /// Training stops early once the gradient norm falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: None,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl LogisticConfig {
    fn describe(&self) -> String {
        format!(
            "lr learning_rate={} epochs={} batch={:?} tolerance={} seed={}",
            self.learning_rate, self.epochs, self.batch_size, self.tolerance, self.seed
        )
    }
}

/// Linear model over parity features. Predicts 1 iff `w . phi(c) < 0`, matching
/// the arbiter convention that a negative top-minus-bottom delay yields 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn margin(&self, c: &Challenge) -> f64 {
        parity_transform(c)
            .iter()
            .zip(&self.weights)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn negated(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| -w).collect(),
        }
    }
}

impl Model for LinearModel {
    fn predict(&self, c: &Challenge) -> bool {
        self.margin(c) < 0.0
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradient descent on the mean cross-entropy of `P(r = 1) = sigmoid(-w . phi)`.
pub fn train_logistic_regression(
    train: &[CrpRecord],
    test: &[CrpRecord],
    config: &LogisticConfig,
    target: &str,
) -> Result<(LinearModel, AttackReport)> {
    let start = Instant::now();
    let n = ensure_width(train)?;
    ensure_disjoint(train, test)?;
    let dim = n + 1;
    let features: Vec<f64> = train
        .iter()
        .flat_map(|r| parity_transform(&r.challenge))
        .collect();
    let labels: Vec<f64> = train
        .iter()
        .map(|r| f64::from(u8::from(r.response)))
        .collect();

    let mut w = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stream = rng::stream(config.seed, &[0x6c72]);
    let batch = config
        .batch_size
        .unwrap_or(train.len())
        .clamp(1, train.len());
    let mut converged = false;

    'epochs: for _ in 0..config.epochs {
        if batch < train.len() {
            order.shuffle(&mut stream);
        }
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                let phi = &features[i * dim..(i + 1) * dim];
                let z: f64 = -phi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
                let err = sigmoid(z) - labels[i];
                for (g, &p) in grad.iter_mut().zip(phi) {
                    *g -= err * p;
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            let mut norm = 0.0;
            for (wi, g) in w.iter_mut().zip(&grad) {
                let g = g * scale;
                norm += g * g;
                *wi -= config.learning_rate * g;
            }
            if batch == train.len() && norm.sqrt() < config.tolerance {
                converged = true;
                break 'epochs;
            }
        }
    }

    let model = LinearModel { weights: w };
    let train_accuracy = evaluate_accuracy(&model, train)?;
    let test_accuracy = if test.is_empty() {
        f64::NAN
    } else {
        evaluate_accuracy(&model, test)?
    };
    let mut notes = vec!["features: additive-delay parity transform".to_string()];
    if !converged {
        notes.push(format!(
            "gradient norm above {} after {} epochs",
            config.tolerance, config.epochs
        ));
    }
    let report = AttackReport {
        attack: AttackKind::LogisticRegression,
        target: target.to_string(),
        n,
        train_crps: train.len(),
        test_crps: test.len(),
        overlap: 0,
        train_accuracy,
        test_accuracy,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
        config_digest: digest(&config.describe()),
        converged,
        failed: false,
        notes,
    };
    Ok((model, report))
}
