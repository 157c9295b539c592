//! Reliability side-channel attack: CMA-ES searches for additive-delay weights
//! whose margin predicts which challenges give unstable responses.

use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};

use super::cmaes::{CmaEs, CmaEsConfig};
use super::report::digest;
use super::{
    ensure_disjoint, evaluate_accuracy, parity_transform, AttackKind, AttackReport, LinearModel,
};
use crate::dataset::CrpRecord;
use crate::entropy::{Challenge, EnvironmentCondition, NoiseModel};
use crate::error::{Error, Result};
use crate::puf::Puf;
use crate::rng;

pub const MIN_RELIABILITY_EVALS: u32 = 11;

/// Repeated evaluations of one challenge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReliabilityRecord {
    pub challenge: Challenge,
    pub evals: u32,
    pub ones: u32,
}

impl ReliabilityRecord {
    /// Majority response; ties resolve to 0.
    pub fn majority(&self) -> bool {
        2 * self.ones > self.evals
    }

    /// `|2 * (fraction of ones) - 1|`: 1 for a perfectly stable response.
    pub fn reliability(&self) -> f64 {
        (2.0 * self.ones as f64 / self.evals as f64 - 1.0).abs()
    }
}

/// Evaluates each challenge `m` times with draws `0..m`.
pub fn collect_reliability_data<P: Puf>(
    puf: &P,
    challenges: &[Challenge],
    env: &EnvironmentCondition,
    noise: &NoiseModel,
    m: u32,
) -> Result<Vec<ReliabilityRecord>> {
    if m < MIN_RELIABILITY_EVALS {
        return Err(Error::InvalidConfig(format!(
            "reliability estimation needs at least {MIN_RELIABILITY_EVALS} evaluations, got {m}"
        )));
    }
    let mut ones = vec![0u32; challenges.len()];
    for draw in 0..u64::from(m) {
        for (count, r) in ones
            .iter_mut()
            .zip(puf.responses(challenges, env, noise, draw)?)
        {
            *count += u32::from(r);
        }
    }
    Ok(challenges
        .iter()
        .zip(ones)
        .map(|(&challenge, ones)| ReliabilityRecord {
            challenge,
            evals: m,
            ones,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityAttackConfig {
    pub cmaes: CmaEsConfig,
    /// Margin thresholds, as multiples of the margin standard deviation.
    pub epsilon_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for ReliabilityAttackConfig {
    fn default() -> Self {
        Self {
            cmaes: CmaEsConfig {
                max_generations: 2000,
                ..CmaEsConfig::default()
            },
            epsilon_grid: vec![0.025, 0.05, 0.1, 0.2],
            seed: 0,
        }
    }
}

impl ReliabilityAttackConfig {
    fn describe(&self) -> String {
        format!(
            "cmaes sigma0={} population={:?} generations={} restarts={} tol_x={} tol_fun={} flat={} eps={:?} seed={}",
            self.cmaes.sigma0,
            self.cmaes.population,
            self.cmaes.max_generations,
            self.cmaes.max_restarts,
            self.cmaes.tol_x,
            self.cmaes.tol_fun,
            self.cmaes.flat_generations,
            self.epsilon_grid,
            self.seed
        )
    }
}

struct Fitness {
    dim: usize,
    features: Vec<f64>,
    reliability: Vec<f64>,
    mean_r: f64,
    ss_r: f64,
}

impl Fitness {
    fn new(records: &[ReliabilityRecord]) -> Self {
        let dim = records[0].challenge.len() + 1;
        let features = records
            .iter()
            .flat_map(|r| parity_transform(&r.challenge))
            .collect();
        let reliability: Vec<f64> = records.iter().map(ReliabilityRecord::reliability).collect();
        let mean_r = reliability.iter().sum::<f64>() / reliability.len() as f64;
        let ss_r = reliability.iter().map(|r| (r - mean_r).powi(2)).sum();
        Self {
            dim,
            features,
            reliability,
            mean_r,
            ss_r,
        }
    }

    /// Pearson correlation between measured reliability and the indicator
    /// `|w . phi| > epsilon * std(w . phi)`.
    fn score(&self, w: &[f64], epsilon: f64) -> f64 {
        let margins: Vec<f64> = self
            .features
            .chunks_exact(self.dim)
            .map(|phi| phi.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
        let len = margins.len() as f64;
        let mean_m = margins.iter().sum::<f64>() / len;
        let std_m = (margins.iter().map(|m| (m - mean_m).powi(2)).sum::<f64>() / len).sqrt();
        let cut = epsilon * std_m;
        let mut stable = 0.0;
        let mut cov = 0.0;
        for (m, r) in margins.iter().zip(&self.reliability) {
            if m.abs() > cut {
                stable += 1.0;
                cov += r - self.mean_r;
            }
        }
        // For a 0/1 indicator h with mean p: sum (h - p)(r - mean_r) = sum_{h=1} (r - mean_r).
        let p = stable / len;
        let ss_h = len * p * (1.0 - p);
        if ss_h == 0.0 {
            return -1.0;
        }
        cov / (ss_h * self.ss_r).sqrt()
    }
}

/// Runs CMA-ES for every threshold in the grid and keeps the best-scoring
/// weights. The recovered sign is fixed by agreement with the majority
/// responses of the training records.
pub fn cmaes_reliability_attack(
    train: &[ReliabilityRecord],
    test: &[CrpRecord],
    config: &ReliabilityAttackConfig,
    target: &str,
) -> Result<(LinearModel, AttackReport)> {
    let start = Instant::now();
    let majority: Vec<CrpRecord> = train
        .iter()
        .map(|r| CrpRecord::new(r.challenge, r.majority()))
        .collect();
    let n = super::ensure_width(&majority)?;
    ensure_disjoint(&majority, test)?;
    if let Some(r) = train.iter().find(|r| r.evals < MIN_RELIABILITY_EVALS) {
        return Err(Error::InvalidConfig(format!(
            "challenge {} has only {} evaluations",
            r.challenge, r.evals
        )));
    }
    if config.epsilon_grid.is_empty() || config.epsilon_grid.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidConfig(
            "epsilon grid must be non-empty and non-negative".into(),
        ));
    }

    let fitness = Fitness::new(train);
    let mut notes = vec!["features: additive-delay parity transform".to_string()];
    let mut failed = false;
    let mut converged = false;
    let mut weights = vec![0.0; n + 1];

    if fitness.ss_r == 0.0 {
        failed = true;
        notes.push("reliability is constant across challenges; no side channel to exploit".into());
    } else {
        let mut stream = rng::stream(config.seed, &[0x7265_6c69]);
        let x0: Vec<f64> = (0..=n)
            .map(|_| StandardNormal.sample(&mut stream))
            .collect();
        let mut best = (f64::NEG_INFINITY, 0.0, Vec::new(), false);
        for (i, &epsilon) in config.epsilon_grid.iter().enumerate() {
            let cma_cfg = CmaEsConfig {
                seed: rng::mix_all(config.seed, &[i as u64]),
                ..config.cmaes.clone()
            };
            let out = CmaEs::new(n + 1, cma_cfg)?.maximize(&x0, |w| fitness.score(w, epsilon))?;
            log::debug!(
                "{target}: epsilon {epsilon} fitness {:.4} after {} generations",
                out.best_fitness,
                out.generations
            );
            if out.best_fitness > best.0 {
                best = (out.best_fitness, epsilon, out.best, !out.collapsed);
            }
        }
        notes.push(format!("best fitness {:.4} at epsilon {}", best.0, best.1));
        converged = best.3;
        weights = best.2;
        if !(best.0 > 0.0) {
            failed = true;
            notes.push("no positive correlation found".into());
        }
    }

    let mut model = LinearModel { weights };
    let mut train_accuracy = evaluate_accuracy(&model, &majority)?;
    if train_accuracy < 0.5 {
        model = model.negated();
        train_accuracy = 1.0 - train_accuracy;
    }
    let test_accuracy = if test.is_empty() {
        f64::NAN
    } else {
        evaluate_accuracy(&model, test)?
    };
    let report = AttackReport {
        attack: AttackKind::CmaEsReliability,
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
        failed,
        notes,
    };
    Ok((model, report))
}
