use std::time::Instant;

use super::report::digest;
use super::{ensure_disjoint, ensure_width, evaluate_accuracy, AttackKind, AttackReport, Model};
use crate::dataset::CrpRecord;
use crate::entropy::Challenge;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FourierConfig {
    pub degree: usize,
    /// Upper bound on the number of estimated coefficients.
    pub max_subsets: u64,
}

impl Default for FourierConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            max_subsets: 1 << 20,
        }
    }
}

/// Number of subsets of `{0..n}` with at most `degree` elements.
pub fn subset_count(n: usize, degree: usize) -> u64 {
    let mut total: u64 = 0;
    let mut binom: u64 = 1;
    for i in 0..=degree.min(n) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    total
}

fn subset_masks(n: usize, degree: usize) -> Vec<u64> {
    fn extend(start: usize, n: usize, left: usize, mask: u64, out: &mut Vec<u64>) {
        out.push(mask);
        if left == 0 {
            return;
        }
        for i in start..n {
            extend(i + 1, n, left - 1, mask | (1u64 << i), out);
        }
    }
    let mut out = Vec::new();
    extend(0, n, degree, 0, &mut out);
    out
}

/// Character `chi_S(x) = prod_{i in S} (1 - 2 c_i)` as ±1.
#[inline]
fn character(bits: u64, mask: u64) -> f64 {
    if (bits & mask).count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Low-degree Fourier approximation. Responses are encoded `r -> 1 - 2r`; the
/// model predicts 1 iff the approximation is negative.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierModel {
    pub n: usize,
    pub degree: usize,
    pub masks: Vec<u64>,
    pub coefficients: Vec<f64>,
}

impl FourierModel {
    pub fn value(&self, c: &Challenge) -> f64 {
        self.masks
            .iter()
            .zip(&self.coefficients)
            .map(|(&m, &w)| w * character(c.bits(), m))
            .sum()
    }
}

impl Model for FourierModel {
    fn predict(&self, c: &Challenge) -> bool {
        self.value(c) < 0.0
    }
}

/// Estimates every coefficient of degree at most `d` as the empirical mean of
/// `y * chi_S(c)` over the training set.
pub fn fourier_low_degree_attack(
    train: &[CrpRecord],
    test: &[CrpRecord],
    config: &FourierConfig,
    target: &str,
) -> Result<(FourierModel, AttackReport)> {
    let start = Instant::now();
    let n = ensure_width(train)?;
    ensure_disjoint(train, test)?;
    let count = subset_count(n, config.degree);
    if count > config.max_subsets {
        return Err(Error::InvalidConfig(format!(
            "degree {} over {n} bits needs {count} coefficients, budget is {}",
            config.degree, config.max_subsets
        )));
    }
    let masks = subset_masks(n, config.degree);
    debug_assert_eq!(masks.len() as u64, count);
    let mut sums = vec![0.0; masks.len()];
    for r in train {
        let y = if r.response { -1.0 } else { 1.0 };
        let bits = r.challenge.bits();
        for (s, &m) in sums.iter_mut().zip(&masks) {
            *s += y * character(bits, m);
        }
    }
    let inv = 1.0 / train.len() as f64;
    let model = FourierModel {
        n,
        degree: config.degree,
        masks,
        coefficients: sums.into_iter().map(|s| s * inv).collect(),
    };
    let train_accuracy = evaluate_accuracy(&model, train)?;
    let test_accuracy = if test.is_empty() {
        f64::NAN
    } else {
        evaluate_accuracy(&model, test)?
    };
    let report = AttackReport {
        attack: AttackKind::Fourier,
        target: target.to_string(),
        n,
        train_crps: train.len(),
        test_crps: test.len(),
        overlap: 0,
        train_accuracy,
        test_accuracy,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: 0,
        config_digest: digest(&format!("fourier degree={}", config.degree)),
        converged: true,
        failed: false,
        notes: vec![format!("{count} coefficients")],
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::sample_challenges;

    fn labelled(n: usize, count: u64, f: impl Fn(&Challenge) -> bool) -> Vec<CrpRecord> {
        sample_challenges(n, count, 11)
            .unwrap()
            .into_iter()
            .map(|c| CrpRecord::new(c, f(&c)))
            .collect()
    }

    #[test]
    fn subset_counts() {
        assert_eq!(subset_count(32, 2), 1 + 32 + 496);
        assert_eq!(subset_count(64, 1), 65);
        assert_eq!(subset_masks(10, 3).len() as u64, subset_count(10, 3));
        assert_eq!(subset_count(3, 5), 8);
    }

    #[test]
    fn dictator_is_learned_at_degree_one() {
        let recs = labelled(32, 4000, |c| c.bit(7));
        let cfg = FourierConfig {
            degree: 1,
            ..Default::default()
        };
        let (_, report) =
            fourier_low_degree_attack(&recs[..3000], &recs[3000..], &cfg, "dictator").unwrap();
        assert_eq!(report.test_accuracy, 1.0);
    }

    #[test]
    fn three_bit_parity_needs_degree_three() {
        // Most of a 12-bit cube, so the spurious coefficients stay small.
        let recs = labelled(12, 4096, |c| c.bit(1) ^ c.bit(5) ^ c.bit(9));
        let (train, test) = recs.split_at(3500);
        let d2 = FourierConfig {
            degree: 2,
            ..Default::default()
        };
        let (_, r2) = fourier_low_degree_attack(train, test, &d2, "parity").unwrap();
        // Low-degree coefficients of the parity are pure sampling noise.
        assert!(r2.test_accuracy < 0.75, "{}", r2.test_accuracy);
        let d3 = FourierConfig {
            degree: 3,
            ..Default::default()
        };
        let (_, r3) = fourier_low_degree_attack(train, test, &d3, "parity").unwrap();
        assert_eq!(r3.test_accuracy, 1.0);
    }

    #[test]
    fn subset_budget_is_enforced() {
        let recs = labelled(64, 10, |_| true);
        let cfg = FourierConfig {
            degree: 4,
            max_subsets: 10_000,
        };
        assert!(matches!(
            fourier_low_degree_attack(&recs, &[], &cfg, "x"),
            Err(Error::InvalidConfig(_))
        ));
    }
}
