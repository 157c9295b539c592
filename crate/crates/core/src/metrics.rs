//! Quality metrics: uniformity, uniqueness, bit error rate, toggle-gap
//! statistics and authentication-failure probability.

use std::collections::{BTreeMap, HashSet};

use rand::RngCore;
use rayon::prelude::*;

use crate::entropy::{Challenge, EnvironmentCondition, NoiseModel};
use crate::error::{Error, Result};
use crate::puf::{NmqRoInstance, Puf};
use crate::rng;

/// Responses of one instance to a list of distinct challenges.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSet {
    pub instance: String,
    pub challenges: Vec<Challenge>,
    pub responses: Vec<bool>,
    pub env: EnvironmentCondition,
    pub draws: Vec<u64>,
}

impl ResponseSet {
    pub fn new(
        instance: impl Into<String>,
        challenges: Vec<Challenge>,
        responses: Vec<bool>,
        env: EnvironmentCondition,
        draws: Vec<u64>,
    ) -> Result<Self> {
        if challenges.len() != responses.len() || draws.len() != responses.len() {
            return Err(Error::InvalidConfig(format!(
                "response set has {} challenges, {} responses and {} draw indices",
                challenges.len(),
                responses.len(),
                draws.len()
            )));
        }
        let mut seen = HashSet::with_capacity(challenges.len());
        if let Some(dup) = challenges.iter().find(|c| !seen.insert(**c)) {
            return Err(Error::InvalidConfig(format!("challenge {dup} repeated")));
        }
        Ok(Self {
            instance: instance.into(),
            challenges,
            responses,
            env,
            draws,
        })
    }

    /// Single evaluation of every challenge with draw index `draw`.
    pub fn collect<P: Puf>(
        instance: impl Into<String>,
        puf: &P,
        challenges: &[Challenge],
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<Self> {
        let responses = puf.responses(challenges, env, noise, draw)?;
        Self::new(
            instance,
            challenges.to_vec(),
            responses,
            *env,
            vec![draw; challenges.len()],
        )
    }

    /// Enrollment: one evaluation at the enrollment temperature, draw 0, no
    /// majority voting.
    pub fn enroll<P: Puf>(
        instance: impl Into<String>,
        puf: &P,
        challenges: &[Challenge],
        noise: &NoiseModel,
    ) -> Result<Self> {
        Self::collect(
            instance,
            puf,
            challenges,
            &EnvironmentCondition::enrollment(),
            noise,
            0,
        )
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// Normalized Hamming weight of a bit sequence.
pub fn uniformity_of(bits: &[bool]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::Empty("uniformity of an empty response set"));
    }
    Ok(bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64)
}

pub fn uniformity(rs: &ResponseSet) -> Result<f64> {
    uniformity_of(&rs.responses)
}

/// Per-group normalized Hamming distances between two response sets.
///
/// Responses are grouped into `group_bits`-bit words in challenge order; a
/// trailing partial word is dropped.
pub fn uniqueness_groups(a: &ResponseSet, b: &ResponseSet, group_bits: usize) -> Result<Vec<f64>> {
    if a.challenges != b.challenges {
        return Err(Error::ChallengeMismatch);
    }
    hamming_groups(&a.responses, &b.responses, group_bits)
}

pub fn hamming_groups(a: &[bool], b: &[bool], group_bits: usize) -> Result<Vec<f64>> {
    if group_bits == 0 {
        return Err(Error::InvalidConfig("group_bits must be >= 1".into()));
    }
    if a.len() != b.len() {
        return Err(Error::ChallengeMismatch);
    }
    let groups: Vec<f64> = a
        .chunks_exact(group_bits)
        .zip(b.chunks_exact(group_bits))
        .map(|(x, y)| x.iter().zip(y).filter(|(p, q)| p != q).count() as f64 / group_bits as f64)
        .collect();
    if groups.is_empty() {
        return Err(Error::Empty("fewer responses than one uniqueness group"));
    }
    Ok(groups)
}

/// Mean normalized Hamming distance over `group_bits`-bit groups.
pub fn uniqueness(a: &ResponseSet, b: &ResponseSet, group_bits: usize) -> Result<f64> {
    let groups = uniqueness_groups(a, b, group_bits)?;
    Ok(mean(&groups))
}

/// Distances for every unordered pair of response sets.
pub fn all_pairs_uniqueness(sets: &[ResponseSet], group_bits: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            out.push(uniqueness(&sets[i], &sets[j], group_bits)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub temperature: f64,
    pub mismatches: u64,
    pub comparisons: u64,
}

impl BerPoint {
    pub fn error_ratio(&self) -> f64 {
        if self.comparisons == 0 {
            0.0
        } else {
            self.mismatches as f64 / self.comparisons as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerReport {
    pub enrollment_temperature: f64,
    pub evals_per_challenge: usize,
    pub points: Vec<BerPoint>,
}

impl BerReport {
    pub fn worst(&self) -> Option<BerPoint> {
        self.points
            .iter()
            .copied()
            .max_by(|a, b| a.error_ratio().total_cmp(&b.error_ratio()))
    }

    pub fn at(&self, temperature: f64) -> Option<BerPoint> {
        self.points
            .iter()
            .copied()
            .find(|p| p.temperature == temperature)
    }
}

pub const DEFAULT_BER_EVALS: usize = 100;
pub const DEFAULT_BER_TEMPERATURES: [f64; 6] = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0];

/// Re-evaluates every enrolled challenge `evals` times at `env` using draws
/// `first_draw..first_draw + evals` and counts disagreements with the enrolled bit.
pub fn bit_error_rate<P: Puf>(
    puf: &P,
    enrolled: &ResponseSet,
    env: &EnvironmentCondition,
    noise: &NoiseModel,
    evals: usize,
    first_draw: u64,
) -> Result<BerPoint> {
    let mismatches = enrolled
        .challenges
        .par_iter()
        .zip(enrolled.responses.par_iter())
        .map(|(c, &reference)| {
            let mut count = 0u64;
            for e in 0..evals as u64 {
                if puf.eval(c, env, noise, first_draw + e)? != reference {
                    count += 1;
                }
            }
            Ok(count)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    Ok(BerPoint {
        temperature: env.temperature(),
        mismatches,
        comparisons: (enrolled.len() * evals) as u64,
    })
}

/// BER at each temperature, with disjoint draw ranges per temperature and none
/// overlapping the enrollment draw.
pub fn ber_sweep<P: Puf>(
    puf: &P,
    enrolled: &ResponseSet,
    temperatures: &[f64],
    noise: &NoiseModel,
    evals: usize,
) -> Result<BerReport> {
    let enrollment_temperature = enrolled.env.enrollment_temperature();
    let points = temperatures
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let env = EnvironmentCondition::with_range(
                t,
                enrollment_temperature,
                crate::entropy::DEFAULT_TEMPERATURE_RANGE,
            )?;
            let first = enrolled.draws.iter().max().copied().unwrap_or(0) + 1 + (i * evals) as u64;
            bit_error_rate(puf, enrolled, &env, noise, evals, first)
        })
        .collect::<Result<_>>()?;
    Ok(BerReport {
        enrollment_temperature,
        evals_per_challenge: evals,
        points,
    })
}

/// Trap counter final value minus toggle count, noiseless closed form.
pub fn toggle_gaps(
    inst: &NmqRoInstance,
    challenges: &[Challenge],
    env: &EnvironmentCondition,
    noise: &NoiseModel,
    draw: u64,
) -> Result<Vec<i64>> {
    challenges
        .par_iter()
        .map(|c| inst.toggle_gap(c, env, noise, draw))
        .collect()
}

/// Counts per value after subtracting the rounded mean.
pub fn centered_histogram(values: &[i64]) -> BTreeMap<i64, usize> {
    let m = if values.is_empty() {
        0
    } else {
        (values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64).round() as i64
    };
    let mut hist = BTreeMap::new();
    for &v in values {
        *hist.entry(v - m).or_insert(0) += 1;
    }
    hist
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Authentication threshold set 5 % below `(100 % - BER)`, rounded down.
pub fn margin_threshold(ber: f64, n_crps: u64) -> u64 {
    let t = (1.0 - ber - 0.05) * n_crps as f64;
    (t + 1e-9).floor().max(0.0) as u64
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `P(Binomial(n, 1 - ber) < threshold)`, summed exactly in log space.
pub fn exact_failure_probability(ber: f64, n_crps: u64, threshold: u64) -> f64 {
    let p_correct = 1.0 - ber;
    if threshold == 0 {
        return 0.0;
    }
    if p_correct >= 1.0 {
        return if threshold > n_crps { 1.0 } else { 0.0 };
    }
    if p_correct <= 0.0 {
        return 1.0;
    }
    let (lp, lq) = (p_correct.ln(), ber.ln());
    // ln k! built incrementally so the sum stays O(threshold).
    let ln_n = ln_factorial(n_crps);
    let mut ln_k = 0.0;
    let mut ln_nk = ln_factorial(n_crps);
    let upper = threshold.min(n_crps + 1);
    let mut total = 0.0;
    for k in 0..upper {
        if k > 0 {
            ln_k += (k as f64).ln();
            ln_nk -= ((n_crps - k + 1) as f64).ln();
        }
        let term = ln_n - ln_k - ln_nk + k as f64 * lp + (n_crps - k) as f64 * lq;
        total += term.exp();
    }
    total.min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub failures: u64,
    pub trials: u64,
    pub probability: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthFailure {
    pub ber: f64,
    pub n_crps: u64,
    pub threshold: u64,
    pub monte_carlo: MonteCarloEstimate,
    pub exact: f64,
}

const TRIALS_PER_CHUNK: u64 = 8192;

/// Simulates `trials` authentications, each with `n_crps` independent
/// responses that are wrong with probability `ber`; counts those with fewer
/// than `threshold` correct responses.
pub fn monte_carlo_failure(
    ber: f64,
    n_crps: u64,
    threshold: u64,
    trials: u64,
    seed: u64,
) -> MonteCarloEstimate {
    // Compare raw 64-bit words against ber * 2^64.
    let cutoff = if ber >= 1.0 {
        u64::MAX
    } else {
        (ber * 18_446_744_073_709_551_616.0) as u64
    };
    let always_wrong = ber >= 1.0;
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let failures: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = rng::stream(seed, &[0x6175_7468, chunk]);
            let count = TRIALS_PER_CHUNK.min(trials - chunk * TRIALS_PER_CHUNK);
            let mut failures = 0u64;
            for _ in 0..count {
                let mut correct = 0u64;
                for _ in 0..n_crps {
                    let wrong = always_wrong || stream.next_u64() < cutoff;
                    correct += u64::from(!wrong);
                }
                failures += u64::from(correct < threshold);
            }
            failures
        })
        .sum();
    let p = if trials == 0 {
        0.0
    } else {
        failures as f64 / trials as f64
    };
    MonteCarloEstimate {
        failures,
        trials,
        probability: p,
        std_error: (p * (1.0 - p) / trials.max(1) as f64).sqrt(),
    }
}

pub fn auth_failure_probability(
    ber: f64,
    n_crps: u64,
    threshold: u64,
    trials: u64,
    seed: u64,
) -> Result<AuthFailure> {
    if !(0.0..=1.0).contains(&ber) {
        return Err(Error::InvalidConfig(format!("ber {ber} outside [0, 1]")));
    }
    if threshold > n_crps {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} exceeds CRP count {n_crps}"
        )));
    }
    Ok(AuthFailure {
        ber,
        n_crps,
        threshold,
        monte_carlo: monte_carlo_failure(ber, n_crps, threshold, trials, seed),
        exact: exact_failure_probability(ber, n_crps, threshold),
    })
}

/// Smallest CRP count from which the exact failure probability under the
/// 5 %-below threshold rule stays at or below `target` up to `max_crps`.
pub fn required_crps(ber: f64, target: f64, max_crps: u64) -> Option<u64> {
    let mut answer = None;
    for n in (1..=max_crps).rev() {
        let p = exact_failure_probability(ber, n, margin_threshold(ber, n));
        if p <= target {
            answer = Some(n);
        } else {
            break;
        }
    }
    answer
}
