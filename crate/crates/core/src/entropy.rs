//! Random instance generation, the challenge-dependent delay model, and the
//! temperature/noise environment shared by every PUF evaluator.
//!
//! Each oscillator (or arbiter lane) owns `n` stages with two selectable delay
//! elements per stage; challenge bit `i` picks which element of stage `i` is in
//! the path. A path delay is the fixed control overhead plus the sum of the
//! selected elements, each drifted linearly with temperature and jittered
//! multiplicatively per evaluation.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

pub const PICOSECOND: f64 = 1e-12;

/// Maximum challenge width supported by the packed representation.
pub const MAX_STAGES: usize = 64;

/// An `n`-bit challenge packed into a `u64`; bit `i` drives stage `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Challenge {
    bits: u64,
    n: u8,
}

impl Challenge {
    pub fn new(bits: u64, n: usize) -> Result<Self> {
        if n == 0 || n > MAX_STAGES {
            return Err(Error::InvalidConfig(format!(
                "challenge width {n} outside 1..={MAX_STAGES}"
            )));
        }
        if n < 64 && bits >> n != 0 {
            return Err(Error::InvalidConfig(format!(
                "challenge value {bits:#x} does not fit in {n} bits"
            )));
        }
        Ok(Self { bits, n: n as u8 })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let packed = bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i));
        Self::new(packed, bits.len())
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        let bits = if n == 64 {
            rng.random::<u64>()
        } else {
            rng.random::<u64>() & ((1u64 << n) - 1)
        };
        Self { bits, n: n as u8 }
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.bits >> i) & 1 == 1
    }

    pub fn with_flipped(&self, i: usize) -> Self {
        Self {
            bits: self.bits ^ (1u64 << i),
            n: self.n,
        }
    }

    /// Number of distinct challenges of width `n`.
    pub fn space_size(n: usize) -> u128 {
        1u128 << n
    }

    /// ±1 encoding of the raw bits (`0 -> +1`, `1 -> -1`).
    pub fn signs(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| if self.bit(i) { -1.0 } else { 1.0 })
    }
}

impl fmt::Display for Challenge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.len().div_ceil(4);
        write!(f, "{:0width$x}", self.bits, width = width)
    }
}

/// Which oscillator (NMQ-RO) or lane (APUF) a delay belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    P,
    Q,
}

impl Side {
    fn index(self) -> usize {
        match self {
            Side::P => 0,
            Side::Q => 1,
        }
    }
}

/// Parameters for sampling an [`EntropySource`] and its default noise model.
///
/// Serialized as line-oriented `key=value` text. All keys are required and
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceConfig {
    pub n: usize,
    pub mu_ps: f64,
    pub sigma_p: f64,
    pub overhead_ps: f64,
    pub kappa_mean: f64,
    pub kappa_sigma: f64,
    pub sigma_rel: f64,
    pub seed: u64,
}

const CONFIG_KEYS: [&str; 8] = [
    "n",
    "mu_ps",
    "sigma_p",
    "overhead_ps",
    "kappa_mean",
    "kappa_sigma",
    "sigma_rel",
    "seed",
];

/// Jitter calibrated so a single NMQ-RO at g=200 shows about 6.5 % BER at the
/// enrollment temperature.
pub const DEFAULT_SIGMA_REL: f64 = 1.7e-3;

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            n: 64,
            mu_ps: 10.0,
            sigma_p: 0.05,
            overhead_ps: 20.0,
            kappa_mean: 1e-3,
            kappa_sigma: 5e-5,
            sigma_rel: DEFAULT_SIGMA_REL,
            seed: 1,
        }
    }
}

impl InstanceConfig {
    /// The 32-stage variant used for attack experiments.
    pub fn desk() -> Self {
        Self {
            n: 32,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.n > MAX_STAGES {
            return bad(format!("n = {} outside 1..={MAX_STAGES}", self.n));
        }
        if !(self.mu_ps > 0.0) || !self.mu_ps.is_finite() {
            return bad(format!("mu_ps must be positive, got {}", self.mu_ps));
        }
        if !(self.sigma_p >= 0.0) || !self.sigma_p.is_finite() {
            return bad(format!(
                "sigma_p must be non-negative, got {}",
                self.sigma_p
            ));
        }
        if !(self.overhead_ps >= 0.0) || !self.overhead_ps.is_finite() {
            return bad(format!(
                "overhead_ps must be non-negative, got {}",
                self.overhead_ps
            ));
        }
        if !self.kappa_mean.is_finite() {
            return bad("kappa_mean must be finite".into());
        }
        if !(self.kappa_sigma >= 0.0) || !self.kappa_sigma.is_finite() {
            return bad(format!(
                "kappa_sigma must be non-negative, got {}",
                self.kappa_sigma
            ));
        }
        if !(self.sigma_rel >= 0.0) || !self.sigma_rel.is_finite() {
            return bad(format!(
                "sigma_rel must be non-negative, got {}",
                self.sigma_rel
            ));
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<EntropySource> {
        EntropySource::sample(self.seed, self)
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma_rel: self.sigma_rel,
            seed: rng::mix(self.seed, 0x6e6f_6973_65),
        }
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "n={}\nmu_ps={}\nsigma_p={}\noverhead_ps={}\nkappa_mean={}\nkappa_sigma={}\nsigma_rel={}\nseed={}\n",
            self.n,
            self.mu_ps,
            self.sigma_p,
            self.overhead_ps,
            self.kappa_mean,
            self.kappa_sigma,
            self.sigma_rel,
            self.seed
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_config_string()).map_err(|e| Error::io(path, e))
    }
}

impl FromStr for InstanceConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = InstanceConfig::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::ConfigParse {
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !CONFIG_KEYS.contains(&key) {
                return Err(parse_err(format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(parse_err(format!("duplicate key {key:?}")));
            }
            let float = || {
                value
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("{key}: {e}")))
            };
            match key {
                "n" => cfg.n = value.parse().map_err(|e| parse_err(format!("n: {e}")))?,
                "mu_ps" => cfg.mu_ps = float()?,
                "sigma_p" => cfg.sigma_p = float()?,
                "overhead_ps" => cfg.overhead_ps = float()?,
                "kappa_mean" => cfg.kappa_mean = float()?,
                "kappa_sigma" => cfg.kappa_sigma = float()?,
                "sigma_rel" => cfg.sigma_rel = float()?,
                "seed" => cfg.seed = value.parse().map_err(|e| parse_err(format!("seed: {e}")))?,
                _ => unreachable!(),
            }
        }
        if let Some(missing) = CONFIG_KEYS.iter().find(|k| !seen.contains(**k)) {
            return Err(Error::InvalidConfig(format!("missing key {missing:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Temperature at evaluation time relative to enrollment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentCondition {
    temperature: f64,
    enrollment_temperature: f64,
}

pub const DEFAULT_ENROLLMENT_TEMPERATURE: f64 = 20.0;
pub const DEFAULT_TEMPERATURE_RANGE: (f64, f64) = (0.0, 50.0);

impl EnvironmentCondition {
    /// Evaluation at `temperature` with enrollment at 20 °C, checked against 0–50 °C.
    pub fn new(temperature: f64) -> Result<Self> {
        Self::with_range(
            temperature,
            DEFAULT_ENROLLMENT_TEMPERATURE,
            DEFAULT_TEMPERATURE_RANGE,
        )
    }

    pub fn with_range(
        temperature: f64,
        enrollment_temperature: f64,
        (min, max): (f64, f64),
    ) -> Result<Self> {
        for t in [temperature, enrollment_temperature] {
            if !(t >= min && t <= max) {
                return Err(Error::TemperatureOutOfRange {
                    temperature: t,
                    min,
                    max,
                });
            }
        }
        Ok(Self {
            temperature,
            enrollment_temperature,
        })
    }

    pub fn enrollment() -> Self {
        Self {
            temperature: DEFAULT_ENROLLMENT_TEMPERATURE,
            enrollment_temperature: DEFAULT_ENROLLMENT_TEMPERATURE,
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn enrollment_temperature(&self) -> f64 {
        self.enrollment_temperature
    }

    /// The same enrollment reference, evaluated at the enrollment temperature.
    pub fn at_enrollment(&self) -> Self {
        Self {
            temperature: self.enrollment_temperature,
            ..*self
        }
    }

    #[inline]
    fn delta(&self) -> f64 {
        self.temperature - self.enrollment_temperature
    }
}

impl Default for EnvironmentCondition {
    fn default() -> Self {
        Self::enrollment()
    }
}

/// Per-evaluation multiplicative Gaussian jitter on every selected element.
///
/// The jitter of one evaluation is a pure function of
/// `(seed, instance salt, side, challenge, draw)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_rel: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma_rel: f64, seed: u64) -> Result<Self> {
        if !(sigma_rel >= 0.0) || !sigma_rel.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma_rel must be non-negative, got {sigma_rel}"
            )));
        }
        Ok(Self { sigma_rel, seed })
    }

    pub fn none() -> Self {
        Self {
            sigma_rel: 0.0,
            seed: 0,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_rel == 0.0
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Per-stage delay tables of one PUF instance: the secret an attacker models.
///
/// Flattened parameter ordering (see [`EntropySource::parameters`]): all delay
/// elements in `[side][stage][bit]` order with side P before Q, followed by the
/// fixed overhead. Temperature coefficients are not part of the parameter
/// vector; they only act away from the enrollment temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySource {
    n: usize,
    delays: Vec<f64>,
    kappa: Vec<f64>,
    overhead: f64,
    salt: u64,
}

impl EntropySource {
    /// Draws delays i.i.d. `Normal(mu, sigma_p * mu)` truncated to positive
    /// values, and temperature coefficients i.i.d. `Normal(kappa_mean, kappa_sigma)`.
    pub fn sample(seed: u64, config: &InstanceConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n;
        let mu = config.mu_ps * PICOSECOND;
        let mut stream = rng::stream(seed, &[0x656e_7472_6f70_79]);
        let count = 2 * n * 2;
        let mut delays = Vec::with_capacity(count);
        for _ in 0..count {
            let d = loop {
                let z: f64 = stream.sample(StandardNormal);
                let d = mu * (1.0 + config.sigma_p * z);
                if d > 0.0 {
                    break d;
                }
            };
            delays.push(d);
        }
        let kappa_dist = Normal::new(config.kappa_mean, config.kappa_sigma)
            .map_err(|e| Error::InvalidConfig(format!("kappa distribution: {e}")))?;
        let kappa = (0..count).map(|_| kappa_dist.sample(&mut stream)).collect();
        Ok(Self {
            n,
            delays,
            kappa,
            overhead: config.overhead_ps * PICOSECOND,
            salt: seed,
        })
    }

    /// Builds a source from explicit tables laid out as `[side][stage][bit]`.
    pub fn from_parts(
        n: usize,
        delays: Vec<f64>,
        kappa: Vec<f64>,
        overhead: f64,
        salt: u64,
    ) -> Result<Self> {
        if n == 0 || n > MAX_STAGES {
            return Err(Error::InvalidConfig(format!("n = {n} outside 1..=64")));
        }
        let count = 4 * n;
        if delays.len() != count || kappa.len() != count {
            return Err(Error::InvalidConfig(format!(
                "expected {count} delay and kappa entries, got {} and {}",
                delays.len(),
                kappa.len()
            )));
        }
        if let Some(&d) = delays.iter().find(|&&d| !(d > 0.0)) {
            return Err(Error::NonPositiveDelay(d));
        }
        if !(overhead >= 0.0) {
            return Err(Error::NonPositiveDelay(overhead));
        }
        Ok(Self {
            n,
            delays,
            kappa,
            overhead,
            salt,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn overhead(&self) -> f64 {
        self.overhead
    }

    /// Identifier mixed into noise addressing so distinct instances draw
    /// independent jitter.
    pub fn salt(&self) -> u64 {
        self.salt
    }

    #[inline]
    fn index(&self, side: Side, stage: usize, bit: bool) -> usize {
        (side.index() * self.n + stage) * 2 + usize::from(bit)
    }

    pub fn element(&self, side: Side, stage: usize, bit: bool) -> f64 {
        self.delays[self.index(side, stage, bit)]
    }

    pub fn kappa(&self, side: Side, stage: usize, bit: bool) -> f64 {
        self.kappa[self.index(side, stage, bit)]
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Returns a copy with one delay element replaced.
    pub fn with_element(&self, side: Side, stage: usize, bit: bool, value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::NonPositiveDelay(value));
        }
        let mut out = self.clone();
        let idx = out.index(side, stage, bit);
        out.delays[idx] = value;
        Ok(out)
    }

    /// Multiplies every delay (elements and overhead) by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Ok(Self {
            delays: self.delays.iter().map(|d| d * factor).collect(),
            overhead: self.overhead * factor,
            ..self.clone()
        })
    }

    /// Length of the flattened parameter vector: `4n + 1`.
    pub fn parameter_len(&self) -> usize {
        self.delays.len() + 1
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut theta = self.delays.clone();
        theta.push(self.overhead);
        theta
    }

    /// Rebuilds the source from a flattened parameter vector. Entries below
    /// `floor` are clamped to it; the number of clamped entries is returned.
    pub fn with_parameters(&self, theta: &[f64], floor: f64) -> Result<(Self, usize)> {
        if theta.len() != self.parameter_len() {
            return Err(Error::InvalidConfig(format!(
                "parameter vector has {} entries, expected {}",
                theta.len(),
                self.parameter_len()
            )));
        }
        let mut clamped = 0;
        let mut clamp = |v: f64| {
            if v > floor {
                v
            } else {
                clamped += 1;
                floor
            }
        };
        let delays: Vec<f64> = theta[..self.delays.len()]
            .iter()
            .map(|&v| clamp(v))
            .collect();
        let overhead = clamp(theta[self.delays.len()]);
        Ok((
            Self {
                delays,
                overhead,
                ..self.clone()
            },
            clamped,
        ))
    }

    fn check_challenge(&self, c: &Challenge) -> Result<()> {
        if c.len() != self.n {
            return Err(Error::ChallengeLength {
                expected: self.n,
                got: c.len(),
            });
        }
        Ok(())
    }

    /// Fills `out[stage]` with the effective delay of the element selected by
    /// the challenge on `side`, including temperature drift and jitter.
    pub fn stage_delays(
        &self,
        c: &Challenge,
        side: Side,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_challenge(c)?;
        assert_eq!(out.len(), self.n, "stage buffer length");
        let dt = env.delta();
        for (stage, slot) in out.iter_mut().enumerate() {
            let idx = self.index(side, stage, c.bit(stage));
            *slot = self.delays[idx] * (1.0 + self.kappa[idx] * dt);
        }
        if !noise.is_noiseless() {
            let mut stream = rng::stream(
                noise.seed,
                &[self.salt, side.index() as u64, c.bits(), draw],
            );
            for slot in out.iter_mut() {
                let z: f64 = stream.sample(StandardNormal);
                *slot *= 1.0 + noise.sigma_rel * z;
            }
        }
        Ok(())
    }

    /// Total propagation delay of `side` under challenge `c`, in seconds.
    pub fn effective_delay(
        &self,
        c: &Challenge,
        side: Side,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<f64> {
        self.check_challenge(c)?;
        let dt = env.delta();
        let drifted = (0..self.n).map(|stage| {
            let idx = self.index(side, stage, c.bit(stage));
            self.delays[idx] * (1.0 + self.kappa[idx] * dt)
        });
        let total = if noise.is_noiseless() {
            drifted.sum::<f64>()
        } else {
            let mut stream = rng::stream(
                noise.seed,
                &[self.salt, side.index() as u64, c.bits(), draw],
            );
            drifted
                .map(|d| {
                    let z: f64 = stream.sample(StandardNormal);
                    d * (1.0 + noise.sigma_rel * z)
                })
                .sum::<f64>()
        };
        Ok(self.overhead + total)
    }
}
