//! PUF evaluators built on an [`EntropySource`].
//!
//! * [`ApufInstance`]: arbiter PUF, response is the sign of the lane delay difference.
//! * [`NmqRoInstance`]: two challenge-dependent ring oscillators, a trap counter
//!   that stops both after `g` rising edges of oscillator P, and a toggling bit
//!   driven by oscillator Q. The response is `LSB(floor(g * D_p / D_q))`.
//! * [`XorComposition`]: XOR of `k` independent members under the same challenge.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::entropy::{
    Challenge, EntropySource, EnvironmentCondition, InstanceConfig, NoiseModel, Side,
};
use crate::error::{Error, Result};
use crate::rng;

/// Trap counter final values used throughout the experiments.
pub const G_PRESETS: [u32; 5] = [100, 200, 400, 800, 5000];

/// Common evaluation surface for every architecture.
pub trait Puf: Send + Sync {
    fn n(&self) -> usize;

    fn eval(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<bool>;

    /// Trap counter final value, for architectures that have one.
    fn trap_count(&self) -> Option<u32> {
        None
    }

    /// Flattened entropy-source parameters (concatenated across members).
    fn parameters(&self) -> Vec<f64>;

    /// Same architecture over new parameters; entries below `floor` are
    /// clamped and counted.
    fn with_parameters(&self, theta: &[f64], floor: f64) -> Result<(Self, usize)>
    where
        Self: Sized;

    /// Evaluates every challenge with the same draw index. Order of the output
    /// matches the input regardless of how the work is split.
    fn responses(
        &self,
        challenges: &[Challenge],
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<Vec<bool>> {
        challenges
            .par_iter()
            .map(|c| self.eval(c, env, noise, draw))
            .collect()
    }
}

/// Arbiter PUF reading the two delay tables as top (P) and bottom (Q) lanes.
///
/// At stage `i` a set challenge bit crosses the lanes before the stage's
/// elements, then the top signal traverses `d[P][i][c_i]` and the bottom signal
/// `d[Q][i][c_i]`. The response is 1 iff the signal arriving on the top input
/// of the arbiter is first; an exact tie resolves to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ApufInstance {
    entropy: EntropySource,
}

impl ApufInstance {
    pub fn new(entropy: EntropySource) -> Self {
        Self { entropy }
    }

    pub fn entropy(&self) -> &EntropySource {
        &self.entropy
    }

    /// Signed arrival-time difference `top - bottom` in seconds.
    pub fn delay_difference(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<f64> {
        let n = self.entropy.n();
        let mut top = vec![0.0; n];
        let mut bottom = vec![0.0; n];
        self.entropy
            .stage_delays(c, Side::P, env, noise, draw, &mut top)?;
        self.entropy
            .stage_delays(c, Side::Q, env, noise, draw, &mut bottom)?;
        let mut diff = 0.0;
        for stage in 0..n {
            if c.bit(stage) {
                diff = -diff;
            }
            diff += top[stage] - bottom[stage];
        }
        Ok(diff)
    }

    /// Evaluates and returns `(response, delay difference)`.
    pub fn eval_with_difference(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<(bool, f64)> {
        let diff = self.delay_difference(c, env, noise, draw)?;
        Ok((diff < 0.0, diff))
    }

    /// Weights `w` with `delay_difference(c) = w . parity_features(c)` at the
    /// enrollment temperature without noise. Length `n + 1`.
    pub fn linear_weights(&self) -> Vec<f64> {
        let n = self.entropy.n();
        let mut w = vec![0.0; n + 1];
        for stage in 0..n {
            let straight = self.entropy.element(Side::P, stage, false)
                - self.entropy.element(Side::Q, stage, false);
            let crossed = self.entropy.element(Side::P, stage, true)
                - self.entropy.element(Side::Q, stage, true);
            let common = 0.5 * (straight + crossed);
            let split = 0.5 * (straight - crossed);
            w[stage] += split;
            w[stage + 1] += common;
        }
        w
    }
}

impl Puf for ApufInstance {
    fn n(&self) -> usize {
        self.entropy.n()
    }

    fn eval(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<bool> {
        Ok(self.delay_difference(c, env, noise, draw)? < 0.0)
    }

    fn parameters(&self) -> Vec<f64> {
        self.entropy.parameters()
    }

    fn with_parameters(&self, theta: &[f64], floor: f64) -> Result<(Self, usize)> {
        let (entropy, clamped) = self.entropy.with_parameters(theta, floor)?;
        Ok((Self { entropy }, clamped))
    }
}

/// Quantizer input and output of one NMQ-RO evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerTrace {
    /// `D_p / D_q`.
    pub ratio: f64,
    /// `g * D_p / D_q`.
    pub scaled: f64,
    /// Rising edges of oscillator Q before the trap counter fired: `floor(scaled)`.
    pub toggle_count: u64,
    pub response: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmqRoInstance {
    entropy: EntropySource,
    g: u32,
}

impl NmqRoInstance {
    pub fn new(entropy: EntropySource, g: u32) -> Result<Self> {
        if g == 0 {
            return Err(Error::InvalidConfig(
                "trap counter value g must be >= 1".into(),
            ));
        }
        Ok(Self { entropy, g })
    }

    pub fn g(&self) -> u32 {
        self.g
    }

    pub fn entropy(&self) -> &EntropySource {
        &self.entropy
    }

    fn delays(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<(f64, f64)> {
        let dp = self.entropy.effective_delay(c, Side::P, env, noise, draw)?;
        let dq = self.entropy.effective_delay(c, Side::Q, env, noise, draw)?;
        for d in [dp, dq] {
            if !(d > 0.0) {
                return Err(Error::NonPositiveDelay(d));
            }
        }
        Ok((dp, dq))
    }

    /// Closed-form evaluation, `LSB(floor(g * D_p / D_q))`.
    pub fn trace(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<QuantizerTrace> {
        let (dp, dq) = self.delays(c, env, noise, draw)?;
        Ok(quantize(dp / dq, self.g))
    }

    /// Discrete-event evaluation of the same circuit, used to validate the
    /// closed form. Returns `(response, toggle count)`.
    pub fn eval_event_oracle(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<(bool, u64)> {
        let (dp, dq) = self.delays(c, env, noise, draw)?;
        // One period is a rising and a falling traversal of the ring.
        let toggles = simulate_trap_counter(2.0 * dp, 2.0 * dq, self.g);
        Ok((toggles & 1 == 1, toggles))
    }

    /// `g - toggle_count` from the closed-form trace.
    pub fn toggle_gap(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<i64> {
        let trace = self.trace(c, env, noise, draw)?;
        Ok(i64::from(self.g) - trace.toggle_count as i64)
    }
}

/// Applies the non-monotonic quantizer to a delay ratio.
pub fn quantize(ratio: f64, g: u32) -> QuantizerTrace {
    let scaled = f64::from(g) * ratio;
    let toggle_count = scaled.floor() as u64;
    QuantizerTrace {
        ratio,
        scaled,
        toggle_count,
        response: toggle_count & 1 == 1,
    }
}

/// Event-driven model of the trap counter and toggling bit.
///
/// Both oscillators start phase-aligned at t = 0 with their first rising edge
/// one full period later. Oscillator P increments the trap counter on each
/// rising edge; when it reaches `g` both oscillators stop. Oscillator Q toggles
/// the response bit on each rising edge, and an edge coinciding with the stop
/// instant is still counted. Returns the number of Q rising edges.
pub fn simulate_trap_counter(period_p: f64, period_q: f64, g: u32) -> u64 {
    let mut counter: u64 = 0;
    let mut toggles: u64 = 0;
    loop {
        let next_p = (counter + 1) as f64 * period_p;
        let next_q = (toggles + 1) as f64 * period_q;
        if next_q <= next_p {
            toggles += 1;
        } else {
            counter += 1;
            if counter == u64::from(g) {
                return toggles;
            }
        }
    }
}

impl Puf for NmqRoInstance {
    fn n(&self) -> usize {
        self.entropy.n()
    }

    fn eval(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<bool> {
        Ok(self.trace(c, env, noise, draw)?.response)
    }

    fn trap_count(&self) -> Option<u32> {
        Some(self.g)
    }

    fn parameters(&self) -> Vec<f64> {
        self.entropy.parameters()
    }

    fn with_parameters(&self, theta: &[f64], floor: f64) -> Result<(Self, usize)> {
        let (entropy, clamped) = self.entropy.with_parameters(theta, floor)?;
        Ok((Self { entropy, g: self.g }, clamped))
    }
}

/// `k` independent members evaluated on the same challenge, outputs XORed.
#[derive(Debug, Clone, PartialEq)]
pub struct XorComposition<P> {
    members: Vec<P>,
}

impl<P: Puf> XorComposition<P> {
    pub fn new(members: Vec<P>) -> Result<Self> {
        let first = members
            .first()
            .ok_or(Error::Empty("composition needs at least one member"))?;
        for (i, m) in members.iter().enumerate().skip(1) {
            if m.n() != first.n() {
                return Err(Error::MemberMismatch(format!(
                    "member {i} has n = {}, member 0 has n = {}",
                    m.n(),
                    first.n()
                )));
            }
            if m.trap_count() != first.trap_count() {
                return Err(Error::MemberMismatch(format!(
                    "member {i} has g = {:?}, member 0 has g = {:?}",
                    m.trap_count(),
                    first.trap_count()
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[P] {
        &self.members
    }
}

impl<P: Puf> Puf for XorComposition<P> {
    fn n(&self) -> usize {
        self.members[0].n()
    }

    fn eval(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<bool> {
        let mut out = false;
        for m in &self.members {
            out ^= m.eval(c, env, noise, draw)?;
        }
        Ok(out)
    }

    fn trap_count(&self) -> Option<u32> {
        self.members[0].trap_count()
    }

    fn parameters(&self) -> Vec<f64> {
        self.members.iter().flat_map(|m| m.parameters()).collect()
    }

    fn with_parameters(&self, theta: &[f64], floor: f64) -> Result<(Self, usize)> {
        let total: usize = self.members.iter().map(|m| m.parameters().len()).sum();
        if theta.len() != total {
            return Err(Error::InvalidConfig(format!(
                "parameter vector has {} entries, expected {total}",
                theta.len()
            )));
        }
        let mut offset = 0;
        let mut clamped = 0;
        let mut members = Vec::with_capacity(self.members.len());
        for m in &self.members {
            let len = m.parameters().len();
            let (member, c) = m.with_parameters(&theta[offset..offset + len], floor)?;
            offset += len;
            clamped += c;
            members.push(member);
        }
        Ok((Self { members }, clamped))
    }
}

/// Architecture descriptor shared by datasets, experiments, and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Apuf,
    NmqRo { g: u32 },
    XorNmqRo { g: u32, k: usize },
    XorApuf { k: usize },
}

impl Architecture {
    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Apuf => "apuf",
            Architecture::NmqRo { .. } => "nmq-ro",
            Architecture::XorNmqRo { .. } => "xor-nmq-ro",
            Architecture::XorApuf { .. } => "xor-apuf",
        }
    }

    pub fn tag_code(&self) -> u8 {
        match self {
            Architecture::Apuf => 0,
            Architecture::NmqRo { .. } => 1,
            Architecture::XorNmqRo { .. } => 2,
            Architecture::XorApuf { .. } => 3,
        }
    }

    pub fn g(&self) -> u32 {
        match *self {
            Architecture::NmqRo { g } | Architecture::XorNmqRo { g, .. } => g,
            _ => 0,
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            Architecture::XorNmqRo { k, .. } | Architecture::XorApuf { k } => k,
            _ => 1,
        }
    }

    /// Reassembles an architecture from its tag and numeric fields.
    pub fn from_parts(tag: &str, g: u32, k: usize) -> Result<Self> {
        let arch = match tag {
            "apuf" => Architecture::Apuf,
            "nmq-ro" => Architecture::NmqRo { g },
            "xor-nmq-ro" => Architecture::XorNmqRo { g, k },
            "xor-apuf" => Architecture::XorApuf { k },
            other => return Err(Error::UnknownArchitecture(other.to_string())),
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn from_code(code: u8, g: u32, k: usize) -> Result<Self> {
        let tag = match code {
            0 => "apuf",
            1 => "nmq-ro",
            2 => "xor-nmq-ro",
            3 => "xor-apuf",
            other => return Err(Error::UnknownArchitecture(format!("code {other}"))),
        };
        Self::from_parts(tag, g, k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Architecture::NmqRo { g } | Architecture::XorNmqRo { g, .. } if g == 0 => Err(
                Error::InvalidConfig("trap counter value g must be >= 1".into()),
            ),
            Architecture::XorNmqRo { k, .. } | Architecture::XorApuf { k } if k == 0 => Err(
                Error::InvalidConfig("composition size k must be >= 1".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Seed of composition member `index`; member 0 reuses the base seed so a
    /// 1-member composition matches the plain instance.
    pub fn member_seed(base: u64, index: usize) -> u64 {
        if index == 0 {
            base
        } else {
            rng::mix(base, index as u64)
        }
    }

    pub fn build(&self, config: &InstanceConfig) -> Result<AnyPuf> {
        self.validate()?;
        let source = |i: usize| EntropySource::sample(Self::member_seed(config.seed, i), config);
        Ok(match *self {
            Architecture::Apuf => AnyPuf::Apuf(ApufInstance::new(source(0)?)),
            Architecture::NmqRo { g } => AnyPuf::NmqRo(NmqRoInstance::new(source(0)?, g)?),
            Architecture::XorNmqRo { g, k } => AnyPuf::XorNmqRo(XorComposition::new(
                (0..k)
                    .map(|i| NmqRoInstance::new(source(i)?, g))
                    .collect::<Result<_>>()?,
            )?),
            Architecture::XorApuf { k } => AnyPuf::XorApuf(XorComposition::new(
                (0..k)
                    .map(|i| Ok(ApufInstance::new(source(i)?)))
                    .collect::<Result<_>>()?,
            )?),
        })
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Architecture::Apuf => write!(f, "APUF"),
            Architecture::NmqRo { g } => write!(f, "NMQ-RO (g={g})"),
            Architecture::XorNmqRo { g, k } => write!(f, "{k}-XOR-NMQ-RO (g={g})"),
            Architecture::XorApuf { k } => write!(f, "{k}-XOR-APUF"),
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Accepts `apuf`, `nmq-ro:200`, `xor-nmq-ro:200:3` and `xor-apuf:5`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let tag = parts.next().unwrap_or_default();
        let nums: Vec<u64> = parts
            .map(|p| {
                p.parse::<u64>()
                    .map_err(|_| Error::UnknownArchitecture(s.to_string()))
            })
            .collect::<Result<_>>()?;
        let arch = match (tag, nums.as_slice()) {
            ("apuf", []) => Architecture::Apuf,
            ("nmq-ro", [g]) => Architecture::NmqRo { g: *g as u32 },
            ("xor-nmq-ro", [g, k]) => Architecture::XorNmqRo {
                g: *g as u32,
                k: *k as usize,
            },
            ("xor-apuf", [k]) => Architecture::XorApuf { k: *k as usize },
            _ => return Err(Error::UnknownArchitecture(s.to_string())),
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Any supported architecture behind one concrete type.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyPuf {
    Apuf(ApufInstance),
    NmqRo(NmqRoInstance),
    XorNmqRo(XorComposition<NmqRoInstance>),
    XorApuf(XorComposition<ApufInstance>),
}

impl AnyPuf {
    pub fn architecture(&self) -> Architecture {
        match self {
            AnyPuf::Apuf(_) => Architecture::Apuf,
            AnyPuf::NmqRo(p) => Architecture::NmqRo { g: p.g() },
            AnyPuf::XorNmqRo(x) => Architecture::XorNmqRo {
                g: x.members()[0].g(),
                k: x.k(),
            },
            AnyPuf::XorApuf(x) => Architecture::XorApuf { k: x.k() },
        }
    }
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            AnyPuf::Apuf($p) => $body,
            AnyPuf::NmqRo($p) => $body,
            AnyPuf::XorNmqRo($p) => $body,
            AnyPuf::XorApuf($p) => $body,
        }
    };
}

impl Puf for AnyPuf {
    fn n(&self) -> usize {
        dispatch!(self, p => p.n())
    }

    fn eval(
        &self,
        c: &Challenge,
        env: &EnvironmentCondition,
        noise: &NoiseModel,
        draw: u64,
    ) -> Result<bool> {
        dispatch!(self, p => p.eval(c, env, noise, draw))
    }

    fn trap_count(&self) -> Option<u32> {
        dispatch!(self, p => p.trap_count())
    }

    fn parameters(&self) -> Vec<f64> {
        dispatch!(self, p => p.parameters())
    }

    fn with_parameters(&self, theta: &[f64], floor: f64) -> Result<(Self, usize)> {
        Ok(match self {
            AnyPuf::Apuf(p) => {
                let (q, c) = p.with_parameters(theta, floor)?;
                (AnyPuf::Apuf(q), c)
            }
            AnyPuf::NmqRo(p) => {
                let (q, c) = p.with_parameters(theta, floor)?;
                (AnyPuf::NmqRo(q), c)
            }
            AnyPuf::XorNmqRo(p) => {
                let (q, c) = p.with_parameters(theta, floor)?;
                (AnyPuf::XorNmqRo(q), c)
            }
            AnyPuf::XorApuf(p) => {
                let (q, c) = p.with_parameters(theta, floor)?;
                (AnyPuf::XorApuf(q), c)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::PICOSECOND;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_source(n: usize) -> EntropySource {
        InstanceConfig {
            n,
            sigma_p: 0.0,
            kappa_sigma: 0.0,
            sigma_rel: 0.0,
            ..InstanceConfig::default()
        }
        .instance()
        .unwrap()
    }

    fn env() -> EnvironmentCondition {
        EnvironmentCondition::enrollment()
    }

    #[test]
    fn apuf_tie_resolves_to_zero() {
        let apuf = ApufInstance::new(flat_source(64));
        let c = Challenge::new(0x5555, 64).unwrap();
        let (r, diff) = apuf
            .eval_with_difference(&c, &env(), &NoiseModel::none(), 0)
            .unwrap();
        assert_eq!(diff, 0.0);
        assert!(!r);
    }

    #[test]
    fn apuf_single_slow_top_element_in_last_stage() {
        // The last stage sits after the final crossing, so its top element is
        // always on the path into the arbiter's top input.
        let src = flat_source(16);
        let slow = src
            .with_element(Side::P, 15, true, 11.0 * PICOSECOND)
            .unwrap();
        let apuf = ApufInstance::new(slow);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let c = Challenge::random(&mut rng, 16);
            let (r, diff) = apuf
                .eval_with_difference(&c, &env(), &NoiseModel::none(), 0)
                .unwrap();
            if c.bit(15) {
                assert!(!r);
                assert!((diff - PICOSECOND).abs() < 1e-24);
            } else {
                assert_eq!(diff, 0.0);
            }
        }
    }

    #[test]
    fn apuf_linear_weights_reproduce_difference() {
        let apuf = ApufInstance::new(InstanceConfig::default().instance().unwrap());
        let w = apuf.linear_weights();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let c = Challenge::random(&mut rng, 64);
            let phi = crate::attacks::parity_transform(&c);
            let lin: f64 = w.iter().zip(&phi).map(|(a, b)| a * b).sum();
            let diff = apuf
                .delay_difference(&c, &env(), &NoiseModel::none(), 0)
                .unwrap();
            assert!((lin - diff).abs() < 1e-22, "{lin} vs {diff}");
        }
    }

    #[test]
    fn nmq_identical_oscillators_return_parity_of_g() {
        for g in [200u32, 201, 1, 5000] {
            let nmq = NmqRoInstance::new(flat_source(64), g).unwrap();
            let c = Challenge::new(77, 64).unwrap();
            let t = nmq.trace(&c, &env(), &NoiseModel::none(), 0).unwrap();
            assert_eq!(t.ratio, 1.0);
            assert_eq!(t.toggle_count, u64::from(g));
            assert_eq!(t.response, g % 2 == 1);
            assert_eq!(
                nmq.toggle_gap(&c, &env(), &NoiseModel::none(), 0).unwrap(),
                0
            );
        }
    }

    #[test]
    fn quantizer_arithmetic() {
        let t = quantize(1.00375, 400);
        assert_eq!(t.toggle_count, 401);
        assert!(t.response);
        assert!(!quantize(1.0, 200).response);
    }

    #[test]
    fn event_oracle_exact_ratios() {
        assert_eq!(simulate_trap_counter(1.0, 1.0, 200), 200);
        assert_eq!(simulate_trap_counter(1.0, 2.0, 200), 100);
        assert_eq!(simulate_trap_counter(1.0, 2.0, 201), 100);
        assert_eq!(simulate_trap_counter(2.0, 1.0, 3), 6);
    }

    #[test]
    fn g_zero_rejected() {
        assert!(NmqRoInstance::new(flat_source(8), 0).is_err());
        assert!("nmq-ro:0".parse::<Architecture>().is_err());
    }

    #[test]
    fn xor_of_identical_members_is_constant_zero() {
        let cfg = InstanceConfig::default();
        let m = NmqRoInstance::new(cfg.instance().unwrap(), 200).unwrap();
        let xor = XorComposition::new(vec![m.clone(), m]).unwrap();
        let noise = cfg.noise();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for draw in 0..300 {
            let c = Challenge::random(&mut rng, 64);
            assert!(!xor.eval(&c, &env(), &noise, draw).unwrap());
        }
    }

    #[test]
    fn single_member_xor_matches_instance() {
        let cfg = InstanceConfig::default().with_seed(12);
        let single = Architecture::NmqRo { g: 200 }.build(&cfg).unwrap();
        let xor = Architecture::XorNmqRo { g: 200, k: 1 }.build(&cfg).unwrap();
        let noise = cfg.noise();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for draw in 0..500 {
            let c = Challenge::random(&mut rng, 64);
            assert_eq!(
                single.eval(&c, &env(), &noise, draw).unwrap(),
                xor.eval(&c, &env(), &noise, draw).unwrap()
            );
        }
    }

    #[test]
    fn xor_rejects_mismatched_members() {
        let a = NmqRoInstance::new(flat_source(64), 200).unwrap();
        let b = NmqRoInstance::new(flat_source(64), 400).unwrap();
        let c = NmqRoInstance::new(flat_source(32), 200).unwrap();
        assert!(matches!(
            XorComposition::new(vec![a.clone(), b]),
            Err(Error::MemberMismatch(_))
        ));
        assert!(matches!(
            XorComposition::new(vec![a, c]),
            Err(Error::MemberMismatch(_))
        ));
        assert!(matches!(
            XorComposition::<NmqRoInstance>::new(vec![]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn architecture_parse_and_display() {
        let a: Architecture = "xor-nmq-ro:200:3".parse().unwrap();
        assert_eq!(a, Architecture::XorNmqRo { g: 200, k: 3 });
        assert_eq!(a.to_string(), "3-XOR-NMQ-RO (g=200)");
        assert_eq!(Architecture::from_parts(a.tag(), a.g(), a.k()).unwrap(), a);
        assert!("nmq-ro".parse::<Architecture>().is_err());
        assert!("ff-puf".parse::<Architecture>().is_err());
        assert!(Architecture::from_code(9, 0, 1).is_err());
    }

    #[test]
    fn parameters_round_trip_through_composition() {
        let cfg = InstanceConfig::desk();
        let xor = Architecture::XorNmqRo { g: 200, k: 3 }.build(&cfg).unwrap();
        let theta = xor.parameters();
        assert_eq!(theta.len(), 3 * (4 * 32 + 1));
        let (same, clamped) = xor.with_parameters(&theta, 1e-15).unwrap();
        assert_eq!(clamped, 0);
        assert_eq!(same, xor);
    }
}
