//! CRP dataset persistence and generation.
//!
//! # Binary layout
//!
//! All integers little-endian. The header is 48 bytes:
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 8    | magic `b"NMQPUFCR"`                    |
//! | 8      | 2    | format version (`1`)                   |
//! | 10     | 1    | challenge width `n` (1..=64)           |
//! | 11     | 1    | architecture code (0 apuf, 1 nmq-ro, 2 xor-nmq-ro, 3 xor-apuf) |
//! | 12     | 4    | trap counter value `g` (0 if none)     |
//! | 16     | 2    | composition size `k`                   |
//! | 18     | 2    | reserved, zero                         |
//! | 20     | 8    | seed digest                            |
//! | 28     | 8    | record count                           |
//! | 36     | 8    | enrollment temperature, IEEE-754 f64   |
//! | 44     | 4    | reserved, zero                         |
//!
//! Each record is 9 bytes: the challenge as a `u64` (bit `i` drives stage `i`)
//! followed by the response byte (`0` or `1`). Per-record evaluation metadata
//! is only carried by the CSV form.
//!
//! # CSV layout
//!
//! `# key=value` comment lines carrying the header fields, a column line
//! `challenge,response,temperature,draw`, then one row per record with the
//! challenge in zero-padded hex and empty metadata cells when absent.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::entropy::{Challenge, EnvironmentCondition, InstanceConfig, NoiseModel};
use crate::error::{Error, Result};
use crate::puf::{Architecture, Puf};
use crate::rng;

pub const MAGIC: [u8; 8] = *b"NMQPUFCR";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 48;
pub const RECORD_LEN: usize = 9;

/// Optional per-record evaluation metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMeta {
    pub temperature: f64,
    pub draw: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrpRecord {
    pub challenge: Challenge,
    pub response: bool,
    pub meta: Option<EvalMeta>,
}

impl CrpRecord {
    pub fn new(challenge: Challenge, response: bool) -> Self {
        Self {
            challenge,
            response,
            meta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub version: u16,
    pub n: usize,
    pub architecture: Architecture,
    pub seed_digest: u64,
    pub record_count: u64,
    pub enrollment_temperature: f64,
}

impl DatasetHeader {
    pub fn new(n: usize, architecture: Architecture, seed_digest: u64) -> Self {
        Self {
            version: FORMAT_VERSION,
            n,
            architecture,
            seed_digest,
            record_count: 0,
            enrollment_temperature: crate::entropy::DEFAULT_ENROLLMENT_TEMPERATURE,
        }
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..8].copy_from_slice(&MAGIC);
        out[8..10].copy_from_slice(&self.version.to_le_bytes());
        out[10] = self.n as u8;
        out[11] = self.architecture.tag_code();
        out[12..16].copy_from_slice(&self.architecture.g().to_le_bytes());
        out[16..18].copy_from_slice(&(self.architecture.k() as u16).to_le_bytes());
        out[20..28].copy_from_slice(&self.seed_digest.to_le_bytes());
        out[28..36].copy_from_slice(&self.record_count.to_le_bytes());
        out[36..44].copy_from_slice(&self.enrollment_temperature.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 8 && bytes[0..8] != MAGIC {
                return Err(Error::BadMagic);
            }
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        if bytes[0..8] != MAGIC {
            return Err(Error::BadMagic);
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u16_at(8);
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = bytes[10] as usize;
        if n == 0 || n > crate::entropy::MAX_STAGES {
            return Err(Error::InvalidConfig(format!("header challenge width {n}")));
        }
        let architecture = Architecture::from_code(bytes[11], u32_at(12), u16_at(16) as usize)?;
        Ok(Self {
            version,
            n,
            architecture,
            seed_digest: u64_at(20),
            record_count: u64_at(28),
            enrollment_temperature: f64::from_le_bytes(bytes[36..44].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrpDataset {
    pub header: DatasetHeader,
    pub records: Vec<CrpRecord>,
}

impl CrpDataset {
    /// Builds a dataset, fixing up the header's record count.
    pub fn new(mut header: DatasetHeader, records: Vec<CrpRecord>) -> Result<Self> {
        for r in &records {
            if r.challenge.len() != header.n {
                return Err(Error::ChallengeLength {
                    expected: header.n,
                    got: r.challenge.len(),
                });
            }
        }
        header.record_count = records.len() as u64;
        Ok(Self { header, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn responses(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.response).collect()
    }

    /// First `1 - test_fraction` of the records for training, the rest for testing.
    pub fn split(&self, test_fraction: f64) -> Result<(Vec<CrpRecord>, Vec<CrpRecord>)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidConfig(format!(
                "test fraction {test_fraction} outside [0, 1)"
            )));
        }
        let test_len = ((self.records.len() as f64) * test_fraction).round() as usize;
        let cut = self.records.len() - test_len;
        Ok((self.records[..cut].to_vec(), self.records[cut..].to_vec()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.records.len());
        out.extend_from_slice(&self.header.encode());
        for r in &self.records {
            out.extend_from_slice(&r.challenge.bits().to_le_bytes());
            out.push(u8::from(r.response));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = DatasetHeader::decode(bytes)?;
        let body = &bytes[HEADER_LEN..];
        let expected = header.record_count.saturating_mul(RECORD_LEN as u64);
        let found = body.len() as u64;
        if found < expected {
            return Err(Error::Truncated {
                expected: HEADER_LEN as u64 + expected,
                found: bytes.len() as u64,
            });
        }
        if found > expected {
            return Err(Error::CountMismatch {
                declared: header.record_count,
                actual: found / RECORD_LEN as u64,
            });
        }
        let mut records = Vec::with_capacity(header.record_count as usize);
        for (i, chunk) in body.chunks_exact(RECORD_LEN).enumerate() {
            let bits = u64::from_le_bytes(chunk[..8].try_into().unwrap());
            let challenge = Challenge::new(bits, header.n).map_err(|e| Error::MalformedRecord {
                line: i,
                message: e.to_string(),
            })?;
            let response = match chunk[8] {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::MalformedRecord {
                        line: i,
                        message: format!("response byte {other}"),
                    })
                }
            };
            records.push(CrpRecord::new(challenge, response));
        }
        Ok(Self { header, records })
    }

    pub fn to_csv(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let _ = writeln!(out, "# format=nmq-crp-csv");
        let _ = writeln!(out, "# version={}", h.version);
        let _ = writeln!(out, "# n={}", h.n);
        let _ = writeln!(out, "# architecture={}", h.architecture.tag());
        let _ = writeln!(out, "# g={}", h.architecture.g());
        let _ = writeln!(out, "# k={}", h.architecture.k());
        let _ = writeln!(out, "# seed_digest={:016x}", h.seed_digest);
        let _ = writeln!(out, "# record_count={}", h.record_count);
        let _ = writeln!(out, "# enrollment_temperature={}", h.enrollment_temperature);
        out.push_str("challenge,response,temperature,draw\n");
        for r in &self.records {
            let _ = write!(out, "{},{}", r.challenge, u8::from(r.response));
            match r.meta {
                Some(m) => {
                    let _ = writeln!(out, ",{},{}", m.temperature, m.draw);
                }
                None => out.push_str(",,\n"),
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((_, line)) = lines.peek() {
            let Some(rest) = line.strip_prefix('#') else {
                break;
            };
            if let Some((k, v)) = rest.trim().split_once('=') {
                fields.insert(k.trim().to_string(), v.trim().to_string());
            }
            lines.next();
        }
        if fields.get("format").map(String::as_str) != Some("nmq-crp-csv") {
            return Err(Error::BadMagic);
        }
        let get = |key: &str| {
            fields.get(key).ok_or_else(|| Error::MalformedRecord {
                line: 0,
                message: format!("missing header field {key}"),
            })
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?.parse().map_err(|_| Error::MalformedRecord {
                line: 0,
                message: format!("header field {key} is not an integer"),
            })
        };
        let version = num("version")? as u16;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n = num("n")? as usize;
        if n == 0 || n > crate::entropy::MAX_STAGES {
            return Err(Error::InvalidConfig(format!("header challenge width {n}")));
        }
        let architecture =
            Architecture::from_parts(get("architecture")?, num("g")? as u32, num("k")? as usize)?;
        let seed_digest =
            u64::from_str_radix(get("seed_digest")?, 16).map_err(|_| Error::MalformedRecord {
                line: 0,
                message: "seed_digest is not hex".into(),
            })?;
        let record_count = num("record_count")?;
        let enrollment_temperature: f64 =
            get("enrollment_temperature")?
                .parse()
                .map_err(|_| Error::MalformedRecord {
                    line: 0,
                    message: "enrollment_temperature is not a number".into(),
                })?;
        match lines.next() {
            Some((_, l)) if l.trim() == "challenge,response,temperature,draw" => {}
            Some((i, _)) => {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    message: "expected column header".into(),
                })
            }
            None => {
                return Err(Error::Truncated {
                    expected: record_count,
                    found: 0,
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::MalformedRecord {
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(bad(format!("expected 4 columns, got {}", cols.len())));
            }
            let bits = u64::from_str_radix(cols[0].trim(), 16)
                .map_err(|e| bad(format!("challenge: {e}")))?;
            let challenge = Challenge::new(bits, n).map_err(|e| bad(e.to_string()))?;
            let response = match cols[1].trim() {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("response {other:?}"))),
            };
            let meta = match (cols[2].trim(), cols[3].trim()) {
                ("", "") => None,
                (t, d) => Some(EvalMeta {
                    temperature: t.parse().map_err(|_| bad(format!("temperature {t:?}")))?,
                    draw: d.parse().map_err(|_| bad(format!("draw {d:?}")))?,
                }),
            };
            records.push(CrpRecord {
                challenge,
                response,
                meta,
            });
        }
        let actual = records.len() as u64;
        if actual < record_count {
            return Err(Error::Truncated {
                expected: record_count,
                found: actual,
            });
        }
        if actual > record_count {
            return Err(Error::CountMismatch {
                declared: record_count,
                actual,
            });
        }
        Ok(Self {
            header: DatasetHeader {
                version,
                n,
                architecture,
                seed_digest,
                record_count,
                enrollment_temperature,
            },
            records,
        })
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes the dataset; `.csv` paths get the CSV form, everything else binary.
pub fn write_dataset(path: impl AsRef<Path>, dataset: &CrpDataset) -> Result<()> {
    let path = path.as_ref();
    if dataset.header.record_count != dataset.records.len() as u64 {
        return Err(Error::CountMismatch {
            declared: dataset.header.record_count,
            actual: dataset.records.len() as u64,
        });
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let bytes = if is_csv(path) {
        dataset.to_csv().into_bytes()
    } else {
        dataset.to_bytes()
    };
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<CrpDataset> {
    let path = path.as_ref();
    if is_csv(path) {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CrpDataset::from_csv(&text)
    } else {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        CrpDataset::from_bytes(&bytes)
    }
}

/// Extension point for third-party CRP dumps whose format is not defined here.
pub trait DatasetImporter {
    fn import(&self, path: &Path) -> Result<CrpDataset>;
}

/// Digest over the instance configuration, architecture and challenge seed.
pub fn seed_digest(config: &InstanceConfig, arch: Architecture, challenge_seed: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(config.to_config_string().as_bytes());
    hasher.update(format!("arch={}:{}:{}\n", arch.tag(), arch.g(), arch.k()).as_bytes());
    hasher.update(challenge_seed.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Draws `count` distinct challenges uniformly at random.
pub fn sample_challenges(n: usize, count: u64, seed: u64) -> Result<Vec<Challenge>> {
    let available = Challenge::space_size(n);
    if u128::from(count) > available {
        return Err(Error::ChallengeSpaceExhausted {
            requested: count,
            available: available.min(u128::from(u64::MAX)) as u64,
        });
    }
    let mut stream = rng::stream(seed, &[0x6368_616c, n as u64]);
    let mut seen = HashSet::with_capacity(count as usize);
    let mut out = Vec::with_capacity(count as usize);
    while (out.len() as u64) < count {
        let c = Challenge::random(&mut stream, n);
        if seen.insert(c.bits()) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Challenges disjoint from `exclude`, drawn from an independent stream.
pub fn sample_challenges_excluding(
    n: usize,
    count: u64,
    seed: u64,
    exclude: &[Challenge],
) -> Result<Vec<Challenge>> {
    let available = Challenge::space_size(n) - exclude.len() as u128;
    if u128::from(count) > available {
        return Err(Error::ChallengeSpaceExhausted {
            requested: count,
            available: available.min(u128::from(u64::MAX)) as u64,
        });
    }
    let mut seen: HashSet<u64> = exclude.iter().map(|c| c.bits()).collect();
    let mut stream = rng::stream(seed, &[0x6578_636c, n as u64]);
    let mut out = Vec::with_capacity(count as usize);
    while (out.len() as u64) < count {
        let c = Challenge::random(&mut stream, n);
        if seen.insert(c.bits()) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Builds the instance described by `config`/`arch` and records one evaluation
/// (draw 0) per freshly sampled challenge, in sampling order.
pub fn generate_dataset(
    config: &InstanceConfig,
    arch: Architecture,
    n_crps: u64,
    challenge_seed: u64,
    env: &EnvironmentCondition,
    noise: &NoiseModel,
) -> Result<CrpDataset> {
    let puf = arch.build(config)?;
    let challenges = sample_challenges(config.n, n_crps, challenge_seed)?;
    let responses = puf.responses(&challenges, env, noise, 0)?;
    let records = challenges
        .into_iter()
        .zip(responses)
        .map(|(c, r)| CrpRecord::new(c, r))
        .collect();
    let mut header = DatasetHeader::new(config.n, arch, seed_digest(config, arch, challenge_seed));
    header.enrollment_temperature = env.enrollment_temperature();
    CrpDataset::new(header, records)
}

/// Uniformly random 0/1 labels, for chance-level baselines.
pub fn random_labels(challenges: &[Challenge], seed: u64) -> Vec<CrpRecord> {
    let mut stream = rng::stream(seed, &[0x6c61_6265_6c]);
    challenges
        .iter()
        .map(|&c| CrpRecord::new(c, stream.random::<bool>()))
        .collect()
}
