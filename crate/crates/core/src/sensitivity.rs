//! Uniqueness-sensitivity surfaces `f(a, b) = U(theta0, theta0 + a*delta + b*eta)`
//! over a 2-D slice of entropy-source parameter space.

use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::sample_challenges;
use crate::entropy::{Challenge, EnvironmentCondition, InstanceConfig, NoiseModel, PICOSECOND};
use crate::error::{Error, Result};
use crate::puf::{AnyPuf, Architecture, Puf};
use crate::rng;

/// Perturbed parameters are clamped to this value (0.001 ps).
pub const DELAY_FLOOR: f64 = 1e-3 * PICOSECOND;

/// Pairs whose cosine similarity exceeds this are redrawn.
pub const MAX_DIRECTION_COSINE: f64 = 0.99;

/// Two perturbation directions in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionPair {
    pub delta: Vec<f64>,
    pub eta: Vec<f64>,
    pub seed: u64,
}

impl DirectionPair {
    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn cosine(&self) -> f64 {
        let dot: f64 = self.delta.iter().zip(&self.eta).map(|(a, b)| a * b).sum();
        let na: f64 = self.delta.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = self.eta.iter().map(|b| b * b).sum::<f64>().sqrt();
        dot / (na * nb)
    }
}

/// Draws both directions entry-wise from N(0, 1) and scales entry `i` by
/// `|theta_i|`, redrawing near-parallel pairs.
///
/// Entries are drawn as interleaved `(delta_i, eta_i)` pairs, so the directions
/// for a parameter vector extend those for any prefix of it: adding an XOR
/// member leaves the perturbation of the existing members unchanged.
pub fn random_directions(theta: &[f64], seed: u64) -> Result<DirectionPair> {
    if theta.is_empty() || theta.iter().all(|&t| t == 0.0) {
        return Err(Error::InvalidConfig(
            "parameter vector is degenerate (all zero)".into(),
        ));
    }
    for attempt in 0..64u64 {
        let mut stream = rng::stream(seed, &[0x6469_72, attempt]);
        let (delta, eta): (Vec<f64>, Vec<f64>) = theta
            .iter()
            .map(|t| {
                let a: f64 = StandardNormal.sample(&mut stream);
                let b: f64 = StandardNormal.sample(&mut stream);
                (a * t.abs(), b * t.abs())
            })
            .unzip();
        let pair = DirectionPair { delta, eta, seed };
        let cos = pair.cosine();
        if cos.is_finite() && cos.abs() <= MAX_DIRECTION_COSINE {
            return Ok(pair);
        }
    }
    Err(Error::InvalidConfig(
        "could not draw linearly independent directions; too few non-zero parameters".into(),
    ))
}

/// Rectangular grid of `(alpha, beta)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub alpha_steps: usize,
    pub beta_steps: usize,
}

impl GridSpec {
    /// `[-radius, radius]^2` sampled at `steps` points per axis.
    pub fn square(radius: f64, steps: usize) -> Self {
        Self {
            alpha: (-radius, radius),
            beta: (-radius, radius),
            alpha_steps: steps,
            beta_steps: steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_steps < 3 || self.beta_steps < 3 {
            return Err(Error::InvalidConfig(format!(
                "grid must be at least 3x3, got {}x{}",
                self.alpha_steps, self.beta_steps
            )));
        }
        for (lo, hi) in [self.alpha, self.beta] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidConfig(format!("bad grid range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Evenly spaced coordinates; a symmetric range with an odd step count
    /// contains 0 exactly.
    fn axis(range: (f64, f64), steps: usize) -> Vec<f64> {
        (0..steps)
            .map(|i| {
                let t = i as f64 / (steps - 1) as f64;
                range.0 * (1.0 - t) + range.1 * t
            })
            .collect()
    }
}

/// Uniqueness values on a grid, stored alpha-major: `values[i * beta.len() + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub values: Vec<f64>,
    pub challenges: usize,
    /// Parameter entries clamped to [`DELAY_FLOOR`], summed over the grid.
    pub clamped: usize,
}

impl SensitivityGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.beta.len() + j]
    }

    /// Value at the grid point closest to `(alpha, beta)`.
    pub fn nearest(&self, alpha: f64, beta: f64) -> f64 {
        let closest = |axis: &[f64], x: f64| {
            (0..axis.len())
                .min_by(|&a, &b| (axis[a] - x).abs().total_cmp(&(axis[b] - x).abs()))
                .unwrap()
        };
        self.at(closest(&self.alpha, alpha), closest(&self.beta, beta))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean over the outermost rows and columns.
    pub fn boundary_ring_mean(&self) -> f64 {
        let (na, nb) = (self.alpha.len(), self.beta.len());
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..na {
            for j in 0..nb {
                if i == 0 || j == 0 || i == na - 1 || j == nb - 1 {
                    sum += self.at(i, j);
                    count += 1;
                }
            }
        }
        sum / count as f64
    }

    pub fn fraction_below(&self, level: f64) -> f64 {
        self.count_below(level) as f64 / self.values.len() as f64
    }

    pub fn count_below(&self, level: f64) -> usize {
        self.values.iter().filter(|&&v| v < level).count()
    }

    /// Headered `alpha,beta,f` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,beta,f\n");
        for (i, a) in self.alpha.iter().enumerate() {
            for (j, b) in self.beta.iter().enumerate() {
                let _ = writeln!(s, "{a:.6},{b:.6},{:.6}", self.at(i, j));
            }
        }
        s
    }
}

/// Evaluates `f(alpha, beta)` at every grid point: the fraction of shared
/// challenges on which the perturbed instance disagrees with `base`. Both are
/// evaluated noiselessly at the enrollment temperature.
pub fn uniqueness_surface<P: Puf>(
    base: &P,
    dirs: &DirectionPair,
    grid: &GridSpec,
    challenges: &[Challenge],
) -> Result<SensitivityGrid> {
    grid.validate()?;
    if challenges.len() < 1000 {
        return Err(Error::InvalidConfig(format!(
            "challenge budget must be >= 1000, got {}",
            challenges.len()
        )));
    }
    let theta0 = base.parameters();
    if dirs.dim() != theta0.len() || dirs.eta.len() != theta0.len() {
        return Err(Error::InvalidConfig(format!(
            "directions have dimension {}, parameter vector has {}",
            dirs.dim(),
            theta0.len()
        )));
    }
    let env = EnvironmentCondition::enrollment();
    let noise = NoiseModel::none();
    let reference: Vec<bool> = challenges
        .iter()
        .map(|c| base.eval(c, &env, &noise, 0))
        .collect::<Result<_>>()?;

    let alpha = GridSpec::axis(grid.alpha, grid.alpha_steps);
    let beta = GridSpec::axis(grid.beta, grid.beta_steps);
    let points: Vec<(f64, f64)> = alpha
        .iter()
        .flat_map(|&a| beta.iter().map(move |&b| (a, b)))
        .collect();
    let cells: Vec<(f64, usize)> = points
        .par_iter()
        .map(|&(a, b)| {
            let theta: Vec<f64> = theta0
                .iter()
                .zip(dirs.delta.iter().zip(&dirs.eta))
                .map(|(t, (d, e))| t + a * d + b * e)
                .collect();
            let (puf, clamped) = base.with_parameters(&theta, DELAY_FLOOR)?;
            let mut differ = 0usize;
            for (c, &r) in challenges.iter().zip(&reference) {
                if puf.eval(c, &env, &noise, 0)? != r {
                    differ += 1;
                }
            }
            Ok((differ as f64 / challenges.len() as f64, clamped))
        })
        .collect::<Result<_>>()?;
    let clamped: usize = cells.iter().map(|c| c.1).sum();
    if clamped > 0 {
        log::warn!("{clamped} perturbed parameters clamped to {DELAY_FLOOR:e} s across the grid");
    }
    Ok(SensitivityGrid {
        alpha,
        beta,
        values: cells.into_iter().map(|c| c.0).collect(),
        challenges: challenges.len(),
        clamped,
    })
}

/// The six reference surfaces: three architectures over a wide range and
/// three XOR depths of NMQ-RO (g=200) over a range 5x narrower.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensitivityPreset {
    Apuf,
    XorApuf5,
    NmqRo800,
    NmqRo200,
    XorNmqRo2,
    XorNmqRo3,
}

pub const WIDE_RADIUS: f64 = 0.25;
pub const NARROW_RADIUS: f64 = 0.05;
pub const DEFAULT_GRID_STEPS: usize = 51;
pub const DEFAULT_SURFACE_CHALLENGES: u64 = 10_000;

impl SensitivityPreset {
    pub const ALL: [SensitivityPreset; 6] = [
        SensitivityPreset::Apuf,
        SensitivityPreset::XorApuf5,
        SensitivityPreset::NmqRo800,
        SensitivityPreset::NmqRo200,
        SensitivityPreset::XorNmqRo2,
        SensitivityPreset::XorNmqRo3,
    ];

    pub fn panel(&self) -> char {
        match self {
            SensitivityPreset::Apuf => 'a',
            SensitivityPreset::XorApuf5 => 'b',
            SensitivityPreset::NmqRo800 => 'c',
            SensitivityPreset::NmqRo200 => 'd',
            SensitivityPreset::XorNmqRo2 => 'e',
            SensitivityPreset::XorNmqRo3 => 'f',
        }
    }

    pub fn from_panel(panel: char) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.panel() == panel)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sensitivity panel '{panel}'")))
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            SensitivityPreset::Apuf => Architecture::Apuf,
            SensitivityPreset::XorApuf5 => Architecture::XorApuf { k: 5 },
            SensitivityPreset::NmqRo800 => Architecture::NmqRo { g: 800 },
            SensitivityPreset::NmqRo200 => Architecture::NmqRo { g: 200 },
            SensitivityPreset::XorNmqRo2 => Architecture::XorNmqRo { g: 200, k: 2 },
            SensitivityPreset::XorNmqRo3 => Architecture::XorNmqRo { g: 200, k: 3 },
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            SensitivityPreset::Apuf | SensitivityPreset::XorApuf5 | SensitivityPreset::NmqRo800 => {
                WIDE_RADIUS
            }
            _ => NARROW_RADIUS,
        }
    }

    pub fn grid(&self, steps: usize) -> GridSpec {
        GridSpec::square(self.radius(), steps)
    }
}

/// Builds the preset's instance from `config`, draws directions and a fresh
/// challenge set from `seed`, and evaluates the surface.
pub fn preset_surface(
    preset: SensitivityPreset,
    config: &InstanceConfig,
    seed: u64,
    steps: usize,
    challenges: u64,
) -> Result<SensitivityGrid> {
    let puf: AnyPuf = preset.architecture().build(config)?;
    let dirs = random_directions(&puf.parameters(), seed)?;
    let cs = sample_challenges(config.n, challenges, rng::mix(seed, 0x6368_616c))?;
    uniqueness_surface(&puf, &dirs, &preset.grid(steps), &cs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puf::ApufInstance;

    fn small_config() -> InstanceConfig {
        InstanceConfig {
            n: 16,
            ..InstanceConfig::default()
        }
    }

    #[test]
    fn directions_are_seeded_and_relative() {
        let theta = vec![2.0; 400];
        let a = random_directions(&theta, 5).unwrap();
        assert_eq!(a, random_directions(&theta, 5).unwrap());
        assert_ne!(a, random_directions(&theta, 6).unwrap());
        assert!(a.cosine().abs() < MAX_DIRECTION_COSINE);
        let mean_abs = a.delta.iter().map(|d| d.abs()).sum::<f64>() / 400.0;
        // E|z| * 2 = 2 sqrt(2/pi).
        assert!(
            (mean_abs - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.15,
            "{mean_abs}"
        );

        let mixed = [1.0, 0.0, 3.0];
        let d = random_directions(&mixed, 1).unwrap();
        assert_eq!(d.delta[1], 0.0);
        assert_eq!(d.eta[1], 0.0);
    }

    #[test]
    fn directions_extend_across_prefixes() {
        let long: Vec<f64> = (1..=300).map(f64::from).collect();
        let full = random_directions(&long, 9).unwrap();
        let head = random_directions(&long[..100], 9).unwrap();
        assert_eq!(&full.delta[..100], &head.delta[..]);
        assert_eq!(&full.eta[..100], &head.eta[..]);
    }

    #[test]
    fn degenerate_theta_is_rejected() {
        assert!(random_directions(&[0.0; 8], 1).is_err());
        assert!(random_directions(&[], 1).is_err());
        // A single non-zero entry makes every pair parallel.
        assert!(random_directions(&[0.0, 1.0, 0.0], 1).is_err());
    }

    #[test]
    fn axis_contains_zero_exactly() {
        for steps in [3, 11, 51] {
            let axis = GridSpec::axis((-0.25, 0.25), steps);
            assert_eq!(axis[steps / 2], 0.0);
            assert_eq!(axis[0], -0.25);
            assert_eq!(axis[steps - 1], 0.25);
        }
    }

    #[test]
    fn surface_is_zero_at_origin_and_bounded() {
        let cfg = small_config();
        let puf = Architecture::NmqRo { g: 200 }.build(&cfg).unwrap();
        let dirs = random_directions(&puf.parameters(), 3).unwrap();
        let cs = sample_challenges(16, 1000, 4).unwrap();
        let grid = uniqueness_surface(&puf, &dirs, &GridSpec::square(0.05, 5), &cs).unwrap();
        assert_eq!(grid.at(2, 2), 0.0);
        assert_eq!(grid.nearest(0.0, 0.0), 0.0);
        assert!(grid.values.iter().all(|v| (0.0..=1.0).contains(v)));
        let csv = grid.to_csv();
        assert_eq!(csv.lines().count(), 26);
        assert!(csv.starts_with("alpha,beta,f\n"));
    }

    #[test]
    fn rejects_small_grids_and_budgets() {
        let cfg = small_config();
        let puf = ApufInstance::new(cfg.instance().unwrap());
        let dirs = random_directions(&puf.parameters(), 3).unwrap();
        let cs = sample_challenges(16, 1000, 4).unwrap();
        assert!(uniqueness_surface(&puf, &dirs, &GridSpec::square(0.1, 2), &cs).is_err());
        assert!(uniqueness_surface(&puf, &dirs, &GridSpec::square(0.1, 3), &cs[..999]).is_err());
        let short = DirectionPair {
            delta: vec![1.0; 3],
            eta: vec![0.5; 3],
            seed: 0,
        };
        assert!(uniqueness_surface(&puf, &short, &GridSpec::square(0.1, 3), &cs).is_err());
    }

    #[test]
    fn large_perturbations_are_clamped_and_counted() {
        let cfg = small_config();
        let puf = ApufInstance::new(cfg.instance().unwrap());
        let dirs = random_directions(&puf.parameters(), 3).unwrap();
        let cs = sample_challenges(16, 1000, 4).unwrap();
        let grid = uniqueness_surface(&puf, &dirs, &GridSpec::square(3.0, 3), &cs).unwrap();
        assert!(grid.clamped > 0);
        assert_eq!(grid.at(1, 1), 0.0);
    }

    #[test]
    fn presets_cover_six_panels() {
        let panels: String = SensitivityPreset::ALL.iter().map(|p| p.panel()).collect();
        assert_eq!(panels, "abcdef");
        assert_eq!(
            SensitivityPreset::from_panel('c').unwrap(),
            SensitivityPreset::NmqRo800
        );
        assert_eq!(
            SensitivityPreset::XorNmqRo3.radius() * 5.0,
            SensitivityPreset::Apuf.radius()
        );
        assert!(SensitivityPreset::from_panel('z').is_err());
    }
}
