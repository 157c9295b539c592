//! Covariance matrix adaptation evolution strategy with rank-one and rank-mu
//! updates, using the default parameterization of Hansen's tutorial.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CmaEsConfig {
    pub sigma0: f64,
    /// Offspring per generation; `None` uses `4 + floor(3 ln dim)`.
    pub population: Option<usize>,
    pub max_generations: usize,
    /// Restarts after a collapse, each with double the previous initial step.
    pub max_restarts: usize,
    /// Step-size collapse threshold, relative to `sigma0`.
    pub tol_x: f64,
    /// A generation whose fitness spread stays below this counts as flat.
    pub tol_fun: f64,
    /// Consecutive flat generations treated as a collapse.
    pub flat_generations: usize,
    pub seed: u64,
}

impl Default for CmaEsConfig {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            population: None,
            max_generations: 500,
            max_restarts: 3,
            tol_x: 1e-9,
            tol_fun: 1e-12,
            flat_generations: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaEsOutcome {
    pub best: Vec<f64>,
    pub best_fitness: f64,
    pub generations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    /// The last run ended in a collapse rather than exhausting its budget.
    pub collapsed: bool,
}

#[derive(Debug, Clone)]
pub struct CmaEs {
    dim: usize,
    config: CmaEsConfig,
}

struct Params {
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
}

impl Params {
    fn new(dim: usize, population: Option<usize>) -> Self {
        let n = dim as f64;
        let lambda = population
            .unwrap_or(4 + (3.0 * n.ln()).floor() as usize)
            .max(2);
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let cs = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let c1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let cmu =
            (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Self {
            lambda,
            mu,
            weights,
            mu_eff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
        }
    }
}

enum RunEnd {
    Budget,
    Collapse,
}

struct RunResult {
    best: Vec<f64>,
    best_fitness: f64,
    generations: usize,
    evaluations: usize,
    end: RunEnd,
}

impl CmaEs {
    pub fn new(dim: usize, config: CmaEsConfig) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("CMA-ES dimension must be >= 1".into()));
        }
        if !(config.sigma0 > 0.0 && config.sigma0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma0 must be positive, got {}",
                config.sigma0
            )));
        }
        if config.population.is_some_and(|p| p < 2) {
            return Err(Error::InvalidConfig("population must be >= 2".into()));
        }
        Ok(Self { dim, config })
    }

    pub fn config(&self) -> &CmaEsConfig {
        &self.config
    }

    pub fn population(&self) -> usize {
        Params::new(self.dim, self.config.population).lambda
    }

    /// Maximizes `fitness` starting from `x0`. Non-finite fitness values are
    /// ranked last. Deterministic in the configured seed.
    pub fn maximize<F>(&self, x0: &[f64], fitness: F) -> Result<CmaEsOutcome>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        if x0.len() != self.dim {
            return Err(Error::InvalidConfig(format!(
                "start point has {} entries, expected {}",
                x0.len(),
                self.dim
            )));
        }
        let mut outcome = CmaEsOutcome {
            best: x0.to_vec(),
            best_fitness: f64::NEG_INFINITY,
            generations: 0,
            evaluations: 0,
            restarts: 0,
            collapsed: false,
        };
        let mut sigma = self.config.sigma0;
        let mut start = x0.to_vec();
        for attempt in 0..=self.config.max_restarts {
            let mut stream = rng::stream(self.config.seed, &[0x636d_61, attempt as u64]);
            if attempt > 0 {
                for (s, &x) in start.iter_mut().zip(x0) {
                    let z: f64 = StandardNormal.sample(&mut stream);
                    *s = x + sigma * z;
                }
            }
            let run = self.run(&start, sigma, &fitness, &mut stream);
            outcome.generations += run.generations;
            outcome.evaluations += run.evaluations;
            if run.best_fitness > outcome.best_fitness {
                outcome.best_fitness = run.best_fitness;
                outcome.best = run.best;
            }
            match run.end {
                RunEnd::Budget => {
                    outcome.collapsed = false;
                    break;
                }
                RunEnd::Collapse => {
                    outcome.collapsed = true;
                    if attempt == self.config.max_restarts {
                        break;
                    }
                    log::debug!(
                        "CMA-ES collapsed after {} generations, restarting",
                        run.generations
                    );
                    outcome.restarts += 1;
                    sigma *= 2.0;
                }
            }
        }
        Ok(outcome)
    }

    fn run<F>(
        &self,
        x0: &[f64],
        sigma0: f64,
        fitness: &F,
        stream: &mut rand_chacha::ChaCha8Rng,
    ) -> RunResult
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = self.dim;
        let p = Params::new(n, self.config.population);
        let mut mean = DVector::from_column_slice(x0);
        let mut sigma = sigma0;
        let mut c = DMatrix::<f64>::identity(n, n);
        let mut b = DMatrix::<f64>::identity(n, n);
        let mut d = DVector::<f64>::from_element(n, 1.0);
        let mut pc = DVector::<f64>::zeros(n);
        let mut ps = DVector::<f64>::zeros(n);
        let mut result = RunResult {
            best: x0.to_vec(),
            best_fitness: f64::NEG_INFINITY,
            generations: 0,
            evaluations: 0,
            end: RunEnd::Budget,
        };
        let mut flat = 0;

        for generation in 0..self.config.max_generations {
            result.generations = generation + 1;
            let ys: Vec<DVector<f64>> = (0..p.lambda)
                .map(|_| {
                    let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut *stream));
                    &b * d.component_mul(&z)
                })
                .collect();
            let xs: Vec<Vec<f64>> = ys
                .iter()
                .map(|y| (&mean + sigma * y).as_slice().to_vec())
                .collect();
            let scores: Vec<f64> = xs.par_iter().map(|x| fitness(x)).collect();
            result.evaluations += p.lambda;

            let mut order: Vec<usize> = (0..p.lambda).collect();
            let key = |s: f64| if s.is_finite() { s } else { f64::NEG_INFINITY };
            order.sort_by(|&i, &j| key(scores[j]).total_cmp(&key(scores[i])));
            let top = order[0];
            if key(scores[top]) > result.best_fitness {
                result.best_fitness = scores[top];
                result.best = xs[top].clone();
            }

            let mut y_w = DVector::<f64>::zeros(n);
            for (w, &i) in p.weights.iter().zip(&order[..p.mu]) {
                y_w.axpy(*w, &ys[i], 1.0);
            }
            mean.axpy(sigma, &y_w, 1.0);

            // C^{-1/2} y_w = B D^{-1} B^T y_w
            let inv_sqrt_y = &b * (b.transpose() * &y_w).component_div(&d);
            ps = (1.0 - p.cs) * &ps + (p.cs * (2.0 - p.cs) * p.mu_eff).sqrt() * inv_sqrt_y;
            let ps_norm = ps.norm();
            let decay = 1.0 - (1.0 - p.cs).powi(2 * (generation as i32 + 1));
            let hsig = ps_norm / decay.sqrt() / p.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
            let hsig_f = if hsig { 1.0 } else { 0.0 };
            pc = (1.0 - p.cc) * &pc + hsig_f * (p.cc * (2.0 - p.cc) * p.mu_eff).sqrt() * &y_w;

            let mut rank_mu = DMatrix::<f64>::zeros(n, n);
            for (w, &i) in p.weights.iter().zip(&order[..p.mu]) {
                rank_mu.ger(*w, &ys[i], &ys[i], 1.0);
            }
            let correction = (1.0 - hsig_f) * p.cc * (2.0 - p.cc);
            c = (1.0 - p.c1 - p.cmu) * &c
                + p.c1 * (&pc * pc.transpose() + correction * &c)
                + p.cmu * rank_mu;
            sigma *= ((p.cs / p.damps) * (ps_norm / p.chi_n - 1.0)).exp();

            c = (&c + c.transpose()) * 0.5;
            let eig = SymmetricEigen::new(c.clone());
            b = eig.eigenvectors;
            d = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());

            let spread = order
                .iter()
                .map(|&i| key(scores[i]))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    (lo.min(s), hi.max(s))
                });
            if spread.1 - spread.0 <= self.config.tol_fun || !spread.1.is_finite() {
                flat += 1;
            } else {
                flat = 0;
            }
            let step = sigma * d.max();
            if flat >= self.config.flat_generations
                || step < self.config.tol_x * self.config.sigma0
                || !step.is_finite()
            {
                result.end = RunEnd::Collapse;
                break;
            }
        }
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        -x.iter().map(|v| (v - 1.5) * (v - 1.5)).sum::<f64>()
    }

    #[test]
    fn default_population_size() {
        let es = CmaEs::new(33, CmaEsConfig::default()).unwrap();
        assert_eq!(es.population(), 4 + (3.0 * 33f64.ln()).floor() as usize);
    }

    #[test]
    fn finds_sphere_optimum() {
        let cfg = CmaEsConfig {
            max_generations: 400,
            max_restarts: 0,
            ..Default::default()
        };
        let out = CmaEs::new(10, cfg)
            .unwrap()
            .maximize(&[0.0; 10], sphere)
            .unwrap();
        assert!(out.best_fitness > -1e-8, "{}", out.best_fitness);
        assert!(out.best.iter().all(|v| (v - 1.5).abs() < 1e-3));
    }

    #[test]
    fn handles_rosenbrock_valley() {
        let rosen = |x: &[f64]| -> f64 {
            -x.windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum::<f64>()
        };
        let cfg = CmaEsConfig {
            sigma0: 0.5,
            max_generations: 3000,
            ..Default::default()
        };
        let out = CmaEs::new(5, cfg)
            .unwrap()
            .maximize(&[0.0; 5], rosen)
            .unwrap();
        assert!(out.best_fitness > -1e-6, "{}", out.best_fitness);
    }

    #[test]
    fn anisotropic_scaling_is_learned() {
        let ellipse = |x: &[f64]| -> f64 {
            -x.iter()
                .enumerate()
                .map(|(i, v)| 10f64.powi(i as i32) * v * v)
                .sum::<f64>()
        };
        let cfg = CmaEsConfig {
            max_generations: 2000,
            max_restarts: 0,
            ..Default::default()
        };
        let out = CmaEs::new(6, cfg)
            .unwrap()
            .maximize(&[1.0; 6], ellipse)
            .unwrap();
        assert!(out.best_fitness > -1e-8, "{}", out.best_fitness);
    }

    #[test]
    fn same_seed_same_outcome() {
        let cfg = CmaEsConfig {
            max_generations: 50,
            seed: 7,
            ..Default::default()
        };
        let a = CmaEs::new(4, cfg.clone())
            .unwrap()
            .maximize(&[0.0; 4], sphere)
            .unwrap();
        let b = CmaEs::new(4, cfg)
            .unwrap()
            .maximize(&[0.0; 4], sphere)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flat_fitness_triggers_bounded_restarts() {
        let out = CmaEs::new(3, CmaEsConfig::default())
            .unwrap()
            .maximize(&[0.0; 3], |_| 1.0)
            .unwrap();
        assert!(out.collapsed);
        assert_eq!(out.restarts, 3);
        assert!(out.generations < 4 * 500);
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(CmaEs::new(0, CmaEsConfig::default()).is_err());
        let cfg = CmaEsConfig {
            sigma0: 0.0,
            ..Default::default()
        };
        assert!(CmaEs::new(2, cfg).is_err());
        let es = CmaEs::new(2, CmaEsConfig::default()).unwrap();
        assert!(es.maximize(&[0.0; 3], sphere).is_err());
    }
}
