//! Fully connected network with a two-way softmax output, trained by minibatch
//! Adam on cross-entropy.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::report::digest;
use super::{ensure_disjoint, ensure_width, AttackKind, AttackReport, Model};
use crate::dataset::CrpRecord;
use crate::entropy::Challenge;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// Tail of the training set held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128, 128],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            max_epochs: 40,
            patience: 5,
            validation_fraction: 0.05,
            seed: 0,
        }
    }
}

impl MlpConfig {
    fn describe(&self) -> String {
        format!(
            "mlp hidden={:?} activation={:?} lr={} betas=({}, {}) eps={} batch={} max_epochs={} patience={} val={} seed={}",
            self.hidden,
            self.activation,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.batch_size,
            self.max_epochs,
            self.patience,
            self.validation_fraction,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `inputs x outputs`.
    w: Array2<f64>,
    b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Dense>,
    activation: Activation,
}

struct Gradients {
    w: Vec<Array2<f64>>,
    b: Vec<Array1<f64>>,
}

impl MlpModel {
    /// He-initialized network with layer widths `sizes` (input first, output last).
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer sizes {sizes:?}")));
        }
        let mut stream = rng::stream(seed, &[0x6d6c_70]);
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let std = (2.0 / fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).expect("positive std");
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut stream));
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].w.nrows()];
        sizes.extend(self.layers.iter().map(|l| l.w.ncols()));
        sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flattened parameters: per layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = *it.next().unwrap());
            l.b.iter_mut().for_each(|v| *v = *it.next().unwrap());
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds raw logits.
    fn forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.w) + &l.b;
            if i + 1 < self.layers.len() {
                self.activation.apply(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).pop().expect("at least one layer")
    }

    /// Mean softmax cross-entropy over the rows of `x`.
    pub fn loss(&self, x: &Array2<f64>, y: &[usize]) -> f64 {
        let logits = self.logits(x);
        mean_cross_entropy(&logits, y)
    }

    fn backward(&self, x: &Array2<f64>, y: &[usize]) -> (f64, Gradients) {
        let acts = self.forward(x);
        let logits = acts.last().unwrap();
        let loss = mean_cross_entropy(logits, y);
        let rows = x.nrows() as f64;
        let mut delta = softmax(logits);
        for (mut row, &label) in delta.axis_iter_mut(Axis(0)).zip(y) {
            row[label] -= 1.0;
        }
        delta.mapv_inplace(|v| v / rows);

        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            gw.push(acts[i].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if i > 0 {
                let mut prev = delta.dot(&self.layers[i].w.t());
                let act = self.activation;
                prev.zip_mut_with(&acts[i], |d, &a| *d *= act.derivative_from_output(a));
                delta = prev;
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { w: gw, b: gb })
    }

    /// Analytic gradient of [`MlpModel::loss`], flattened like [`MlpModel::params`].
    pub fn gradient(&self, x: &Array2<f64>, y: &[usize]) -> Vec<f64> {
        let (_, g) = self.backward(x, y);
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in g.w.iter().zip(&g.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn predict_batch(&self, challenges: &[Challenge]) -> Vec<bool> {
        let mut out = Vec::with_capacity(challenges.len());
        for chunk in challenges.chunks(4096) {
            let logits = self.logits(&encode(chunk));
            out.extend(logits.axis_iter(Axis(0)).map(|r| r[1] > r[0]));
        }
        out
    }
}

impl Model for MlpModel {
    fn predict(&self, c: &Challenge) -> bool {
        self.predict_batch(std::slice::from_ref(c))[0]
    }
}

fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

fn mean_cross_entropy(logits: &Array2<f64>, y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &label) in logits.axis_iter(Axis(0)).zip(y) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    total / logits.nrows() as f64
}

/// ±1 encoding, one row per challenge.
fn encode(challenges: &[Challenge]) -> Array2<f64> {
    let n = challenges.first().map_or(0, |c| c.len());
    Array2::from_shape_fn((challenges.len(), n), |(i, j)| {
        if challenges[i].bit(j) {
            -1.0
        } else {
            1.0
        }
    })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, cfg: &MlpConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let mut k = 0;
        let mut update = |p: &mut f64, g: f64, k: &mut usize| {
            let m = &mut self.m[*k];
            let v = &mut self.v[*k];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
            *k += 1;
        };
        for (l, (gw, gb)) in model.layers.iter_mut().zip(grads.w.iter().zip(&grads.b)) {
            for (p, &g) in l.w.iter_mut().zip(gw.iter()) {
                update(p, g, &mut k);
            }
            for (p, &g) in l.b.iter_mut().zip(gb.iter()) {
                update(p, g, &mut k);
            }
        }
    }
}

fn accuracy(model: &MlpModel, records: &[CrpRecord]) -> f64 {
    let challenges: Vec<Challenge> = records.iter().map(|r| r.challenge).collect();
    let hits = model
        .predict_batch(&challenges)
        .into_iter()
        .zip(records)
        .filter(|(p, r)| *p == r.response)
        .count();
    hits as f64 / records.len() as f64
}

/// Trains an MLP on `train`, holding out its tail for early stopping, and
/// reports accuracy on `test`. A NaN loss aborts training with `failed` set.
pub fn train_mlp(
    train: &[CrpRecord],
    test: &[CrpRecord],
    config: &MlpConfig,
    target: &str,
) -> Result<(MlpModel, AttackReport)> {
    let start = Instant::now();
    let n = ensure_width(train)?;
    ensure_disjoint(train, test)?;
    if config.hidden.is_empty() {
        return Err(Error::InvalidConfig(
            "MLP needs at least one hidden layer".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be >= 1".into()));
    }
    let mut sizes = vec![n];
    sizes.extend(&config.hidden);
    sizes.push(2);
    let mut model = MlpModel::new(&sizes, config.activation, config.seed)?;

    let val_len = ((train.len() as f64) * config.validation_fraction).round() as usize;
    let (fit, val) = train.split_at(train.len() - val_len);
    if fit.is_empty() {
        return Err(Error::Empty("training set after validation hold-out"));
    }
    let fit_x = encode(&fit.iter().map(|r| r.challenge).collect::<Vec<_>>());
    let fit_y: Vec<usize> = fit.iter().map(|r| usize::from(r.response)).collect();
    let val_x = encode(&val.iter().map(|r| r.challenge).collect::<Vec<_>>());
    let val_y: Vec<usize> = val.iter().map(|r| usize::from(r.response)).collect();

    let mut adam = Adam::new(model.parameter_count());
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut stream = rng::stream(config.seed, &[0x7368_7566]);
    let mut best = (f64::INFINITY, model.clone());
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut early_stopped = false;
    let mut failed = false;
    let mut notes = Vec::new();

    'epochs: for epoch in 0..config.max_epochs {
        epochs_run = epoch + 1;
        order.shuffle(&mut stream);
        for batch in order.chunks(config.batch_size) {
            let bx = fit_x.select(Axis(0), batch);
            let by: Vec<usize> = batch.iter().map(|&i| fit_y[i]).collect();
            let (loss, grads) = model.backward(&bx, &by);
            if !loss.is_finite() {
                failed = true;
                notes.push(format!("loss diverged in epoch {epoch}"));
                break 'epochs;
            }
            adam.step(&mut model, &grads, config);
        }
        let monitor = if val.is_empty() {
            model.loss(&fit_x, &fit_y)
        } else {
            model.loss(&val_x, &val_y)
        };
        log::debug!("{target}: epoch {epoch} validation loss {monitor:.5}");
        if !monitor.is_finite() {
            failed = true;
            notes.push(format!("validation loss diverged in epoch {epoch}"));
            break;
        }
        if monitor < best.0 - 1e-4 {
            best = (monitor, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                early_stopped = true;
                break;
            }
        }
    }
    if best.0.is_finite() {
        model = best.1;
    }
    notes.push(format!("epochs run: {epochs_run}"));
    let train_accuracy = accuracy(&model, fit);
    let test_accuracy = if test.is_empty() {
        f64::NAN
    } else {
        accuracy(&model, test)
    };
    let report = AttackReport {
        attack: AttackKind::Mlp,
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
        converged: early_stopped,
        failed,
        notes,
    };
    Ok((model, report))
}
