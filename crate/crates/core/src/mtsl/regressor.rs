//! One-hidden-layer feedforward regressor with a tanh hidden layer and a
//! linear output, trained by mini-batch Adam with input-noise injection and
//! validation-based early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest number of pairs a regressor is trained on.
pub const MIN_TRAINING_PAIRS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    /// Epochs without validation improvement tolerated before stopping.
    pub patience: usize,
    /// Standard deviation of the Gaussian noise added to standardized inputs.
    pub noise_sigma: f64,
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    /// Pairs beyond this many are subsampled (deterministically).
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.70,
            validation_fraction: 0.15,
            test_fraction: 0.15,
            patience: 20,
            noise_sigma: 0.01,
            learning_rate: 1e-2,
            lr_decay: 0.99,
            max_epochs: 200,
            batch_size: 32,
            hidden: 16,
            max_pairs: 3000,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fractions = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must be nonnegative and sum to 1"));
        }
        if self.train_fraction <= 0.0 || self.validation_fraction <= 0.0 {
            return Err(Error::invalid("training and validation fractions must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be nonnegative"));
        }
        if !(self.learning_rate > 0.0) || self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("learning rate, hidden width, batch size and epochs must be positive"));
        }
        Ok(())
    }
}

/// Input/target pairs for one regressor, in original units.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Pairs<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
}

impl<T: Scalar> Pairs<T> {
    pub fn push(&mut self, x: Vec<T>, y: T) {
        self.inputs.push(x);
        self.targets.push(y);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Training loss per epoch (standardized units, noise-free inputs).
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    /// Root-mean-square error on the held-out test split, original units.
    pub test_rmse: f64,
    pub test_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Regressor<T> {
    input_dim: usize,
    hidden: usize,
    /// Flat parameters: `w1` (hidden x input, row-major), `b1`, `w2`, `b2`.
    params: Vec<T>,
    x_mean: Vec<T>,
    x_scale: Vec<T>,
    y_mean: T,
    y_scale: T,
    pub log: TrainingLog,
}

fn scale_of<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = T::from_count(values.clone().count().max(1));
    let mean = values.clone().sum::<T>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<T>() / n;
    let sd = var.sqrt();
    let scale = if sd > T::lit(1e-9) * (mean.abs() + T::one()) { sd } else { T::one() };
    (mean, scale)
}

impl<T: Scalar> Regressor<T> {
    pub fn n_params(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + 2 * hidden + 1
    }

    /// Untrained network with Xavier-uniform weights and identity scaling.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut params = vec![T::zero(); Self::n_params(input_dim, hidden)];
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        for p in &mut params[..hidden * input_dim] {
            *p = T::lit(rng.random_range(-a1..a1));
        }
        let w2 = hidden * input_dim + hidden;
        for p in &mut params[w2..w2 + hidden] {
            *p = T::lit(rng.random_range(-a2..a2));
        }
        Self {
            input_dim,
            hidden,
            params,
            x_mean: vec![T::zero(); input_dim],
            x_scale: vec![T::one(); input_dim],
            y_mean: T::zero(),
            y_scale: T::one(),
            log: TrainingLog::default(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn parameters(&self) -> &[T] {
        &self.params
    }

    pub fn set_parameters(&mut self, params: &[T]) {
        assert_eq!(params.len(), self.params.len());
        self.params.copy_from_slice(params);
    }

    /// Network output in standardized units for a standardized input.
    fn forward_std(&self, x: &[T], hidden_out: &mut [T]) -> T {
        let (d, h) = (self.input_dim, self.hidden);
        let b1 = h * d;
        let w2 = b1 + h;
        let mut y = self.params[w2 + h];
        for j in 0..h {
            let mut z = self.params[b1 + j];
            for k in 0..d {
                z = z + self.params[j * d + k] * x[k];
            }
            let a = z.tanh();
            hidden_out[j] = a;
            y = y + self.params[w2 + j] * a;
        }
        y
    }

    fn standardize(&self, x: &[T], out: &mut [T]) {
        for k in 0..self.input_dim {
            out[k] = (x[k] - self.x_mean[k]) / self.x_scale[k];
        }
    }

    /// Prediction in original units.
    pub fn predict(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.input_dim);
        let mut xs = vec![T::zero(); self.input_dim];
        let mut hid = vec![T::zero(); self.hidden];
        self.standardize(x, &mut xs);
        self.y_mean + self.y_scale * self.forward_std(&xs, &mut hid)
    }

    /// Half mean squared error on standardized pairs, and its gradient with
    /// respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, xs: &[Vec<T>], ys: &[T]) -> (T, Vec<T>) {
        let (d, h) = (self.input_dim, self.hidden);
        let b1 = h * d;
        let w2 = b1 + h;
        let mut grad = vec![T::zero(); self.params.len()];
        let mut hid = vec![T::zero(); h];
        let mut loss = T::zero();
        let inv_n = T::one() / T::from_count(ys.len().max(1));
        for (x, &y) in xs.iter().zip(ys) {
            let e = self.forward_std(x, &mut hid) - y;
            loss = loss + e * e;
            let ge = e * inv_n;
            grad[w2 + h] = grad[w2 + h] + ge;
            for j in 0..h {
                grad[w2 + j] = grad[w2 + j] + ge * hid[j];
                let delta = ge * self.params[w2 + j] * (T::one() - hid[j] * hid[j]);
                grad[b1 + j] = grad[b1 + j] + delta;
                for k in 0..d {
                    grad[j * d + k] = grad[j * d + k] + delta * x[k];
                }
            }
        }
        (T::lit(0.5) * loss * inv_n, grad)
    }

    pub fn loss(&self, xs: &[Vec<T>], ys: &[T]) -> T {
        let mut hid = vec![T::zero(); self.hidden];
        let mut loss = T::zero();
        for (x, &y) in xs.iter().zip(ys) {
            let e = self.forward_std(x, &mut hid) - y;
            loss = loss + e * e;
        }
        T::lit(0.5) * loss / T::from_count(ys.len().max(1))
    }

    /// Trains on `pairs`, returning the parameter snapshot with the lowest
    /// validation loss.
    pub fn train(pairs: &Pairs<T>, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if pairs.len() < MIN_TRAINING_PAIRS {
            return Err(Error::invalid(format!(
                "{} training pairs; at least {MIN_TRAINING_PAIRS} required",
                pairs.len()
            )));
        }
        let input_dim = pairs.inputs[0].len();
        if pairs.inputs.iter().any(|x| x.len() != input_dim) {
            return Err(Error::invalid("inconsistent input widths"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng);
        order.truncate(config.max_pairs.max(MIN_TRAINING_PAIRS));
        let n = order.len();
        let n_train = ((config.train_fraction * n as f64).round() as usize).clamp(1, n);
        let n_val = ((config.validation_fraction * n as f64).round() as usize).clamp(1, n - n_train.min(n - 1));
        let n_train = n_train.min(n - n_val);
        let (train_idx, rest) = order.split_at(n_train);
        let (val_idx, test_idx) = rest.split_at(n_val.min(rest.len()));

        let mut net = Self::init(input_dim, config.hidden, &mut rng);
        for k in 0..input_dim {
            let (m, s) = scale_of(train_idx.iter().map(|&i| pairs.inputs[i][k]));
            net.x_mean[k] = m;
            net.x_scale[k] = s;
        }
        let (ym, ys) = scale_of(train_idx.iter().map(|&i| pairs.targets[i]));
        net.y_mean = ym;
        net.y_scale = ys;

        let standardize = |idx: &[usize]| -> (Vec<Vec<T>>, Vec<T>) {
            let mut xs = Vec::with_capacity(idx.len());
            let mut ts = Vec::with_capacity(idx.len());
            for &i in idx {
                let mut x = vec![T::zero(); input_dim];
                net.standardize(&pairs.inputs[i], &mut x);
                xs.push(x);
                ts.push((pairs.targets[i] - ym) / ys);
            }
            (xs, ts)
        };
        let (train_x, train_y) = standardize(train_idx);
        let (val_x, val_y) = standardize(val_idx);

        let mut m = vec![T::zero(); net.params.len()];
        let mut v = vec![T::zero(); net.params.len()];
        let (beta1, beta2, eps) = (T::lit(0.9), T::lit(0.999), T::lit(1e-8));
        let mut step = 0i32;
        let mut best_params = net.params.clone();
        let mut best_val = net.loss(&val_x, &val_y);
        let mut best_epoch = 0;
        let mut log = TrainingLog::default();
        let mut batch_order: Vec<usize> = (0..train_x.len()).collect();
        let noise = T::lit(config.noise_sigma);
        let mut bx: Vec<Vec<T>> = Vec::with_capacity(config.batch_size);
        let mut by: Vec<T> = Vec::with_capacity(config.batch_size);

        for epoch in 1..=config.max_epochs {
            let lr = T::lit(config.learning_rate * config.lr_decay.powi(epoch as i32 - 1));
            batch_order.shuffle(&mut rng);
            for chunk in batch_order.chunks(config.batch_size) {
                bx.clear();
                by.clear();
                for &i in chunk {
                    let x = train_x[i]
                        .iter()
                        .map(|&v| {
                            if config.noise_sigma > 0.0 {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                v + noise * T::lit(z)
                            } else {
                                v
                            }
                        })
                        .collect();
                    bx.push(x);
                    by.push(train_y[i]);
                }
                let (_, g) = net.loss_and_gradient(&bx, &by);
                step += 1;
                let c1 = T::one() - beta1.powi(step);
                let c2 = T::one() - beta2.powi(step);
                for p in 0..net.params.len() {
                    m[p] = beta1 * m[p] + (T::one() - beta1) * g[p];
                    v[p] = beta2 * v[p] + (T::one() - beta2) * g[p] * g[p];
                    let update = lr * (m[p] / c1) / ((v[p] / c2).sqrt() + eps);
                    net.params[p] = net.params[p] - update;
                }
            }
            let train_loss = net.loss(&train_x, &train_y);
            let val_loss = net.loss(&val_x, &val_y);
            if !train_loss.is_finite() || !val_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "training diverged at epoch {epoch} (train loss {train_loss}, validation loss {val_loss}, lr {lr})"
                )));
            }
            log.train_loss.push(train_loss.as_f64());
            log.validation_loss.push(val_loss.as_f64());
            if val_loss < best_val {
                best_val = val_loss;
                best_params.copy_from_slice(&net.params);
                best_epoch = epoch;
            } else if epoch - best_epoch > config.patience {
                break;
            }
        }
        net.params = best_params;
        log.best_epoch = best_epoch;
        log.best_validation_loss = best_val.as_f64();
        log.test_samples = test_idx.len();
        if !test_idx.is_empty() {
            let sse: f64 = test_idx
                .iter()
                .map(|&i| {
                    let e = (net.predict(&pairs.inputs[i]) - pairs.targets[i]).as_f64();
                    e * e
                })
                .sum();
            log.test_rmse = (sse / test_idx.len() as f64).sqrt();
        }
        net.log = log;
        Ok(net)
    }
}
