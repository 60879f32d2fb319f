//! Finite-width ReLU regressor trained with Adam, plus pretrain/fine-tune.
//!
//! Weights are initialized with variance `σ_w²/fan_in` and biases with
//! variance `σ_b²`, the same parameterization as [`crate::nngp::NngpParams`],
//! so a wide network here is a sample from the prior whose covariance the
//! NNGP kernel computes.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Scaler;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    /// `[d, h₁, ..., h_L, 1]`
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        let arch = Self {
            widths,
            activation: Activation::Relu,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// `[d, hidden..., 1]`
    pub fn with_hidden(d: usize, hidden: &[usize]) -> Result<Self> {
        let mut widths = vec![d];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self::new(widths)
    }

    pub fn default_for(d: usize) -> Self {
        Self::with_hidden(d, &[256, 256]).expect("default architecture is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::invalid("architecture needs at least one hidden layer"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("layer widths must be >= 1"));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(Error::invalid("output width must be 1"));
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }
}

/// Affine layer; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    fn zeros_like(&self) -> Self {
        Self {
            weights: DMatrix::zeros(self.weights.nrows(), self.weights.ncols()),
            bias: DVector::zeros(self.bias.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitScale {
    pub sigma_w2: f64,
    pub sigma_b2: f64,
}

impl Default for InitScale {
    fn default() -> Self {
        Self {
            sigma_w2: 2.0,
            sigma_b2: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of the training rows held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
    pub init: InitScale,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            patience: 30,
            validation_fraction: 0.1,
            seed: 0,
            init: InitScale::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.patience < 1 || self.batch_size < 1 {
            return Err(Error::Config("patience and batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    /// Layers frozen, counted from the input side.
    pub freeze_layers: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            freeze_layers: 1,
            learning_rate: 1e-4,
            max_epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub arch: MlpArchitecture,
    pub layers: Vec<DenseLayer>,
    /// Input/label standardization; `None` for hand-built networks.
    pub scaler: Option<Scaler>,
    pub log: Vec<EpochRecord>,
}

fn relu(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.map(|v| v.max(0.0))
}

fn affine(a: &DMatrix<f64>, layer: &DenseLayer) -> DMatrix<f64> {
    let mut z = a * layer.weights.transpose();
    for mut row in z.row_iter_mut() {
        row += layer.bias.transpose();
    }
    z
}

impl MlpModel {
    pub fn init(arch: MlpArchitecture, seed: u64, scale: InitScale) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let ws = (scale.sigma_w2 / fan_in as f64).sqrt();
                let bs = scale.sigma_b2.sqrt();
                DenseLayer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| ws * rng.sample::<f64, _>(StandardNormal)),
                    bias: DVector::from_fn(fan_out, |_, _| bs * rng.sample::<f64, _>(StandardNormal)),
                }
            })
            .collect();
        Ok(Self {
            arch,
            layers,
            scaler: None,
            log: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    /// Raw network output (no scaling).
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(&a, layer);
            a = if l == last { z } else { relu(&z) };
        }
        Ok(a.column(0).into_owned())
    }

    /// Forward pass in raw input/label units, through the captured scalers.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match &self.scaler {
            Some(s) => Ok(s.inverse_y(&self.forward(&s.transform_x(x)?)?)),
            None => self.forward(x),
        }
    }

    /// Mean squared error over the rows of `x` (network units).
    pub fn loss(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
        let out = self.forward(x)?;
        Ok((out - y).norm_squared() / y.len() as f64)
    }

    /// MSE and its gradient with respect to every weight and bias.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, Vec<DenseLayer>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let m = x.nrows() as f64;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(acts.last().unwrap(), layer);
            let a = if l == last { z.clone() } else { relu(&z) };
            pre.push(z);
            acts.push(a);
        }
        let out = acts.last().unwrap().column(0);
        let resid = out - y;
        let loss = resid.norm_squared() / m;

        let mut grads: Vec<DenseLayer> = self.layers.iter().map(DenseLayer::zeros_like).collect();
        let mut delta = DMatrix::from_column_slice(resid.len(), 1, (resid * (2.0 / m)).as_slice());
        for l in (0..self.layers.len()).rev() {
            grads[l].weights = delta.tr_mul(&acts[l]);
            grads[l].bias = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            if l > 0 {
                let mut back = &delta * &self.layers[l].weights;
                back.zip_apply(&pre[l - 1], |b, z| {
                    if z <= 0.0 {
                        *b = 0.0
                    }
                });
                delta = back;
            }
        }
        Ok((loss, grads))
    }
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records an epoch; returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

struct Adam {
    lr: f64,
    t: i32,
    m: Vec<DenseLayer>,
    v: Vec<DenseLayer>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(layers: &[DenseLayer], lr: f64) -> Self {
        Self {
            lr,
            t: 0,
            m: layers.iter().map(DenseLayer::zeros_like).collect(),
            v: layers.iter().map(DenseLayer::zeros_like).collect(),
        }
    }

    fn step(&mut self, layers: &mut [DenseLayer], grads: &[DenseLayer], frozen: usize) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        };
        for l in frozen..layers.len() {
            update(
                layers[l].weights.as_mut_slice(),
                grads[l].weights.as_slice(),
                self.m[l].weights.as_mut_slice(),
                self.v[l].weights.as_mut_slice(),
            );
            update(
                layers[l].bias.as_mut_slice(),
                grads[l].bias.as_slice(),
                self.m[l].bias.as_mut_slice(),
                self.v[l].bias.as_mut_slice(),
            );
        }
    }
}

struct Descent<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    val: Option<(&'a DMatrix<f64>, &'a DVector<f64>)>,
    lr: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: Option<usize>,
    frozen: usize,
    seed: u64,
}

/// Shared mini-batch loop for training and fine-tuning. Data are in network units.
fn descend(model: &mut MlpModel, run: Descent<'_>) -> Result<()> {
    let n = run.x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = Adam::new(&model.layers, run.lr);
    let mut stopper = run.patience.map(EarlyStopping::new);
    let mut best_layers = model.layers.clone();
    let mut last_finite = model.log.last().map_or(0, |r| r.epoch);
    let epoch0 = last_finite;

    for e in 1..=run.max_epochs {
        let epoch = epoch0 + e;
        order.shuffle(&mut rng);
        for batch in order.chunks(run.batch_size.max(1)) {
            let xb = run.x.select_rows(batch);
            let yb = DVector::from_iterator(batch.len(), batch.iter().map(|&i| run.y[i]));
            let (_, grads) = model.loss_and_gradients(&xb, &yb)?;
            adam.step(&mut model.layers, &grads, run.frozen);
        }
        let train_loss = model.loss(run.x, run.y)?;
        let val_loss = match run.val {
            Some((xv, yv)) => Some(model.loss(xv, yv)?),
            None => None,
        };
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                last_finite_epoch: last_finite,
            });
        }
        last_finite = epoch;
        model.log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if let (Some(stop), Some(v)) = (stopper.as_mut(), val_loss) {
            let (improved, halt) = stop.observe(epoch, v);
            if improved {
                best_layers.clone_from(&model.layers);
            }
            if halt {
                break;
            }
        }
    }
    if stopper.is_some() {
        model.layers = best_layers;
    }
    Ok(())
}

/// Trains on `(x, y)` holding out `cfg.validation_fraction` of rows for early stopping.
pub fn train(x: &DMatrix<f64>, y: &DVector<f64>, arch: &MlpArchitecture, cfg: &TrainConfig) -> Result<MlpModel> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid("MLP training needs at least 2 samples"));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    cfg.validate()?;
    if cfg.validation_fraction == 0.0 {
        return train_with_validation(x, y, None, arch, cfg);
    }
    let n_val = ((cfg.validation_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    idx.shuffle(&mut rng);
    let (val_idx, fit_idx) = idx.split_at(n_val);
    let (mut val_idx, mut fit_idx) = (val_idx.to_vec(), fit_idx.to_vec());
    val_idx.sort_unstable();
    fit_idx.sort_unstable();
    let pick = |rows: &[usize]| (x.select_rows(rows), DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i])));
    let (xf, yf) = pick(&fit_idx);
    let (xv, yv) = pick(&val_idx);
    train_with_validation(&xf, &yf, Some((&xv, &yv)), arch, cfg)
}

/// Trains on `(x, y)` with an explicit validation set (raw units). Without one,
/// runs all epochs and returns the final parameters.
pub fn train_with_validation(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    val: Option<(&DMatrix<f64>, &DVector<f64>)>,
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<MlpModel> {
    cfg.validate()?;
    if x.ncols() != arch.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim(),
            got: x.ncols(),
        });
    }
    let scaler = Scaler::fit(x, y)?;
    let xs = scaler.transform_x(x)?;
    let ys = scaler.transform_y(y);
    let val_s = match val {
        Some((xv, yv)) => Some((scaler.transform_x(xv)?, scaler.transform_y(yv))),
        None => None,
    };
    let mut model = MlpModel::init(arch.clone(), cfg.seed, cfg.init)?;
    descend(
        &mut model,
        Descent {
            x: &xs,
            y: &ys,
            val: val_s.as_ref().map(|(a, b)| (a, b)),
            lr: cfg.learning_rate,
            batch_size: cfg.batch_size,
            max_epochs: cfg.max_epochs,
            patience: val_s.as_ref().map(|_| cfg.patience),
            frozen: 0,
            seed: cfg.seed,
        },
    )?;
    model.scaler = Some(scaler);
    Ok(model)
}

/// Continues training on target data only, keeping the first
/// `cfg.freeze_layers` layers fixed and the model's own scalers.
pub fn fine_tune(model: &MlpModel, x: &DMatrix<f64>, y: &DVector<f64>, cfg: &FineTuneConfig) -> Result<MlpModel> {
    if cfg.freeze_layers >= model.layers.len() {
        return Err(Error::invalid(format!(
            "cannot freeze {} of {} layers",
            cfg.freeze_layers,
            model.layers.len()
        )));
    }
    if x.nrows() == 0 || y.len() != x.nrows() {
        return Err(Error::invalid("fine-tuning needs nonempty target data"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("learning_rate must be > 0".into()));
    }
    let mut out = model.clone();
    let (xs, ys) = match &model.scaler {
        Some(s) => (s.transform_x(x)?, s.transform_y(y)),
        None => (x.clone(), y.clone()),
    };
    descend(
        &mut out,
        Descent {
            x: &xs,
            y: &ys,
            val: None,
            lr: cfg.learning_rate,
            batch_size: cfg.batch_size,
            max_epochs: cfg.max_epochs,
            patience: None,
            frozen: cfg.freeze_layers,
            seed: cfg.seed,
        },
    )?;
    Ok(out)
}
