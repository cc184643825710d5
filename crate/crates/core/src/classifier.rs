//! Per-voxel foreground classifier: a fully connected ReLU network with a
//! sigmoid output, trained with binary cross-entropy and Adam.
//!
//! Inputs are standardized with per-feature mean and standard deviation
//! estimated from the training samples; both are stored in the model.
//! Weights are initialized as `U(−1/√fan_in, 1/√fan_in)` from a ChaCha8
//! stream seeded by the model seed, biases start at zero.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVolume;
use crate::volume::format::Reader;

pub const HIDDEN_WIDTH: usize = 128;
const PROB_FLOOR: f64 = 1e-15;
const PREDICT_CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data needs both classes (fg {fg}, bg {bg})")]
    SingleClass { fg: usize, bg: usize },
    #[error("feature width {got}, model expects {expected}")]
    WidthMismatch { got: usize, expected: usize },
    #[error("{samples} samples but {labels} labels")]
    LabelCount { samples: usize, labels: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model checkpoint: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            batch_size: 1024,
            validation_fraction: 0.1,
            patience: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::Config(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("Adam parameters out of range");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    /// `[C, hidden…, 1]`.
    pub widths: Vec<usize>,
    /// Layer `l` maps width `l` to width `l+1`; shape `(in, out)`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub mean: Array1<f64>,
    /// Reciprocal standard deviation per input feature.
    pub inv_std: Array1<f64>,
    pub seed: u64,
}

/// `[C, 128, 128, 1]` network.
pub fn init_model(c: usize, seed: u64) -> MlpModel {
    MlpModel::with_widths(&[c, HIDDEN_WIDTH, HIDDEN_WIDTH, 1], seed)
}

impl MlpModel {
    pub fn with_widths(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w >= 1));
        assert_eq!(*widths.last().unwrap(), 1, "output width must be 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)));
            biases.push(Array1::zeros(w[1]));
        }
        Self {
            widths: widths.to_vec(),
            weights,
            biases,
            mean: Array1::zeros(widths[0]),
            inv_std: Array1::ones(widths[0]),
            seed,
        }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters in a fixed flat order: per layer, weights (row-major)
    /// then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().chain(b.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
    }

    /// Sets per-feature standardization from sample statistics. Features
    /// with (near) zero spread keep unit scale.
    pub fn fit_standardization(&mut self, x: ArrayView2<'_, f64>) {
        let n = x.nrows() as f64;
        self.mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        self.inv_std = Array1::from_shape_fn(x.ncols(), |j| {
            let m = self.mean[j];
            let sd = (x.column(j).iter().map(|&a| (a - m) * (a - m)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 {
                1.0 / sd
            } else {
                1.0
            }
        });
    }

    fn standardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        z -= &self.mean;
        z *= &self.inv_std;
        z
    }

    /// Post-ReLU activations of every hidden layer (the standardized input
    /// first) and the output logits, for a batch of raw inputs.
    fn forward(&self, x: ArrayView2<'_, f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let mut acts = vec![self.standardize(x)];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = acts[l].dot(w) + b;
            if l == last {
                return (acts, z);
            }
            acts.push(z.mapv(|v| v.max(0.0)));
        }
        unreachable!()
    }

    /// Output logits for a batch.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ClassifierError> {
        self.check_width(x.ncols())?;
        Ok(self.forward(x).1.column(0).to_owned())
    }

    fn check_width(&self, got: usize) -> Result<(), ClassifierError> {
        if got != self.input_width() {
            return Err(ClassifierError::WidthMismatch {
                got,
                expected: self.input_width(),
            });
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Mean binary cross-entropy of the model on `(x, y)`.
pub fn bce_loss(model: &MlpModel, x: ArrayView2<'_, f64>, y: &[bool]) -> Result<f64, ClassifierError> {
    check_labels(x.nrows(), y)?;
    let z = model.logits(x)?;
    Ok(z.iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - if t { z } else { 0.0 })
        .sum::<f64>()
        / y.len() as f64)
}

fn check_labels(samples: usize, y: &[bool]) -> Result<(), ClassifierError> {
    if samples != y.len() {
        return Err(ClassifierError::LabelCount { samples, labels: y.len() });
    }
    Ok(())
}

/// Gradient of [`bce_loss`] with respect to [`MlpModel::params`], same order.
pub fn bce_gradient(model: &MlpModel, x: ArrayView2<'_, f64>, y: &[bool]) -> Result<Vec<f64>, ClassifierError> {
    check_labels(x.nrows(), y)?;
    model.check_width(x.ncols())?;
    let (gw, gb) = backprop(model, x, y);
    let mut out = Vec::with_capacity(model.num_params());
    for (w, b) in gw.iter().zip(&gb) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    Ok(out)
}

fn backprop(model: &MlpModel, x: ArrayView2<'_, f64>, y: &[bool]) -> (Vec<Array2<f64>>, Vec<Array1<f64>>) {
    let n = x.nrows() as f64;
    let (acts, z) = model.forward(x);
    let mut delta = Array2::from_shape_fn((z.nrows(), 1), |(i, _)| {
        (sigmoid(z[[i, 0]]) - if y[i] { 1.0 } else { 0.0 }) / n
    });
    let layers = model.weights.len();
    let mut gw = vec![Array2::zeros((0, 0)); layers];
    let mut gb = vec![Array1::zeros(0); layers];
    for l in (0..layers).rev() {
        gw[l] = acts[l].t().dot(&delta);
        gb[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&model.weights[l].t());
            // ReLU derivative: acts[l] is relu(pre), positive exactly where pre > 0.
            back.zip_mut_with(&acts[l], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = back;
        }
    }
    (gw, gb)
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        Self {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, gw: &[Array2<f64>], gb: &[Array1<f64>], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        };
        for l in 0..model.weights.len() {
            ndarray::Zip::from(&mut model.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .and(&gw[l])
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            ndarray::Zip::from(&mut model.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .and(&gb[l])
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    /// Validation BCE per epoch of the model-selection run.
    pub validation: Vec<f64>,
    /// Epoch count picked by early stopping (or the configured maximum).
    pub selected_epochs: usize,
    /// Full-data BCE at the end of every epoch of the final run.
    pub loss: Vec<f64>,
}

fn select_rows(x: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Runs `epochs` epochs of shuffled mini-batch Adam. After every epoch the
/// callback receives the model and may stop training by returning `false`.
fn run_epochs(
    model: &mut MlpModel,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    cfg: &TrainConfig,
    epochs: usize,
    mut after_epoch: impl FnMut(&MlpModel) -> bool,
) {
    let mut adam = Adam::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00_0000);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = select_rows(x, batch);
            let yb: Vec<bool> = batch.iter().map(|&i| y[i]).collect();
            let (gw, gb) = backprop(model, xb.view(), &yb);
            adam.update(model, &gw, &gb, cfg);
        }
        if !after_epoch(model) {
            break;
        }
    }
}

/// Stratified hold-out: about `fraction` of each class, at least one sample
/// per class when the class has two or more.
fn stratified_split(y: &[bool], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7370_6c69_7400_0000);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = if idx.len() >= 2 {
            ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains `model` (used as the initialization) on raw features `x`.
///
/// A stratified validation split picks the epoch count by early stopping on
/// validation BCE; the final model is then retrained from the same
/// initialization on all samples for that many epochs.
pub fn train(
    model: &MlpModel,
    x: ArrayView2<'_, f64>,
    y: &[bool],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainHistory), ClassifierError> {
    cfg.validate()?;
    check_labels(x.nrows(), y)?;
    model.check_width(x.ncols())?;
    let fg = y.iter().filter(|&&t| t).count();
    let bg = y.len() - fg;
    if fg == 0 || bg == 0 {
        return Err(ClassifierError::SingleClass { fg, bg });
    }

    let mut history = TrainHistory::default();
    let (train_idx, val_idx) = stratified_split(y, cfg.validation_fraction, cfg.seed);
    let has_both = |idx: &[usize]| idx.iter().any(|&i| y[i]) && idx.iter().any(|&i| !y[i]);
    history.selected_epochs = if has_both(&val_idx) && has_both(&train_idx) {
        let xt = select_rows(x, &train_idx);
        let yt: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
        let xv = select_rows(x, &val_idx);
        let yv: Vec<bool> = val_idx.iter().map(|&i| y[i]).collect();
        let mut m = model.clone();
        m.fit_standardization(xt.view());
        let mut best = (f64::INFINITY, 0usize);
        let mut epoch = 0;
        run_epochs(&mut m, xt.view(), &yt, cfg, cfg.epochs, |m| {
            epoch += 1;
            let loss = bce_loss(m, xv.view(), &yv).expect("shapes checked");
            history.validation.push(loss);
            if loss < best.0 {
                best = (loss, epoch);
            }
            epoch - best.1 < cfg.patience
        });
        best.1.max(1)
    } else {
        cfg.epochs
    };

    let mut m = model.clone();
    m.fit_standardization(x);
    run_epochs(&mut m, x, y, cfg, history.selected_epochs, |m| {
        history.loss.push(bce_loss(m, x, y).expect("shapes checked"));
        true
    });
    Ok((m, history))
}

/// Foreground probability of one raw feature vector.
pub fn predict(model: &MlpModel, v: &[f64]) -> Result<f64, ClassifierError> {
    let x = ArrayView2::from_shape((1, v.len()), v).expect("contiguous row");
    Ok(clamp_prob(sigmoid(model.logits(x)?[0])))
}

/// Probabilities for a batch of raw feature rows.
pub fn predict_batch(model: &MlpModel, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, ClassifierError> {
    Ok(model.logits(x)?.iter().map(|&z| clamp_prob(sigmoid(z))).collect())
}

/// Probability for every voxel of a feature volume.
pub fn predict_volume(model: &MlpModel, fv: &FeatureVolume) -> Result<Vec<f64>, ClassifierError> {
    let c = fv.channels();
    model.check_width(c)?;
    let chunks: Vec<Vec<f64>> = fv
        .data
        .par_chunks(PREDICT_CHUNK * c)
        .map(|chunk| {
            let rows = chunk.len() / c;
            let x = Array2::from_shape_fn((rows, c), |(i, j)| chunk[i * c + j] as f64);
            predict_batch(model, x.view()).expect("width checked")
        })
        .collect();
    Ok(chunks.concat())
}

/// Gathers raw feature rows of the given voxels as an `n × C` matrix.
pub fn feature_rows(fv: &FeatureVolume, voxels: &[usize]) -> Array2<f64> {
    let c = fv.channels();
    Array2::from_shape_fn((voxels.len(), c), |(i, j)| fv.voxel(voxels[i])[j] as f64)
}

const MODEL_MAGIC: &[u8; 8] = b"VXSELMLP";
const MODEL_VERSION: u32 = 1;

/// Checkpoint: magic, version, layer count and widths (u32), seed (u64),
/// training config echo (lr, β₁, β₂, ε, validation fraction as f64; epochs,
/// batch, patience as u32; config seed u64), then f32 standardization mean
/// and reciprocal std, then per layer f32 weights (row-major) and biases.
pub fn model_to_bytes(model: &MlpModel, cfg: &TrainConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.widths.len() as u32).to_le_bytes());
    for &w in &model.widths {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.seed.to_le_bytes());
    for v in [cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.validation_fraction] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [cfg.epochs, cfg.batch_size, cfg.patience] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    let floats = model
        .mean
        .iter()
        .chain(model.inv_std.iter())
        .chain(model.weights.iter().zip(&model.biases).flat_map(|(w, b)| w.iter().chain(b.iter())));
    for &v in floats {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn model_from_bytes(buf: &[u8]) -> Result<(MlpModel, TrainConfig), ClassifierError> {
    let fmt = |e: crate::volume::VolumeError| ClassifierError::Format(e.to_string());
    let mut r = Reader::new(buf);
    if r.take(8).map_err(fmt)? != MODEL_MAGIC {
        return Err(ClassifierError::Format("bad magic".into()));
    }
    if r.u32().map_err(fmt)? != MODEL_VERSION {
        return Err(ClassifierError::Format("unsupported version".into()));
    }
    let layers = r.u32().map_err(fmt)? as usize;
    if !(2..=16).contains(&layers) {
        return Err(ClassifierError::Format(format!("{layers} widths")));
    }
    let widths = (0..layers)
        .map(|_| r.u32().map(|w| w as usize))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fmt)?;
    if widths.iter().any(|&w| w == 0) || widths[layers - 1] != 1 {
        return Err(ClassifierError::Format("invalid layer widths".into()));
    }
    let seed = r.u64().map_err(fmt)?;
    let mut f = [0.0; 5];
    for v in f.iter_mut() {
        *v = r.f64().map_err(fmt)?;
    }
    let mut u = [0usize; 3];
    for v in u.iter_mut() {
        *v = r.u32().map_err(fmt)? as usize;
    }
    let cfg = TrainConfig {
        learning_rate: f[0],
        beta1: f[1],
        beta2: f[2],
        epsilon: f[3],
        validation_fraction: f[4],
        epochs: u[0],
        batch_size: u[1],
        patience: u[2],
        seed: r.u64().map_err(fmt)?,
    };
    let mut model = MlpModel::with_widths(&widths, seed);
    let c = widths[0];
    let n = 2 * c + model.num_params();
    let vals: Vec<f64> = r.f32_vec(n).map_err(fmt)?.into_iter().map(f64::from).collect();
    r.finish().map_err(fmt)?;
    model.mean = Array1::from(vals[..c].to_vec());
    model.inv_std = Array1::from(vals[c..2 * c].to_vec());
    model.set_params(&vals[2 * c..]);
    Ok((model, cfg))
}

/// Area under the ROC curve of `scores` for binary `labels` (ties count 1/2).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut acc = 0.0;
    for &p in &pos {
        for &q in &neg {
            acc += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    acc / (pos.len() * neg.len()) as f64
}
