//! Loss, reverse-mode gradients and the mini-batch SGD loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Layer, MlpModel, ModelError, Normalization, Optimizer, Regularization, TrainingMetadata, LAYER_COUNT};
use crate::dataset::Dataset;
use crate::episodes::{FEATURE_COUNT, FEATURE_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of episodes held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 400, learning_rate: 3e-4, batch_size: 64, seed: 0, validation_fraction: 0.1 }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfigFile {
    format_version: u32,
    #[serde(flatten)]
    config: TrainConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(ModelError::Config(format!(
                "validation fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    /// Parses a TOML training config. `format_version = 1` is required;
    /// omitted fields keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let file: TrainConfigFile = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        if file.format_version != 1 {
            return Err(ModelError::Config(format!("unsupported format_version {}", file.format_version)));
        }
        file.config.validate()?;
        Ok(file.config)
    }

    pub fn to_toml(&self) -> String {
        format!(
            "format_version = 1\nepochs = {}\nlearning_rate = {:?}\nbatch_size = {}\nseed = {}\nvalidation_fraction = {:?}\n",
            self.epochs, self.learning_rate, self.batch_size, self.seed, self.validation_fraction
        )
    }
}

/// Per-epoch history of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean normalized training loss over each epoch's mini-batches,
    /// measured before each batch's update.
    pub epoch_losses: Vec<f64>,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    /// Validation MSE of always predicting the training label mean.
    pub validation_baseline_mse: f64,
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self { layers: model.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }
}

/// Mean squared difference.
pub fn mse_loss(predictions: &[f64], labels: &[f64]) -> Result<f64, ModelError> {
    if predictions.len() != labels.len() {
        return Err(ModelError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(ModelError::Empty("batch"));
    }
    let sum: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / predictions.len() as f64)
}

/// Loss of the raw network on normalized inputs and targets.
pub fn batch_loss(model: &MlpModel, inputs: &[[f64; FEATURE_COUNT]], targets: &[f64]) -> Result<f64, ModelError> {
    if inputs.len() != targets.len() {
        return Err(ModelError::LengthMismatch(inputs.len(), targets.len()));
    }
    let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
    mse_loss(&model.forward_normalized(&flat, inputs.len()), targets)
}

/// Batch loss and its exact gradient with respect to every parameter, for
/// normalized inputs and targets.
pub fn backward(
    model: &MlpModel,
    inputs: &[[f64; FEATURE_COUNT]],
    targets: &[f64],
) -> Result<(f64, Gradients), ModelError> {
    if inputs.len() != targets.len() {
        return Err(ModelError::LengthMismatch(inputs.len(), targets.len()));
    }
    if inputs.is_empty() {
        return Err(ModelError::Empty("batch"));
    }
    let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
    let mut work = Workspace::new(model, inputs.len());
    let mut grads = Gradients::zeros_like(model);
    let loss = work.run(model, &flat, targets, &mut grads);
    Ok((loss, grads))
}

/// Activation and delta buffers reused across batches.
struct Workspace {
    activations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(model: &MlpModel, rows: usize) -> Self {
        let mut activations = vec![vec![0.0; rows * model.layers[0].inputs]];
        activations.extend(model.layers.iter().map(|l| vec![0.0; rows * l.outputs]));
        let deltas = model.layers.iter().map(|l| vec![0.0; rows * l.outputs]).collect();
        Self { activations, deltas }
    }

    /// Forward and backward pass over `rows = targets.len()` samples;
    /// writes gradients into `grads` and returns the loss.
    fn run(&mut self, model: &MlpModel, input: &[f64], targets: &[f64], grads: &mut Gradients) -> f64 {
        let rows = targets.len();
        let last = LAYER_COUNT - 1;
        self.activations[0][..input.len()].copy_from_slice(input);
        for (l, layer) in model.layers.iter().enumerate() {
            let (before, after) = self.activations.split_at_mut(l + 1);
            let src = &before[l][..rows * layer.inputs];
            let dst = &mut after[0][..rows * layer.outputs];
            layer.apply(src, rows, dst);
            if l < last {
                dst.iter_mut().for_each(|v| *v = v.tanh());
            }
        }

        let output = &self.activations[LAYER_COUNT][..rows];
        let mut loss = 0.0;
        let scale = 2.0 / rows as f64;
        for ((d, &p), &y) in self.deltas[last][..rows].iter_mut().zip(output).zip(targets) {
            loss += (p - y) * (p - y);
            *d = scale * (p - y);
        }
        loss /= rows as f64;

        for l in (0..LAYER_COUNT).rev() {
            let layer = &model.layers[l];
            let (n_in, n_out) = (layer.inputs, layer.outputs);
            let delta = &self.deltas[l][..rows * n_out];
            let input = &self.activations[l][..rows * n_in];
            let grad = &mut grads.layers[l];
            // dW = deltaᵀ · input
            // SAFETY: buffer lengths match the dimensions and strides passed.
            unsafe {
                matrixmultiply::dgemm(
                    n_out,
                    rows,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    1,
                    n_out as isize,
                    input.as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    grad.weights.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            grad.biases.iter_mut().for_each(|b| *b = 0.0);
            for row in delta.chunks_exact(n_out) {
                grad.biases.iter_mut().zip(row).for_each(|(b, d)| *b += d);
            }
            if l == 0 {
                break;
            }
            // delta_prev = (delta · W) ⊙ (1 − a²)
            let (lower, upper) = self.deltas.split_at_mut(l);
            let prev = &mut lower[l - 1][..rows * n_in];
            let delta = &upper[0][..rows * n_out];
            // SAFETY: as above.
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    n_out,
                    n_in,
                    1.0,
                    delta.as_ptr(),
                    n_out as isize,
                    1,
                    layer.weights.as_ptr(),
                    n_in as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    n_in as isize,
                    1,
                );
            }
            prev.iter_mut().zip(input).for_each(|(d, a)| *d *= 1.0 - a * a);
        }
        loss
    }
}

fn split_episodes(dataset: &Dataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids = dataset.episode_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    ids.shuffle(&mut rng);
    let held_out = if ids.len() < 2 { 0 } else { ((ids.len() as f64 * fraction).round() as usize).clamp(1, ids.len() - 1) };
    let validation: std::collections::HashSet<u64> = ids[..held_out].iter().copied().collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, s) in dataset.samples.iter().enumerate() {
        if validation.contains(&s.episode_id) {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

fn fit_normalization(dataset: &Dataset, rows: &[usize]) -> Result<Normalization, ModelError> {
    let n = rows.len() as f64;
    let mut feature_mean = [0.0; FEATURE_COUNT];
    let mut label_mean = 0.0;
    for &r in rows {
        let s = &dataset.samples[r];
        feature_mean.iter_mut().zip(s.features.0).for_each(|(m, v)| *m += v);
        label_mean += s.label;
    }
    feature_mean.iter_mut().for_each(|m| *m /= n);
    label_mean /= n;
    let mut feature_var = [0.0; FEATURE_COUNT];
    let mut label_var = 0.0;
    for &r in rows {
        let s = &dataset.samples[r];
        for i in 0..FEATURE_COUNT {
            feature_var[i] += (s.features.0[i] - feature_mean[i]).powi(2);
        }
        label_var += (s.label - label_mean).powi(2);
    }
    let mut feature_std = [0.0; FEATURE_COUNT];
    for i in 0..FEATURE_COUNT {
        feature_std[i] = (feature_var[i] / n).sqrt();
        if !(feature_std[i] > 0.0) {
            return Err(ModelError::ZeroVariance(FEATURE_NAMES[i]));
        }
    }
    // A constant label is still learnable; only the scale is arbitrary.
    let label_std = match (label_var / n).sqrt() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    Ok(Normalization { feature_mean, feature_std, label_mean, label_std })
}

fn init_layers(model: &mut MlpModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut model.layers {
        let bound = (1.0 / layer.inputs as f64).sqrt();
        layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-bound..=bound));
        layer.biases.iter_mut().for_each(|b| *b = rng.random_range(-bound..=bound));
    }
}

fn evaluate(model: &MlpModel, inputs: &[[f64; FEATURE_COUNT]], targets: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    if targets.is_empty() {
        return f64::NAN;
    }
    let mut sum = 0.0;
    for (x, y) in inputs.chunks(CHUNK).zip(targets.chunks(CHUNK)) {
        sum += batch_loss(model, x, y).expect("lengths match") * y.len() as f64;
    }
    sum / targets.len() as f64
}

/// Trains a model for the dataset's policy. See [`train_with_progress`].
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<MlpModel, ModelError> {
    train_with_progress(dataset, cfg, |_, _| {}).map(|(model, _)| model)
}

/// Splits the dataset by episode, fits normalization on the training
/// part, then runs `cfg.epochs` epochs of shuffled mini-batch gradient
/// descent. `progress` receives each finished epoch and its mean loss.
pub fn train_with_progress(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut progress: impl FnMut(u32, f64),
) -> Result<(MlpModel, TrainReport), ModelError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(ModelError::Empty("dataset"));
    }
    let (train_rows, val_rows) = split_episodes(dataset, cfg.validation_fraction, cfg.seed);
    let normalization = fit_normalization(dataset, &train_rows)?;

    let mut model = MlpModel::zeros(dataset.policy);
    init_layers(&mut model, cfg.seed);
    model.feature_min = [f64::INFINITY; FEATURE_COUNT];
    model.feature_max = [f64::NEG_INFINITY; FEATURE_COUNT];
    for &r in &train_rows {
        let x = &dataset.samples[r].features.0;
        for i in 0..FEATURE_COUNT {
            model.feature_min[i] = model.feature_min[i].min(x[i]);
            model.feature_max[i] = model.feature_max[i].max(x[i]);
        }
    }

    let prepare = |rows: &[usize]| -> (Vec<[f64; FEATURE_COUNT]>, Vec<f64>) {
        rows.iter()
            .map(|&r| {
                let s = &dataset.samples[r];
                (normalization.normalize_features(&s.features), normalization.normalize_label(s.label))
            })
            .unzip()
    };
    let (train_x, train_y) = prepare(&train_rows);
    let (val_x, val_y) = prepare(&val_rows);
    model.normalization = normalization;

    let mut order: Vec<usize> = (0..train_y.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(2);
    let mut work = Workspace::new(&model, cfg.batch_size);
    let mut grads = Gradients::zeros_like(&model);
    let mut batch_x = Vec::with_capacity(cfg.batch_size * FEATURE_COUNT);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs as usize);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in batch {
                batch_x.extend_from_slice(&train_x[i]);
                batch_y.push(train_y[i]);
            }
            let loss = work.run(&model, &batch_x, &batch_y, &mut grads);
            loss_sum += loss * batch.len() as f64;
            for (layer, grad) in model.layers.iter_mut().zip(&grads.layers) {
                layer.weights.iter_mut().zip(&grad.weights).for_each(|(w, g)| *w -= cfg.learning_rate * g);
                layer.biases.iter_mut().zip(&grad.biases).for_each(|(b, g)| *b -= cfg.learning_rate * g);
            }
        }
        let epoch_loss = loss_sum / order.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(ModelError::NonFinite("training loss"));
        }
        epoch_losses.push(epoch_loss);
        progress(epoch + 1, epoch_loss);
    }
    model.validate()?;

    let train_mse = evaluate(&model, &train_x, &train_y);
    let validation_mse = evaluate(&model, &val_x, &val_y);
    let baseline_target = model.normalization.normalize_label(model.normalization.label_mean);
    let validation_baseline_mse =
        if val_y.is_empty() { f64::NAN } else { val_y.iter().map(|y| (y - baseline_target).powi(2)).sum::<f64>() / val_y.len() as f64 };

    model.metadata = TrainingMetadata {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size as u32,
        seed: cfg.seed,
        validation_fraction: cfg.validation_fraction,
        dataset_hash: dataset.content_hash(),
        train_mse,
        validation_mse,
        optimizer: Optimizer::Sgd,
        regularization: Regularization::None,
    };
    let report = TrainReport {
        epoch_losses,
        train_samples: train_y.len(),
        validation_samples: val_y.len(),
        train_mse,
        validation_mse,
        validation_baseline_mse,
    };
    Ok((model, report))
}
