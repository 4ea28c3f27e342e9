//! Per-policy miss-distance surrogate: a fully connected network
//! 10 → 128 → 256 → 256 → 64 → 1 with tanh on every hidden layer and a
//! linear output, plus the z-score statistics it was trained with.
//!
//! All dense products go through `matrixmultiply`, for single samples as
//! well as batches, so a batched evaluation returns exactly the values
//! that per-sample [`MlpModel::forward`] calls would.

mod io;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episodes::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use crate::flightdyn::PolicyId;

pub use io::{load_manifest, parse_manifest, save_manifest, ModelSet, MODEL_MAGIC, MODEL_VERSION};
pub use train::{backward, batch_loss, mse_loss, train, train_with_progress, Gradients, TrainConfig, TrainReport};

/// Layer widths from input to output.
pub const LAYER_DIMS: [usize; 6] = [FEATURE_COUNT, 128, 256, 256, 64, 1];
pub const LAYER_COUNT: usize = LAYER_DIMS.len() - 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("model shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid policy index {0}")]
    BadPolicy(u32),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("feature `{0}` has zero variance in the training split")]
    ZeroVariance(&'static str),
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model set incomplete: no model for policy {0}")]
    IncompleteSet(PolicyId),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("model file {path}: {source}")]
    File { path: String, source: Box<ModelError> },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense layer; `weights` is row-major `[outputs][inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    /// `output = input · Wᵀ + b` for `rows` row-major input rows.
    fn apply(&self, input: &[f64], rows: usize, output: &mut [f64]) {
        debug_assert_eq!(input.len(), rows * self.inputs);
        debug_assert_eq!(output.len(), rows * self.outputs);
        for row in output.chunks_exact_mut(self.outputs) {
            row.copy_from_slice(&self.biases);
        }
        // SAFETY: slice lengths match the dimensions and strides passed.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                self.inputs,
                self.outputs,
                1.0,
                input.as_ptr(),
                self.inputs as isize,
                1,
                self.weights.as_ptr(),
                1,
                self.inputs as isize,
                1.0,
                output.as_mut_ptr(),
                self.outputs as isize,
                1,
            );
        }
    }
}

/// Z-score statistics for the ten features and the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_mean: [f64; FEATURE_COUNT],
    pub feature_std: [f64; FEATURE_COUNT],
    pub label_mean: f64,
    pub label_std: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self { feature_mean: [0.0; FEATURE_COUNT], feature_std: [1.0; FEATURE_COUNT], label_mean: 0.0, label_std: 1.0 }
    }

    pub fn normalize_features(&self, x: &FeatureVector) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|i| (x.0[i] - self.feature_mean[i]) / self.feature_std[i])
    }

    pub fn denormalize_features(&self, z: &[f64; FEATURE_COUNT]) -> FeatureVector {
        FeatureVector(std::array::from_fn(|i| z[i] * self.feature_std[i] + self.feature_mean[i]))
    }

    pub fn normalize_label(&self, y: f64) -> f64 {
        (y - self.label_mean) / self.label_std
    }

    pub fn denormalize_label(&self, z: f64) -> f64 {
        z * self.label_std + self.label_mean
    }

    fn validate(&self) -> Result<(), ModelError> {
        for (i, (&m, &s)) in self.feature_mean.iter().zip(&self.feature_std).enumerate() {
            if !m.is_finite() || !s.is_finite() {
                return Err(ModelError::NonFinite("normalization statistics"));
            }
            if s <= 0.0 {
                return Err(ModelError::ZeroVariance(FEATURE_NAMES[i]));
            }
        }
        if !(self.label_mean.is_finite() && self.label_std.is_finite() && self.label_std > 0.0) {
            return Err(ModelError::NonFinite("label statistics"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    /// Plain mini-batch gradient descent, no momentum.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularization {
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: u32,
    pub seed: u64,
    pub validation_fraction: f64,
    pub dataset_hash: [u8; 32],
    pub train_mse: f64,
    /// NaN when the dataset had too few episodes for a validation split.
    pub validation_mse: f64,
    pub optimizer: Optimizer,
    pub regularization: Regularization,
}

impl Default for TrainingMetadata {
    fn default() -> Self {
        Self {
            epochs: 0,
            learning_rate: 0.0,
            batch_size: 0,
            seed: 0,
            validation_fraction: 0.0,
            dataset_hash: [0; 32],
            train_mse: f64::NAN,
            validation_mse: f64::NAN,
            optimizer: Optimizer::Sgd,
            regularization: Regularization::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub policy: PolicyId,
    pub layers: Vec<Layer>,
    pub normalization: Normalization,
    /// Per-feature minimum seen in the training split.
    pub feature_min: [f64; FEATURE_COUNT],
    /// Per-feature maximum seen in the training split.
    pub feature_max: [f64; FEATURE_COUNT],
    pub metadata: TrainingMetadata,
}

impl MlpModel {
    /// All-zero parameters with identity normalization.
    pub fn zeros(policy: PolicyId) -> Self {
        Self {
            policy,
            layers: LAYER_DIMS.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            normalization: Normalization::identity(),
            feature_min: [f64::NEG_INFINITY; FEATURE_COUNT],
            feature_max: [f64::INFINITY; FEATURE_COUNT],
            metadata: TrainingMetadata::default(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Checks the layer shapes and that every parameter is finite.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.len() != LAYER_COUNT {
            return Err(ModelError::ShapeMismatch(format!("{} layers, expected {LAYER_COUNT}", self.layers.len())));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (inputs, outputs) = (LAYER_DIMS[i], LAYER_DIMS[i + 1]);
            if layer.inputs != inputs
                || layer.outputs != outputs
                || layer.weights.len() != inputs * outputs
                || layer.biases.len() != outputs
            {
                return Err(ModelError::ShapeMismatch(format!(
                    "layer {} is {}x{}, expected {inputs}x{outputs}",
                    i + 1,
                    layer.inputs,
                    layer.outputs
                )));
            }
            if !layer.weights.iter().chain(&layer.biases).all(|v| v.is_finite()) {
                return Err(ModelError::NonFinite("parameters"));
            }
        }
        self.normalization.validate()
    }

    /// Raw network output in normalized label space for already normalized
    /// input rows.
    pub(crate) fn forward_normalized(&self, input: &[f64], rows: usize) -> Vec<f64> {
        let mut current = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; rows * layer.outputs];
            layer.apply(&current, rows, &mut next);
            if i + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            current = next;
        }
        current
    }

    /// Predicted miss distance in meters for one observation. Negative
    /// network outputs are clamped to 0.
    pub fn forward(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        Ok(self.forward_batch(std::slice::from_ref(x))?[0])
    }

    /// Predicted miss distances for many observations.
    pub fn forward_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>, ModelError> {
        if !xs.iter().all(|x| x.is_finite()) {
            return Err(ModelError::NonFinite("input features"));
        }
        let input: Vec<f64> = xs.iter().flat_map(|x| self.normalization.normalize_features(x)).collect();
        Ok(self
            .forward_normalized(&input, xs.len())
            .into_iter()
            .map(|z| self.normalization.denormalize_label(z).max(0.0))
            .collect())
    }

    /// Indices of features that fall outside the range seen in training.
    pub fn out_of_range_features(&self, x: &FeatureVector) -> impl Iterator<Item = usize> + '_ {
        let values = x.0;
        (0..FEATURE_COUNT).filter(move |&i| values[i] < self.feature_min[i] || values[i] > self.feature_max[i])
    }

    /// Copy of `x` with every feature clamped into the training range.
    pub fn clamp_to_training_range(&self, x: &FeatureVector) -> FeatureVector {
        FeatureVector(std::array::from_fn(|i| x.0[i].clamp(self.feature_min[i], self.feature_max[i])))
    }
}
