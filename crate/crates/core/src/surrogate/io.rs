//! Model files and model-set manifests.
//!
//! Model file layout, all integers and floats little-endian:
//!
//! ```text
//! magic               4 bytes  "BVRM"
//! format version      u32      1
//! policy index        u32
//! dimension count     u32      6
//! layer dimensions    u32 × 6  10 128 256 256 64 1
//! feature mean        f64 × 10
//! feature std         f64 × 10
//! label mean, std     f64 × 2
//! feature min, max    f64 × 10, f64 × 10   training-split range
//! weights             per layer, row-major [outputs][inputs]
//! biases              per layer
//! metadata            epochs u32, learning rate f64, batch size u32,
//!                     seed u64, validation fraction f64, dataset hash 32 bytes,
//!                     train MSE f64, validation MSE f64,
//!                     optimizer u32 (0 = SGD), regularization u32 (0 = none)
//! ```
//!
//! A manifest is a text file naming one model file per policy, resolved
//! relative to the manifest's directory:
//!
//! ```text
//! format_version = 1
//! N = n.bvrm
//! NE = ne.bvrm
//! ...
//! ```

use std::path::{Path, PathBuf};

use super::{Layer, MlpModel, ModelError, Normalization, Optimizer, Regularization, TrainingMetadata, LAYER_DIMS};
use crate::episodes::FEATURE_COUNT;
use crate::flightdyn::PolicyId;

pub const MODEL_MAGIC: [u8; 4] = *b"BVRM";
pub const MODEL_VERSION: u32 = 1;
const MANIFEST_VERSION: u32 = 1;

impl MlpModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * (self.parameter_count() + 4 * FEATURE_COUNT + 8));
        out.extend_from_slice(&MODEL_MAGIC);
        put_u32(&mut out, MODEL_VERSION);
        put_u32(&mut out, self.policy.index() as u32);
        put_u32(&mut out, LAYER_DIMS.len() as u32);
        let dims = std::iter::once(self.layers.first().map_or(0, |l| l.inputs)).chain(self.layers.iter().map(|l| l.outputs));
        dims.for_each(|d| put_u32(&mut out, d as u32));
        let n = &self.normalization;
        put_f64s(&mut out, &n.feature_mean);
        put_f64s(&mut out, &n.feature_std);
        put_f64s(&mut out, &[n.label_mean, n.label_std]);
        put_f64s(&mut out, &self.feature_min);
        put_f64s(&mut out, &self.feature_max);
        for layer in &self.layers {
            put_f64s(&mut out, &layer.weights);
        }
        for layer in &self.layers {
            put_f64s(&mut out, &layer.biases);
        }
        let m = &self.metadata;
        put_u32(&mut out, m.epochs);
        put_f64s(&mut out, &[m.learning_rate]);
        put_u32(&mut out, m.batch_size);
        out.extend_from_slice(&m.seed.to_le_bytes());
        put_f64s(&mut out, &[m.validation_fraction]);
        out.extend_from_slice(&m.dataset_hash);
        put_f64s(&mut out, &[m.train_mse, m.validation_mse]);
        put_u32(&mut out, match m.optimizer {
            Optimizer::Sgd => 0,
        });
        put_u32(&mut out, match m.regularization {
            Regularization::None => 0,
        });
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 4 || bytes[..4] != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(ModelError::Version(version));
        }
        let policy_index = r.u32()?;
        let policy = PolicyId::from_index(policy_index as usize).ok_or(ModelError::BadPolicy(policy_index))?;
        let dim_count = r.u32()? as usize;
        if dim_count != LAYER_DIMS.len() {
            return Err(ModelError::ShapeMismatch(format!("{dim_count} layer dimensions, expected {}", LAYER_DIMS.len())));
        }
        let mut dims = [0usize; LAYER_DIMS.len()];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        if dims != LAYER_DIMS {
            return Err(ModelError::ShapeMismatch(format!("layer dimensions {dims:?}, expected {LAYER_DIMS:?}")));
        }
        let normalization = Normalization {
            feature_mean: r.f64_array()?,
            feature_std: r.f64_array()?,
            label_mean: r.f64()?,
            label_std: r.f64()?,
        };
        let feature_min = r.f64_array()?;
        let feature_max = r.f64_array()?;
        let mut layers: Vec<Layer> = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        for layer in &mut layers {
            r.f64_into(&mut layer.weights)?;
        }
        for layer in &mut layers {
            r.f64_into(&mut layer.biases)?;
        }
        let metadata = TrainingMetadata {
            epochs: r.u32()?,
            learning_rate: r.f64()?,
            batch_size: r.u32()?,
            seed: r.u64()?,
            validation_fraction: r.f64()?,
            dataset_hash: r.take::<32>()?,
            train_mse: r.f64()?,
            validation_mse: r.f64()?,
            optimizer: match r.u32()? {
                0 => Optimizer::Sgd,
                other => return Err(ModelError::ShapeMismatch(format!("unknown optimizer code {other}"))),
            },
            regularization: match r.u32()? {
                0 => Regularization::None,
                other => return Err(ModelError::ShapeMismatch(format!("unknown regularization code {other}"))),
            },
        };
        if r.pos != bytes.len() {
            return Err(ModelError::ShapeMismatch(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let model = MlpModel { policy, layers, normalization, feature_min, feature_max, metadata };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        let chunk = self.bytes.get(self.pos..self.pos + N).ok_or_else(|| {
            ModelError::ShapeMismatch(format!("file truncated at byte {} of {}", self.bytes.len(), self.pos + N))
        })?;
        self.pos += N;
        Ok(chunk.try_into().expect("slice has length N"))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        self.take().map(f64::from_le_bytes)
    }

    fn f64_array<const N: usize>(&mut self) -> Result<[f64; N], ModelError> {
        let mut out = [0.0; N];
        self.f64_into(&mut out)?;
        Ok(out)
    }

    fn f64_into(&mut self, out: &mut [f64]) -> Result<(), ModelError> {
        for v in out {
            *v = self.f64()?;
        }
        Ok(())
    }
}

/// One trained model per policy, indexed by [`PolicyId::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    models: Vec<MlpModel>,
}

impl ModelSet {
    /// Builds a set from models in any order; each policy must appear
    /// exactly once.
    pub fn new(models: impl IntoIterator<Item = MlpModel>) -> Result<Self, ModelError> {
        let mut slots: Vec<Option<MlpModel>> = vec![None; PolicyId::COUNT];
        for model in models {
            model.validate()?;
            let slot = &mut slots[model.policy.index()];
            if slot.is_some() {
                return Err(ModelError::Manifest { line: 0, message: format!("duplicate model for policy {}", model.policy) });
            }
            *slot = Some(model);
        }
        let models = slots
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or(ModelError::IncompleteSet(PolicyId::from_index(i).expect("index < COUNT"))))
            .collect::<Result<_, _>>()?;
        Ok(Self { models })
    }

    pub fn get(&self, policy: PolicyId) -> &MlpModel {
        &self.models[policy.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (PolicyId, &MlpModel)> {
        PolicyId::ALL.into_iter().zip(&self.models)
    }
}

fn manifest_file_name(policy: PolicyId) -> String {
    format!("{}.bvrm", policy.name().to_ascii_lowercase())
}

/// Writes every model of `set` into `dir` plus a `manifest.txt` naming
/// them; returns the manifest path.
pub fn save_manifest(set: &ModelSet, dir: &Path) -> Result<PathBuf, ModelError> {
    std::fs::create_dir_all(dir)?;
    let mut text = format!("format_version = {MANIFEST_VERSION}\n");
    for (policy, model) in set.iter() {
        let name = manifest_file_name(policy);
        model.save(&dir.join(&name))?;
        text.push_str(&format!("{} = {name}\n", policy.name()));
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Parses a manifest into `(policy, path)` pairs without loading models.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<(PolicyId, PathBuf)>, ModelError> {
    let mut version = None;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ModelError::Manifest { line, message };
        let (key, value) = content.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "format_version" {
            let v: u32 = value.parse().map_err(|_| err(format!("bad format_version `{value}`")))?;
            if v != MANIFEST_VERSION {
                return Err(err(format!("unsupported format_version {v}")));
            }
            version = Some(v);
            continue;
        }
        let policy = PolicyId::from_name(key).ok_or_else(|| err(format!("unknown policy `{key}`")))?;
        if entries.iter().any(|(p, _)| *p == policy) {
            return Err(err(format!("duplicate policy {policy}")));
        }
        entries.push((policy, base.join(value)));
    }
    if version.is_none() {
        return Err(ModelError::Manifest { line: 0, message: "missing format_version".into() });
    }
    if let Some(missing) = PolicyId::ALL.into_iter().find(|p| !entries.iter().any(|(q, _)| q == p)) {
        return Err(ModelError::IncompleteSet(missing));
    }
    Ok(entries)
}

/// Loads the eight models named by the manifest at `path`.
pub fn load_manifest(path: &Path) -> Result<ModelSet, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut models = Vec::with_capacity(PolicyId::COUNT);
    for (policy, file) in parse_manifest(&text, base)? {
        let model = MlpModel::load(&file)
            .map_err(|e| ModelError::File { path: file.display().to_string(), source: Box::new(e) })?;
        if model.policy != policy {
            return Err(ModelError::Manifest {
                line: 0,
                message: format!("{} holds a model for {}, listed as {policy}", file.display(), model.policy),
            });
        }
        models.push(model);
    }
    ModelSet::new(models)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::FeatureVector;
    use crate::surrogate::tests::random_model;

    fn trained_looking(policy: PolicyId, seed: u64) -> MlpModel {
        let mut m = random_model(seed, 1.0);
        m.policy = policy;
        m.feature_min = [-1.0; FEATURE_COUNT];
        m.feature_max = [1.0; FEATURE_COUNT];
        m.metadata.epochs = 7;
        m.metadata.dataset_hash = [3; 32];
        m
    }

    #[test]
    fn round_trip_preserves_forward() {
        let model = trained_looking(PolicyId::SW, 1);
        let back = MlpModel::from_bytes(&model.to_bytes()).unwrap();
        let x = FeatureVector(std::array::from_fn(|i| i as f64 * 3.0 - 7.0));
        assert_eq!(model.forward(&x).unwrap().to_bits(), back.forward(&x).unwrap().to_bits());
        // NaN metadata defeats PartialEq; compare the bytes instead.
        assert_eq!(back.to_bytes(), model.to_bytes());
    }

    #[test]
    fn rejects_corrupted_files() {
        let bytes = trained_looking(PolicyId::N, 2).to_bytes();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(MlpModel::from_bytes(&bad), Err(ModelError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(MlpModel::from_bytes(&bad), Err(ModelError::Version(2))));
        assert!(matches!(MlpModel::from_bytes(&bytes[..bytes.len() - 3]), Err(ModelError::ShapeMismatch(_))));
        assert!(matches!(MlpModel::from_bytes(&bytes[..200]), Err(ModelError::ShapeMismatch(_))));
        let mut bad = bytes.clone();
        bad[16..20].copy_from_slice(&11u32.to_le_bytes());
        assert!(matches!(MlpModel::from_bytes(&bad), Err(ModelError::ShapeMismatch(_))));
        let mut bad = bytes;
        bad.push(0);
        assert!(matches!(MlpModel::from_bytes(&bad), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = ModelSet::new(PolicyId::ALL.into_iter().rev().map(|p| trained_looking(p, p.index() as u64))).unwrap();
        let path = save_manifest(&set, dir.path()).unwrap();
        let loaded = load_manifest(&path).unwrap();
        for ((p, a), (q, b)) in set.iter().zip(loaded.iter()) {
            assert_eq!(p, q);
            assert_eq!(a.to_bytes(), b.to_bytes());
        }
    }

    #[test]
    fn incomplete_sets_are_rejected() {
        let models = PolicyId::ALL.into_iter().filter(|&p| p != PolicyId::S).map(|p| trained_looking(p, 0));
        assert!(matches!(ModelSet::new(models), Err(ModelError::IncompleteSet(PolicyId::S))));
        let text = "format_version = 1\nN = n.bvrm\n";
        assert!(matches!(parse_manifest(text, Path::new(".")), Err(ModelError::IncompleteSet(PolicyId::NE))));
        assert!(matches!(parse_manifest("N = n.bvrm\n", Path::new(".")), Err(ModelError::Manifest { .. })));
        assert!(matches!(parse_manifest("format_version = 1\nQ = q\n", Path::new(".")), Err(ModelError::Manifest { line: 2, .. })));
    }
}
