//! Binary dataset files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic            4 bytes  "BVRD"
//! format version   u32      1
//! policy index     u32      0..8, clockwise from North
//! sample count     u64
//! episode count    u64
//! master seed      u64
//! aircraft hash    32 bytes SHA-256 of the canonical aircraft constants
//! missile hash     32 bytes SHA-256 of the canonical missile constants
//! rows             sample count × (12 × f64 + u64)
//! ```
//!
//! Each row holds the ten features in [`FEATURE_NAMES`] order, the label,
//! the sample time and the episode id.
//!
//! [`FEATURE_NAMES`]: crate::episodes::FEATURE_NAMES

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constants::ConstantsHash;
use crate::episodes::{FeatureVector, LabeledSample, FEATURE_COUNT};
use crate::flightdyn::PolicyId;

pub const DATASET_MAGIC: [u8; 4] = *b"BVRD";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 8 + 32 + 32;
pub const ROW_LEN: usize = (FEATURE_COUNT + 2) * 8 + 8;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("invalid policy index {0}")]
    BadPolicy(u32),
    #[error("truncated dataset: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after {0} rows")]
    TrailingBytes(u64),
    #[error("non-finite value in row {0}")]
    NonFinite(u64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub policy: PolicyId,
    pub seed: u64,
    pub episode_count: u64,
    pub aircraft_hash: ConstantsHash,
    pub missile_hash: ConstantsHash,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + ROW_LEN * self.samples.len());
        out.extend_from_slice(&DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.policy.index() as u32).to_le_bytes());
        out.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.episode_count.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.aircraft_hash);
        out.extend_from_slice(&self.missile_hash);
        for s in &self.samples {
            for v in s.features.0 {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&s.label.to_le_bytes());
            out.extend_from_slice(&s.t.to_le_bytes());
            out.extend_from_slice(&s.episode_id.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        if bytes.len() < 4 || bytes[..4] != DATASET_MAGIC {
            return Err(DatasetError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(DatasetError::Truncated { expected: HEADER_LEN, found: bytes.len() });
        }
        let mut cursor = Cursor { bytes, pos: 4 };
        let version = cursor.u32();
        if version != DATASET_VERSION {
            return Err(DatasetError::Version(version));
        }
        let policy_index = cursor.u32();
        let policy = PolicyId::from_index(policy_index as usize).ok_or(DatasetError::BadPolicy(policy_index))?;
        let count = cursor.u64();
        let episode_count = cursor.u64();
        let seed = cursor.u64();
        let aircraft_hash = cursor.hash();
        let missile_hash = cursor.hash();

        let expected = (count as usize)
            .checked_mul(ROW_LEN)
            .and_then(|rows| rows.checked_add(HEADER_LEN))
            .ok_or(DatasetError::Truncated { expected: usize::MAX, found: bytes.len() })?;
        if bytes.len() < expected {
            return Err(DatasetError::Truncated { expected, found: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(DatasetError::TrailingBytes(count));
        }
        let mut samples = Vec::with_capacity(count as usize);
        for row in 0..count {
            let features = FeatureVector(std::array::from_fn(|_| cursor.f64()));
            let label = cursor.f64();
            let t = cursor.f64();
            let episode_id = cursor.u64();
            if !(features.is_finite() && label.is_finite() && t.is_finite()) {
                return Err(DatasetError::NonFinite(row));
            }
            samples.push(LabeledSample { features, label, episode_id, t });
        }
        Ok(Dataset { policy, seed, episode_count, aircraft_hash, missile_hash, samples })
    }

    pub fn write_to(&self, mut writer: impl Write) -> Result<(), DatasetError> {
        writer.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut reader: impl Read) -> Result<Self, DatasetError> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the serialized file, recorded in trained model metadata.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }

    /// Distinct episode ids in first-seen order.
    pub fn episode_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = Vec::new();
        for s in &self.samples {
            if ids.last() != Some(&s.episode_id) && !ids.contains(&s.episode_id) {
                ids.push(s.episode_id);
            }
        }
        ids
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }

    fn hash(&mut self) -> [u8; 32] {
        self.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(episode_id: u64, label: f64) -> LabeledSample {
        LabeledSample {
            features: FeatureVector(std::array::from_fn(|i| i as f64 * 1.5 - 3.0)),
            label,
            episode_id,
            t: 2.0,
        }
    }

    fn dataset(samples: Vec<LabeledSample>) -> Dataset {
        Dataset {
            policy: PolicyId::SE,
            seed: 42,
            episode_count: 2,
            aircraft_hash: [7; 32],
            missile_hash: [9; 32],
            samples,
        }
    }

    #[test]
    fn round_trip() {
        let d = dataset(vec![sample(0, 0.0), sample(1, 1234.5)]);
        assert_eq!(Dataset::from_bytes(&d.to_bytes()).unwrap(), d);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let d = dataset(vec![]);
        let bytes = d.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let d = dataset(vec![sample(0, 5.0)]);
        let mut bytes = d.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bytes), Err(DatasetError::BadMagic)));

        let mut bytes = d.to_bytes();
        bytes[4] = 7;
        assert!(matches!(Dataset::from_bytes(&bytes), Err(DatasetError::Version(7))));

        let bytes = d.to_bytes();
        assert!(matches!(Dataset::from_bytes(&bytes[..bytes.len() - 1]), Err(DatasetError::Truncated { .. })));

        let mut bad = dataset(vec![sample(0, 5.0)]);
        bad.samples[0].label = f64::NAN;
        assert!(matches!(Dataset::from_bytes(&bad.to_bytes()), Err(DatasetError::NonFinite(0))));
    }

    #[test]
    fn episode_ids_in_order() {
        let d = dataset(vec![sample(3, 0.0), sample(3, 0.0), sample(1, 0.0), sample(3, 0.0)]);
        assert_eq!(d.episode_ids(), vec![3, 1]);
    }
}
