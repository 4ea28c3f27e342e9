//! Versioned `key = value` constants files.
//!
//! Every tunable dynamics parameter lives in one of these sets. A set is
//! rendered to a canonical text form (fixed key order, shortest round-trip
//! float formatting) and the SHA-256 of that text is the set's provenance
//! hash, recorded in dataset headers. Files may omit keys; omitted keys take
//! their defaults, so the hash always describes the values actually used.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CONSTANTS_FORMAT_VERSION: u32 = 1;

pub type ConstantsHash = [u8; 32];

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}` for constant set `{set}`")]
    UnknownKey { set: &'static str, key: String, line: usize },
    #[error("line {line}: `{key}` is not a finite number")]
    BadValue { key: String, line: usize },
    #[error("file is for constant set `{found}`, expected `{expected}`")]
    WrongSet { expected: &'static str, found: String },
    #[error("unsupported constants format_version {0}")]
    Version(String),
    #[error("invalid constants: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A named group of numeric parameters with a canonical text form.
pub trait ConstantSet: Sized + Default {
    const SET_NAME: &'static str;

    /// `(key, doc)` pairs in canonical order.
    fn keys() -> &'static [(&'static str, &'static str)];
    fn get(&self, key: &str) -> Option<f64>;
    fn set(&mut self, key: &str, value: f64) -> bool;

    /// Checks cross-field invariants after loading.
    fn validate(&self) -> Result<(), ConstantsError> {
        Ok(())
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version = {CONSTANTS_FORMAT_VERSION}");
        let _ = writeln!(out, "set = {}", Self::SET_NAME);
        for (key, doc) in Self::keys() {
            let value = self.get(key).expect("declared key");
            let _ = writeln!(out, "# {doc}");
            let _ = writeln!(out, "{key} = {value:?}");
        }
        out
    }

    fn parse(text: &str) -> Result<Self, ConstantsError> {
        let mut out = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or(ConstantsError::Syntax { line })?;
            match key {
                "format_version" => {
                    if value != CONSTANTS_FORMAT_VERSION.to_string() {
                        return Err(ConstantsError::Version(value.to_string()));
                    }
                }
                "set" => {
                    if value != Self::SET_NAME {
                        return Err(ConstantsError::WrongSet {
                            expected: Self::SET_NAME,
                            found: value.to_string(),
                        });
                    }
                }
                _ => {
                    let parsed: f64 = value
                        .parse()
                        .ok()
                        .filter(|v: &f64| v.is_finite())
                        .ok_or_else(|| ConstantsError::BadValue { key: key.to_string(), line })?;
                    if !out.set(key, parsed) {
                        return Err(ConstantsError::UnknownKey {
                            set: Self::SET_NAME,
                            key: key.to_string(),
                            line,
                        });
                    }
                }
            }
        }
        out.validate()?;
        Ok(out)
    }

    fn load(path: &Path) -> Result<Self, ConstantsError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn save(&self, path: &Path) -> Result<(), ConstantsError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    fn hash(&self) -> ConstantsHash {
        Sha256::digest(self.to_text().as_bytes()).into()
    }
}

/// Declares a parameter struct of `f64` fields together with its
/// [`ConstantSet`] implementation. The struct must provide an inherent
/// `fn check(&self) -> Result<(), ConstantsError>`.
macro_rules! constant_set {
    (
        $(#[$meta:meta])*
        pub struct $name:ident($set:literal) {
            $( #[doc = $doc:literal] $field:ident = $default:expr, )*
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
        pub struct $name {
            $( #[doc = $doc] pub $field: f64, )*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl $crate::constants::ConstantSet for $name {
            const SET_NAME: &'static str = $set;

            fn keys() -> &'static [(&'static str, &'static str)] {
                const KEYS: &[(&str, &str)] = &[ $( (stringify!($field), $doc.trim_ascii()), )* ];
                KEYS
            }

            fn get(&self, key: &str) -> Option<f64> {
                match key {
                    $( stringify!($field) => Some(self.$field), )*
                    _ => None,
                }
            }

            fn set(&mut self, key: &str, value: f64) -> bool {
                match key {
                    $( stringify!($field) => { self.$field = value; true } )*
                    _ => false,
                }
            }

            fn validate(&self) -> Result<(), $crate::constants::ConstantsError> {
                self.check()
            }
        }
    };
}

pub(crate) use constant_set;
