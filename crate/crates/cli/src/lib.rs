//! Batch commands and the live-session service behind the `bvr` binary.

pub mod commands;
pub mod service;
