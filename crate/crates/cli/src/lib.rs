//! Library backing the `qtherm` binary.
//!
//! The crate is split so the acceptance suite can drive the same experiment
//! and verification code paths that the command-line interface uses.

pub mod config;
pub mod experiment;
pub mod manifest;
pub mod output;
pub mod presets;
pub mod verify;
