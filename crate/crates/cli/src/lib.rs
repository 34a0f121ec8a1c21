//! Manifest-driven runner for `lampo`: classification, threshold
//! calibration, pointwise baselines, simulation sweeps and cache upkeep.
//!
//! Every command has a `*_with` variant that takes the backend explicitly,
//! so callers can count or script generation calls.

pub mod baseline;
pub mod cache;
pub mod classify;
pub mod cli;
pub mod exit;
pub mod job;
pub mod manifest;
pub mod simulate;

pub use baseline::{baseline, baseline_with, BaselineRun};
pub use classify::{calibrate, calibrate_with, classify, classify_with, CallPlan, ClassifyRun};
pub use manifest::JobManifest;
pub use simulate::{run_sweep, SweepConfig, SweepReport};
