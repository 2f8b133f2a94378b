//! Experiment orchestration: sweeps, thresholds, code files and plots.

pub mod plot;
pub mod qalist;
pub mod sweep;
pub mod threshold;
