//! Shared fixtures for the pipeline benchmarks.

use bompc_core::ecm::{CellParams, EcmState};
use bompc_core::gp::GpDataset;
use bompc_core::harness::{make_mismatch, MismatchSpec};
use bompc_core::ocp::OcpConfig;

/// Plant plus a disturbed prediction model at the shipped default seed.
pub fn mismatched_setup() -> (CellParams, OcpConfig) {
    let plant = CellParams::builtin();
    let spec = MismatchSpec::new(11, 0.5).expect("valid magnitude");
    let prediction = make_mismatch(&plant, &spec).expect("disturbable fixture");
    let cfg = OcpConfig::new(prediction, 10, 10.0).expect("valid config");
    (plant, cfg)
}

/// A state in the constraint-riding phase, where solves do real work.
pub fn ride_state() -> EcmState {
    EcmState::new(0.85, 0.09)
}

/// Synthetic tuning dataset of `n` points in `dim` dimensions with a
/// smooth multimodal response.
pub fn tuning_dataset(n: usize, dim: usize) -> GpDataset {
    let points: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dim)
                .map(|d| {
                    let x = (i * (d + 3) + 7 * d + 1) as f64;
                    (x * 0.6180339887498949).fract()
                })
                .collect()
        })
        .collect();
    let targets: Vec<f64> = points
        .iter()
        .map(|p| p.iter().enumerate().map(|(d, x)| ((d + 1) as f64 * x * 3.0).sin()).sum())
        .collect();
    GpDataset::new(points, targets, 0.0).expect("finite synthetic data")
}
