//! Near-field ultra-wideband channel processing over a virtual uniform
//! circular array (UCA).
//!
//! The crate synthesizes element-space channel frequency responses for
//! spherical-wave multipath scenes, beamforms them either classically or in
//! phase-mode (beamspace) with a Bessel compensation filter, builds
//! power-angle-delay profiles, and extracts per-path azimuth, delay and
//! amplitude with a successive-cancellation loop.
//!
//! Modules:
//! - [`numerics`]: Bessel functions, delay-domain Fourier transforms, grids.
//! - [`scene`]: geometry and exact spherical-wave channel synthesis.
//! - [`beamform`]: element-space and phase-mode beamformers, PADP.
//! - [`estimator`]: successive-cancellation multipath extraction.
//! - [`io`]: scenario files, CFR matrices, CSV exporters.
//! - [`cli`]: the `uca-sounder` command-line front end.

pub mod beamform;
pub mod cli;
pub mod estimator;
pub mod io;
pub mod numerics;
pub mod scene;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty grid")]
    EmptyGrid,
    #[error("compensation filter degenerate for mode {mode}: |denominator| = {magnitude:.3e}")]
    DegenerateMode { mode: i32, magnitude: f64 },
    #[error("first PADP is all-zero; nothing to estimate")]
    AllZeroPadp,
    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },
    #[error("{context}: {message}")]
    FileFormat { context: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use beamform::{
    cbf_beam_pattern, cbf_padp, cbf_weights, compensation_filter, compute_padp, default_mode_cap,
    fibf_beam_pattern, fibf_padp, phase_mode_transform, Compensation, ModeSpectrum, PadpGrid,
    SteeringConfig, Window,
};
pub use estimator::{
    build_label_vector, cancel_path, estimate_paths, residual_power_rate, rp_sweep,
    synthesize_detected_path, CancellationConfig, EstimationTrace, PathEstimate, RpSample,
};
pub use numerics::{
    bessel_j, bessel_j_prime, find_global_peak, forward_ft, inverse_ft, DelayGrid, DelayTransform,
    Mat,
};
pub use scene::{
    element_distance, friis_path_loss_db, relative_excess_distance, synthesize_channel,
    ElementChannelMatrix, FrequencyGrid, NoiseSpec, PathTruth, ScattererLocation, UcaGeometry,
    SPEED_OF_LIGHT,
};
