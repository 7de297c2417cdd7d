//! Phase demodulation of nonuniform phase-shifted fringe stacks.
//!
//! The pipeline: synthesize or load a stack of fringe images taken at
//! nonuniform phase steps, build the inter-frame PCA basis, demodulate with
//! plain or Lissajous-corrected coefficients, and characterize the resulting
//! linear filter through its frequency transfer function, SNR gain, and
//! harmonic robustness. A per-pixel least-squares path with known steps
//! serves as the independent reference.

pub mod demod;
pub mod error;
pub mod image;
pub mod io;
pub mod matrix;
pub mod numeric;
pub mod oracle;
pub mod pca;
pub mod pipeline;
pub mod spectral;
pub mod synth;

pub use demod::{
    correction_ratio, corrected_coefficients, demodulate, demodulate_taps, lissajous, phase,
    phase_error, plain_coefficients, AnalyticField, CoefficientKind, DemodCoefficients,
    ErrorStats, Orientation,
};
pub use error::{Error, Result};
pub use image::{ComplexImage, Image, PhaseMap};
pub use matrix::SquareMatrix;
pub use oracle::{empirical_snr_gain, estimate_steps, lsq_demodulate, LsqResult, StepEstimate};
pub use pca::{covariance, estimate_background, pca_basis, symmetric_eig, PcaBasis};
pub use pipeline::{analyze_stack, StackAnalysis};
pub use spectral::{
    detuning_ratio, ftf, ftf_at, harmonic_robustness, predict_detuning_field, quadrature_check,
    snr_gain, FtfGrid, FtfReport, HarmonicRobustness, QuadratureCheck, DEFAULT_K_MAX,
};
pub use synth::{
    make_scene, sample_fringes, FringeStack, Harmonic, HarmonicSpec, NoiseSpec, PhaseSteps,
    Provenance, Scene, SceneKind, SceneSpec,
};
