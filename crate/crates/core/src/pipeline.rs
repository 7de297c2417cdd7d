//! End-to-end orchestration of one stack analysis, shared by the CLI and
//! the test suites.

use crate::demod::{
    corrected_coefficients, correction_ratio, demodulate, plain_coefficients, AnalyticField,
    DemodCoefficients,
};
use crate::error::Result;
use crate::pca::{pca_basis, PcaBasis};
use crate::synth::FringeStack;

/// Everything one pass over a stack produces: the PCA basis, both
/// coefficient sets (oriented when steps are known), their analytic fields,
/// and the measured correction ratio.
#[derive(Debug, Clone)]
pub struct StackAnalysis {
    pub basis: PcaBasis,
    pub rho: f64,
    pub plain: DemodCoefficients,
    pub corrected: DemodCoefficients,
    pub plain_field: AnalyticField,
    pub corrected_field: AnalyticField,
}

/// Runs basis construction, plain demodulation, ratio measurement, and the
/// corrected pass. When the stack carries its steps, both coefficient sets
/// are oriented to favor the +1 passband.
pub fn analyze_stack(stack: &FringeStack) -> Result<StackAnalysis> {
    let basis = pca_basis(stack)?;

    let mut plain = plain_coefficients(&basis)?;
    if let Some(steps) = stack.steps() {
        plain.orient_to_steps(steps)?;
    }
    let plain_field = demodulate(stack, &plain)?;
    let rho = correction_ratio(&plain_field)?;

    let mut corrected = corrected_coefficients(&basis, rho)?;
    if let Some(steps) = stack.steps() {
        corrected.orient_to_steps(steps)?;
    }
    let corrected_field = demodulate(stack, &corrected)?;

    Ok(StackAnalysis { basis, rho, plain, corrected, plain_field, corrected_field })
}
