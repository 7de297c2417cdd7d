//! Frequency-domain characterization of a demodulation filter.
//!
//! Any tap set `c_n` paired with known steps `theta_n` is a linear
//! quadrature filter with frequency transfer function
//!
//! ```text
//! H(w) = sum_n c_n exp(-i theta_n w)
//! ```
//!
//! From H follow the quadrature conditions (H(-1) = 0, H(0) = 0,
//! H(+1) != 0), the detuning ratio |H(-1)|/|H(+1)|, the SNR gain
//! `|H(1)|^2 / sum|c_n|^2`, and the harmonic robustness with the 1/k
//! harmonic amplitude model.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::synth::PhaseSteps;

/// Default harmonic truncation order for the robustness denominator.
pub const DEFAULT_K_MAX: u32 = 50;

/// Symmetric frequency grid `[-half_width, half_width]` with fixed step.
///
/// The default covers the second and third harmonics with a step fine
/// enough for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtfGrid {
    half_width: f64,
    step: f64,
}

impl Default for FtfGrid {
    fn default() -> Self {
        Self { half_width: 3.5, step: 0.005 }
    }
}

impl FtfGrid {
    /// The grid must reach at least |w| = 3 and sample no coarser than 0.01.
    pub fn new(half_width: f64, step: f64) -> Result<Self> {
        if !(half_width >= 3.0) || !half_width.is_finite() {
            return Err(Error::invalid("grid half-width must be finite and >= 3"));
        }
        if !(step > 0.0) || step > 0.01 {
            return Err(Error::invalid("grid step must be in (0, 0.01]"));
        }
        Ok(Self { half_width, step })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Grid frequencies, symmetric and endpoint-inclusive.
    pub fn frequencies(&self) -> Vec<f64> {
        let count = (2.0 * self.half_width / self.step).round() as usize + 1;
        (0..count).map(|i| -self.half_width + i as f64 * self.step).collect()
    }
}

/// Evaluates `H(w) = sum_n c_n exp(-i theta_n w)` exactly.
pub fn ftf_at(taps: &[Complex64], steps: &PhaseSteps, omega: f64) -> Complex64 {
    taps.iter()
        .zip(steps.values())
        .map(|(c, &theta)| c * Complex64::from_polar(1.0, -theta * omega))
        .sum()
}

/// Sampled FTF with the derived figures of merit.
///
/// The values at w in {-1, 0, +1} and at the integer harmonics are computed
/// by direct summation, never read off the grid.
#[derive(Debug, Clone)]
pub struct FtfReport {
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    pub h_minus1: Complex64,
    pub h_zero: Complex64,
    pub h_plus1: Complex64,
    /// |H(-1)| / |H(+1)|.
    pub detuning_ratio: f64,
    /// |H(+1)|^2 / sum |c_n|^2, in (0, N].
    pub g_snr: f64,
    /// |H(+1)|^2 over the 1/k^2-weighted harmonic leakage power.
    pub r_h: f64,
    /// Harmonic truncation order used for `r_h`.
    pub k_max: u32,
    /// Upper bound on the leakage power ignored beyond `k_max`:
    /// `(sum|c_n|)^2 * sum_{k > k_max} 2/k^2`.
    pub r_h_tail_bound: f64,
}

impl FtfReport {
    /// |H| normalized so the +1 response is 1, for comparing filters.
    pub fn normalized_magnitudes(&self) -> Vec<f64> {
        let h1 = self.h_plus1.norm();
        self.values.iter().map(|z| z.norm() / h1).collect()
    }
}

/// Evaluates the FTF on a grid and fills every derived quantity.
pub fn ftf(
    taps: &[Complex64],
    steps: &PhaseSteps,
    grid: &FtfGrid,
    k_max: u32,
) -> Result<FtfReport> {
    if taps.len() != steps.len() {
        return Err(Error::invalid(format!(
            "{} taps but {} steps",
            taps.len(),
            steps.len()
        )));
    }
    let omega = grid.frequencies();
    let values: Vec<Complex64> = omega.par_iter().map(|&w| ftf_at(taps, steps, w)).collect();

    let h_minus1 = ftf_at(taps, steps, -1.0);
    let h_zero = ftf_at(taps, steps, 0.0);
    let h_plus1 = ftf_at(taps, steps, 1.0);
    if h_plus1.norm() == 0.0 {
        return Err(Error::NoQuadratureResponse);
    }

    let robustness = harmonic_robustness(taps, steps, k_max)?;
    Ok(FtfReport {
        omega,
        values,
        h_minus1,
        h_zero,
        h_plus1,
        detuning_ratio: h_minus1.norm() / h_plus1.norm(),
        g_snr: snr_gain(taps, steps)?,
        r_h: robustness.value,
        k_max,
        r_h_tail_bound: robustness.tail_bound,
    })
}

/// Outcome of testing the three quadrature conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureCheck {
    /// |H(-1)| / |H(+1)|; must vanish to reject the conjugate image.
    pub conjugate_ratio: f64,
    /// |H(0)| / |H(+1)|; must vanish to reject the background.
    pub background_ratio: f64,
    /// |H(+1)| itself.
    pub signal_magnitude: f64,
    pub rejects_conjugate: bool,
    pub rejects_background: bool,
    pub has_signal: bool,
}

impl QuadratureCheck {
    pub fn all_pass(&self) -> bool {
        self.rejects_conjugate && self.rejects_background && self.has_signal
    }
}

/// Default relative tolerance for [`quadrature_check`].
pub const QUADRATURE_TOL: f64 = 1e-3;

/// Tests H(-1) = 0, H(0) = 0, H(+1) != 0 at a relative tolerance.
pub fn quadrature_check(report: &FtfReport, tol: f64) -> Result<QuadratureCheck> {
    let h1 = report.h_plus1.norm();
    if h1 == 0.0 {
        return Err(Error::NoQuadratureResponse);
    }
    let conjugate_ratio = report.h_minus1.norm() / h1;
    let background_ratio = report.h_zero.norm() / h1;
    Ok(QuadratureCheck {
        conjugate_ratio,
        background_ratio,
        signal_magnitude: h1,
        rejects_conjugate: conjugate_ratio <= tol,
        rejects_background: background_ratio <= tol,
        has_signal: h1 > 0.0,
    })
}

/// Detuning ratio |H(-1)| / |H(+1)| straight from taps and steps.
pub fn detuning_ratio(taps: &[Complex64], steps: &PhaseSteps) -> Result<f64> {
    let h1 = ftf_at(taps, steps, 1.0).norm();
    if h1 == 0.0 {
        return Err(Error::NoQuadratureResponse);
    }
    Ok(ftf_at(taps, steps, -1.0).norm() / h1)
}

/// SNR gain `|H(1)|^2 / sum |c_n|^2` of the analytic signal over the raw
/// frames under additive white Gaussian noise. Bounded by the frame count.
pub fn snr_gain(taps: &[Complex64], steps: &PhaseSteps) -> Result<f64> {
    if taps.len() != steps.len() {
        return Err(Error::invalid(format!(
            "{} taps but {} steps",
            taps.len(),
            steps.len()
        )));
    }
    let energy: f64 = taps.iter().map(|c| c.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::invalid("all-zero coefficients"));
    }
    let h1 = ftf_at(taps, steps, 1.0);
    if h1.norm() == 0.0 {
        return Err(Error::NoQuadratureResponse);
    }
    Ok(h1.norm_sqr() / energy)
}

/// Harmonic robustness value plus the truncation-tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicRobustness {
    pub value: f64,
    pub k_max: u32,
    pub tail_bound: f64,
}

/// `R_H = |H(1)|^2 / sum_{k=2}^{k_max} (1/k^2) (|H(k)|^2 + |H(-k)|^2)`,
/// the quadrature power over the leakage power when harmonic amplitudes
/// fall off as 1/k.
pub fn harmonic_robustness(
    taps: &[Complex64],
    steps: &PhaseSteps,
    k_max: u32,
) -> Result<HarmonicRobustness> {
    if k_max < 2 {
        return Err(Error::invalid("harmonic truncation order must be >= 2"));
    }
    if taps.len() != steps.len() {
        return Err(Error::invalid(format!(
            "{} taps but {} steps",
            taps.len(),
            steps.len()
        )));
    }
    let h1 = ftf_at(taps, steps, 1.0);
    if h1.norm() == 0.0 {
        return Err(Error::NoQuadratureResponse);
    }
    let mut leakage = 0.0;
    for k in 2..=k_max {
        let kf = k as f64;
        let plus = ftf_at(taps, steps, kf).norm_sqr();
        let minus = ftf_at(taps, steps, -kf).norm_sqr();
        leakage += (plus + minus) / (kf * kf);
    }
    if leakage == 0.0 {
        return Err(Error::invalid(
            "harmonic leakage power is exactly zero up to k_max",
        ));
    }
    // |H(k)| <= sum|c_n| bounds every ignored term.
    let l1: f64 = taps.iter().map(|c| c.norm()).sum();
    let partial: f64 = (1..=k_max).map(|k| 1.0 / (k as f64 * k as f64)).sum();
    let tail = 2.0 * (PI * PI / 6.0 - partial);
    Ok(HarmonicRobustness {
        value: h1.norm_sqr() / leakage,
        k_max,
        tail_bound: l1 * l1 * tail,
    })
}

/// Pointwise detuning-error prediction for a filter with nonzero H(-1).
///
/// Returns `arg(1 + r conj e^{-2 i phi})` per pixel, where the conjugate of
/// `H(-1)/H(1)` is used because the error of the sign-resolved estimate is
/// being predicted: matching the estimate to the truth conjugates the
/// analytic signal, which conjugates the leakage ratio with it.
pub fn predict_detuning_field(report: &FtfReport, truth: &Image) -> Image {
    let ratio = (report.h_minus1 / report.h_plus1).conj();
    let mut out = Image::zeros(truth.width(), truth.height());
    out.as_mut_slice()
        .iter_mut()
        .zip(truth.as_slice())
        .for_each(|(o, &phi)| {
            let z = Complex64::new(1.0, 0.0) + ratio * Complex64::from_polar(1.0, -2.0 * phi);
            *o = z.arg();
        });
    out
}
