//! Demodulation coefficients, analytic-field extraction, Lissajous figure,
//! correction ratio, wrapped phase, and phase-error statistics.
//!
//! Plain coefficients are `c_n = [v0]_n + i [v1]_n` built from the two
//! dominant eigenvectors. The corrected variant rescales the real channel by
//! the measured ratio `rho = sum|Im A| / sum|Re A|`, which turns the
//! axis-aligned Lissajous ellipse of the plain filter into a circle.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, Image, PhaseMap};
use crate::numeric::{pairwise_sum, wrap_angle};
use crate::pca::PcaBasis;
use crate::spectral::ftf_at;
use crate::synth::{FringeStack, PhaseSteps};

/// The demodulated complex field `A(x, y)`.
pub type AnalyticField = ComplexImage;

/// Relative magnitude below which a pixel of the analytic field carries no
/// usable phase.
pub const MAGNITUDE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Plain,
    Corrected,
}

/// Records whether the taps were conjugated to favor the +1 passband.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    AsIs,
    Conjugated,
}

/// A linear demodulation filter: one complex tap per frame.
#[derive(Debug, Clone)]
pub struct DemodCoefficients {
    taps: Vec<Complex64>,
    kind: CoefficientKind,
    rho: f64,
    orientation: Orientation,
}

impl DemodCoefficients {
    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn kind(&self) -> CoefficientKind {
        self.kind
    }

    /// The ratio applied to the real channel; 1.0 for plain coefficients.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Conjugates the taps when the filter responds more strongly at -1 than
    /// at +1, so oriented filters always favor the +1 passband. Requires the
    /// steps, so it only runs on the synthesis/analysis path where they are
    /// known; without steps the quadrature direction is unobservable and
    /// [`phase_error`] resolves the sign instead.
    pub fn orient_to_steps(&mut self, steps: &PhaseSteps) -> Result<()> {
        if steps.len() != self.taps.len() {
            return Err(Error::invalid(format!(
                "{} taps but {} steps",
                self.taps.len(),
                steps.len()
            )));
        }
        let plus = ftf_at(&self.taps, steps, 1.0).norm();
        let minus = ftf_at(&self.taps, steps, -1.0).norm();
        if plus < minus {
            for t in &mut self.taps {
                *t = t.conj();
            }
            self.orientation = match self.orientation {
                Orientation::AsIs => Orientation::Conjugated,
                Orientation::Conjugated => Orientation::AsIs,
            };
        }
        Ok(())
    }
}

fn require_non_degenerate(basis: &PcaBasis) -> Result<()> {
    if basis.is_degenerate() {
        return Err(Error::DegenerateSecondComponent { ratio: basis.second_component_ratio() });
    }
    Ok(())
}

/// Plain filter taps `c_n = [v0]_n + i [v1]_n`.
pub fn plain_coefficients(basis: &PcaBasis) -> Result<DemodCoefficients> {
    require_non_degenerate(basis)?;
    let v0 = basis.eigenvector(0);
    let v1 = basis.eigenvector(1);
    let taps = v0
        .iter()
        .zip(&v1)
        .map(|(&re, &im)| Complex64::new(re, im))
        .collect();
    Ok(DemodCoefficients {
        taps,
        kind: CoefficientKind::Plain,
        rho: 1.0,
        orientation: Orientation::AsIs,
    })
}

/// Corrected filter taps `c_n = rho [v0]_n + i [v1]_n`.
///
/// `rho` is the ratio measured on the plain analytic field. A measured value
/// above 1 means the imaginary channel is the major axis (noise can do
/// this); the axis roles are then swapped so the stored ratio is always in
/// (0, 1].
pub fn corrected_coefficients(basis: &PcaBasis, rho: f64) -> Result<DemodCoefficients> {
    require_non_degenerate(basis)?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("correction ratio must be finite and > 0, got {rho}")));
    }
    let v0 = basis.eigenvector(0);
    let v1 = basis.eigenvector(1);
    let (scale, re_src, im_src) = if rho <= 1.0 {
        (rho, &v0, &v1)
    } else {
        (1.0 / rho, &v1, &v0)
    };
    let taps = re_src
        .iter()
        .zip(im_src.iter())
        .map(|(&re, &im)| Complex64::new(scale * re, im))
        .collect();
    Ok(DemodCoefficients {
        taps,
        kind: CoefficientKind::Corrected,
        rho: scale,
        orientation: Orientation::AsIs,
    })
}

/// Applies raw taps to a stack: `A = sum_n c_n I_n`.
pub fn demodulate_taps(stack: &FringeStack, taps: &[Complex64]) -> Result<AnalyticField> {
    if taps.len() != stack.len() {
        return Err(Error::invalid(format!(
            "{} taps but {} frames",
            taps.len(),
            stack.len()
        )));
    }
    let w = stack.width();
    let h = stack.height();
    let frames: Vec<&[f64]> = stack.frames().iter().map(|f| f.as_slice()).collect();
    let mut out = ComplexImage::zeros(w, h);
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, value) in row.iter_mut().enumerate() {
                let idx = y * w + x;
                let mut acc = Complex64::new(0.0, 0.0);
                for (tap, frame) in taps.iter().zip(&frames) {
                    acc += tap * frame[idx];
                }
                *value = acc;
            }
        });
    Ok(out)
}

/// Applies a coefficient set to a stack.
pub fn demodulate(stack: &FringeStack, coeffs: &DemodCoefficients) -> Result<AnalyticField> {
    demodulate_taps(stack, coeffs.taps())
}

/// Whole-image correction ratio `rho = sum|Im A| / sum|Re A|`.
///
/// A single scalar estimated over every pixel, which is what makes the
/// correction robust to noise.
pub fn correction_ratio(field: &AnalyticField) -> Result<f64> {
    let abs_im: Vec<f64> = field.as_slice().iter().map(|z| z.im.abs()).collect();
    let abs_re: Vec<f64> = field.as_slice().iter().map(|z| z.re.abs()).collect();
    let sum_re = pairwise_sum(&abs_re);
    if sum_re == 0.0 {
        return Err(Error::DegenerateRealAxis);
    }
    Ok(pairwise_sum(&abs_im) / sum_re)
}

/// Deterministic row-major subsample of (Re A, Im A) scatter points.
pub fn lissajous(field: &AnalyticField, max_points: usize) -> Vec<(f64, f64)> {
    if max_points == 0 || field.is_empty() {
        return Vec::new();
    }
    let stride = field.len().div_ceil(max_points);
    field
        .as_slice()
        .iter()
        .step_by(stride)
        .map(|z| (z.re, z.im))
        .collect()
}

/// Wrapped phase `arg A` in (-pi, pi] with negligible-magnitude pixels
/// flagged invalid.
pub fn phase(field: &AnalyticField) -> Result<PhaseMap> {
    let max = field.max_abs();
    if max == 0.0 {
        return Err(Error::AllZeroField);
    }
    let threshold = MAGNITUDE_EPSILON * max;
    let mut values = Image::zeros(field.width(), field.height());
    let mut valid = vec![false; field.len()];
    for (i, z) in field.as_slice().iter().enumerate() {
        if z.norm() < threshold {
            continue;
        }
        let mut p = z.im.atan2(z.re);
        if p <= -std::f64::consts::PI {
            p = std::f64::consts::PI;
        }
        values.as_mut_slice()[i] = p;
        valid[i] = true;
    }
    PhaseMap::new(values, valid)
}

/// RMS/max phase error after removing the unobservable pieces: global sign
/// (conjugation) and global offset (piston).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub rms: f64,
    pub max_abs: f64,
    /// The removed global offset, in radians.
    pub piston: f64,
    /// Whether the estimate had to be negated to match the truth.
    pub conjugated: bool,
}

/// Compares a wrapped-phase estimate against a reference phase image.
///
/// Both `est` and `-est` are tried; for each, the piston is the circular
/// mean `arg sum e^{i(est - truth)}` and the residual is wrapped to
/// (-pi, pi]. The variant with smaller RMS wins. Invalid pixels are excluded.
pub fn phase_error(est: &PhaseMap, truth: &Image) -> Result<ErrorStats> {
    if !est.values().same_dims(truth) {
        return Err(Error::invalid("estimate and reference dimensions differ"));
    }
    if est.valid_count() == 0 {
        return Err(Error::invalid("no valid pixels to compare"));
    }

    let mut best: Option<ErrorStats> = None;
    for (sign, conjugated) in [(1.0, false), (-1.0, true)] {
        let diffs: Vec<f64> = est
            .values()
            .as_slice()
            .iter()
            .zip(truth.as_slice())
            .zip(est.valid())
            .filter(|(_, &ok)| ok)
            .map(|((&e, &t), _)| wrap_angle(sign * e - t))
            .collect();
        let sin_sum = pairwise_sum(&diffs.iter().map(|d| d.sin()).collect::<Vec<_>>());
        let cos_sum = pairwise_sum(&diffs.iter().map(|d| d.cos()).collect::<Vec<_>>());
        let piston = sin_sum.atan2(cos_sum);

        let residuals: Vec<f64> = diffs.iter().map(|d| wrap_angle(d - piston)).collect();
        let rms = (pairwise_sum(&residuals.iter().map(|r| r * r).collect::<Vec<_>>())
            / residuals.len() as f64)
            .sqrt();
        let max_abs = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));

        let stats = ErrorStats { rms, max_abs, piston, conjugated };
        if best.as_ref().map_or(true, |b| rms < b.rms) {
            best = Some(stats);
        }
    }
    Ok(best.expect("two candidates were evaluated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::matrix::SquareMatrix;
    use crate::pca::pca_basis;
    use crate::synth::{
        make_scene, sample_fringes, HarmonicSpec, NoiseSpec, Provenance, SceneSpec,
    };
    use std::f64::consts::PI;

    fn basis_from_vectors(v0: &[f64], v1: &[f64], l0: f64, l1: f64) -> PcaBasis {
        let n = v0.len();
        let mut vectors = SquareMatrix::zeros(n);
        for i in 0..n {
            vectors.set(i, 0, v0[i]);
            vectors.set(i, 1, v1[i]);
        }
        let mut eigenvalues = vec![0.0; n];
        eigenvalues[0] = l0;
        eigenvalues[1] = l1;
        PcaBasis {
            background: Image::zeros(2, 2),
            covariance: SquareMatrix::zeros(n),
            eigenvalues,
            eigenvectors: vectors,
        }
    }

    #[test]
    fn plain_taps_follow_axis_vectors() {
        let basis = basis_from_vectors(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 2.0, 1.0);
        let c = plain_coefficients(&basis).unwrap();
        assert_eq!(c.taps()[0], Complex64::new(1.0, 0.0));
        assert_eq!(c.taps()[1], Complex64::new(0.0, 1.0));
        assert_eq!(c.taps()[2], Complex64::new(0.0, 0.0));
        assert_eq!(c.kind(), CoefficientKind::Plain);
        assert_eq!(c.rho(), 1.0);
    }

    #[test]
    fn plain_taps_from_two_by_two_eigenvectors() {
        // Eigenvectors of [[2,1],[1,2]] under the sign convention are
        // (1,1)/sqrt2 and (1,-1)/sqrt2, giving taps ((1+i)/sqrt2, (1-i)/sqrt2).
        let s = 1.0 / 2.0_f64.sqrt();
        let basis = basis_from_vectors(&[s, s], &[s, -s], 3.0, 1.0);
        let c = plain_coefficients(&basis).unwrap();
        assert!((c.taps()[0] - Complex64::new(s, s)).norm() < 1e-15);
        assert!((c.taps()[1] - Complex64::new(s, -s)).norm() < 1e-15);
    }

    #[test]
    fn corrected_taps_scale_real_channel() {
        let basis = basis_from_vectors(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 2.0, 1.0);
        let c = corrected_coefficients(&basis, 0.5).unwrap();
        assert_eq!(c.taps()[0], Complex64::new(0.5, 0.0));
        assert_eq!(c.taps()[1], Complex64::new(0.0, 1.0));
        assert_eq!(c.rho(), 0.5);
        assert_eq!(c.kind(), CoefficientKind::Corrected);
    }

    #[test]
    fn corrected_with_unit_rho_equals_plain() {
        let basis = basis_from_vectors(&[0.6, 0.8, 0.0], &[-0.8, 0.6, 0.0], 2.0, 1.0);
        let plain = plain_coefficients(&basis).unwrap();
        let corrected = corrected_coefficients(&basis, 1.0).unwrap();
        for (p, c) in plain.taps().iter().zip(corrected.taps()) {
            assert!((p - c).norm() < 1e-15);
        }
    }

    #[test]
    fn corrected_swaps_axes_when_rho_exceeds_one() {
        let basis = basis_from_vectors(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 2.0, 1.0);
        let c = corrected_coefficients(&basis, 2.0).unwrap();
        // roles swap: real channel now reads v1 scaled by 1/rho
        assert_eq!(c.taps()[0], Complex64::new(0.0, 1.0));
        assert_eq!(c.taps()[1], Complex64::new(0.5, 0.0));
        assert!((c.rho() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_basis_is_rejected() {
        let basis = basis_from_vectors(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 2.0, 0.0);
        assert!(matches!(
            plain_coefficients(&basis),
            Err(Error::DegenerateSecondComponent { .. })
        ));
    }

    #[test]
    fn single_tap_identity_filter() {
        let frame = Image::from_fn(4, 4, |x, y| (x + 2 * y) as f64);
        let stack = FringeStack::new(vec![frame.clone()], None, Provenance::default()).unwrap();
        let field = demodulate_taps(&stack, &[Complex64::new(1.0, 0.0)]).unwrap();
        for (z, &v) in field.as_slice().iter().zip(frame.as_slice()) {
            assert_eq!(z.re, v);
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn opposite_taps_cancel_identical_frames() {
        let frame = Image::from_fn(4, 4, |x, _| x as f64 + 1.0);
        let stack = FringeStack::new(
            vec![frame.clone(), frame],
            None,
            Provenance::default(),
        )
        .unwrap();
        let field =
            demodulate_taps(&stack, &[Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)])
                .unwrap();
        assert!(field.as_slice().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn uniform_steps_yield_pure_rotor() {
        // a=0, b=2, uniform steps, taps e^{i 2 pi n / 3}:
        // A = 3 e^{-i phi} by discrete orthogonality.
        let w = 64;
        let phi = Image::from_fn(w, w, |x, _| 2.0 * PI * 3.0 * x as f64 / w as f64);
        let a = Image::zeros(w, w);
        let b = Image::from_fn(w, w, |_, _| 2.0);
        let scene = crate::synth::Scene::from_parts(a, b, phi.clone(), "test").unwrap();
        let steps = PhaseSteps::uniform(3).unwrap();
        let stack =
            sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless()).unwrap();
        let taps: Vec<Complex64> = (0..3)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * n as f64 / 3.0))
            .collect();
        let field = demodulate_taps(&stack, &taps).unwrap();
        for y in 0..w {
            for x in 0..w {
                let z = field.get(x, y);
                assert!((z.norm() - 3.0).abs() < 1e-10);
                let want = wrap_angle(-phi.get(x, y));
                assert!(wrap_angle(z.arg() - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn correction_ratio_of_balanced_field_is_one() {
        let data: Vec<Complex64> = (0..64)
            .map(|i| {
                let v = (i as f64 * 0.37).sin() + 0.2;
                Complex64::new(v, -v)
            })
            .collect();
        let field = ComplexImage::from_vec(8, 8, data).unwrap();
        assert!((correction_ratio(&field).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn correction_ratio_of_half_amplitude_sine() {
        // A(phi) = 2 cos phi + i sin phi over a dense uniform phi grid:
        // mean|sin| / mean|2 cos| = 1/2.
        let n = 4096;
        let data: Vec<Complex64> = (0..n)
            .map(|i| {
                let phi = 2.0 * PI * i as f64 / n as f64;
                Complex64::new(2.0 * phi.cos(), phi.sin())
            })
            .collect();
        let field = ComplexImage::from_vec(n, 1, data).unwrap();
        assert!((correction_ratio(&field).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn correction_ratio_rejects_zero_real_axis() {
        let field = ComplexImage::from_vec(
            2,
            1,
            vec![Complex64::new(0.0, 1.0), Complex64::new(0.0, -2.0)],
        )
        .unwrap();
        assert!(matches!(correction_ratio(&field), Err(Error::DegenerateRealAxis)));
    }

    #[test]
    fn lissajous_constant_field() {
        let field =
            ComplexImage::from_vec(2, 2, vec![Complex64::new(1.0, 0.0); 4]).unwrap();
        let pts = lissajous(&field, 10);
        assert_eq!(pts.len(), 4);
        assert!(pts.iter().all(|&(re, im)| re == 1.0 && im == 0.0));
    }

    #[test]
    fn lissajous_unit_rotor_lies_on_circle() {
        let n = 256;
        let data: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.5 * 2.0 * PI * i as f64 / n as f64))
            .collect();
        let field = ComplexImage::from_vec(n, 1, data).unwrap();
        for (re, im) in lissajous(&field, 100) {
            assert!(((re * re + im * im).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lissajous_respects_max_points() {
        let field = ComplexImage::zeros(100, 100);
        assert!(lissajous(&field, 500).len() <= 500);
        assert!(lissajous(&field, 0).is_empty());
    }

    #[test]
    fn phase_branch_conventions() {
        let field = ComplexImage::from_vec(
            3,
            1,
            vec![
                Complex64::new(1.0, 1.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let map = phase(&field).unwrap();
        assert!((map.values().get(0, 0) - PI / 4.0).abs() < 1e-15);
        assert!((map.values().get(1, 0) - PI).abs() < 1e-15); // +pi, not -pi
        assert!(!map.is_valid(2, 0));
        assert!(map.is_valid(0, 0));
    }

    #[test]
    fn phase_of_all_zero_field_errors() {
        let field = ComplexImage::zeros(4, 4);
        assert!(matches!(phase(&field), Err(Error::AllZeroField)));
    }

    #[test]
    fn phase_error_identity_and_piston() {
        let truth = Image::from_fn(16, 16, |x, y| {
            wrap_angle(0.3 * x as f64 - 0.1 * y as f64)
        });
        let est = PhaseMap::fully_valid(truth.clone());
        let stats = phase_error(&est, &truth).unwrap();
        assert!(stats.rms < 1e-12);
        assert!(stats.piston.abs() < 1e-12);
        assert!(!stats.conjugated);

        let shifted = PhaseMap::fully_valid(Image::from_fn(16, 16, |x, y| {
            wrap_angle(truth.get(x, y) + 1.3)
        }));
        let stats = phase_error(&shifted, &truth).unwrap();
        assert!(stats.rms < 1e-12);
        assert!((stats.piston - 1.3).abs() < 1e-12);
    }

    #[test]
    fn phase_error_resolves_conjugation() {
        let truth = Image::from_fn(16, 16, |x, y| wrap_angle(0.25 * (x + y) as f64));
        let est = PhaseMap::fully_valid(Image::from_fn(16, 16, |x, y| {
            wrap_angle(-truth.get(x, y) + 0.2)
        }));
        let stats = phase_error(&est, &truth).unwrap();
        assert!(stats.rms < 1e-12, "rms = {}", stats.rms);
        assert!(stats.conjugated);
        assert!((stats.piston + 0.2).abs() < 1e-12);
    }

    #[test]
    fn orientation_prefers_plus_one_passband() {
        let scene = make_scene(&SceneSpec::tilt8(64)).unwrap();
        let steps = PhaseSteps::paper3();
        let stack =
            sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless()).unwrap();
        let basis = pca_basis(&stack).unwrap();
        let mut coeffs = plain_coefficients(&basis).unwrap();
        coeffs.orient_to_steps(&steps).unwrap();
        let plus = ftf_at(coeffs.taps(), &steps, 1.0).norm();
        let minus = ftf_at(coeffs.taps(), &steps, -1.0).norm();
        assert!(plus >= minus);
    }
}
