//! Independent reference paths used to validate the PCA pipeline:
//! per-pixel least squares with known steps, Monte-Carlo SNR measurement,
//! and a cheap step-estimation surrogate.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::demod::{demodulate_taps, DemodCoefficients};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numeric::{pairwise_sum, splitmix64, wrap_angle};
use crate::synth::{sample_fringes, FringeStack, HarmonicSpec, NoiseSpec, PhaseSteps, Scene};

/// Per-pixel least-squares fit of `a + p cos theta + q sin theta`.
#[derive(Debug, Clone)]
pub struct LsqResult {
    pub a_hat: Image,
    pub b_hat: Image,
    /// Wrapped to (-pi, pi].
    pub phi_hat: Image,
    /// Infinity-norm condition number of the shared 3x3 normal matrix.
    pub condition: f64,
}

/// Condition number beyond which the normal matrix counts as singular.
const CONDITION_LIMIT: f64 = 1e12;

/// Solves, for every pixel, `min_{a,p,q} sum_n (I_n - a - p cos theta_n - q sin theta_n)^2`.
///
/// The model `I = a + b cos(phi + theta)` expands to `p = b cos phi`,
/// `q = -b sin phi`, so `phi = atan2(-q, p)` and `b = hypot(p, q)`. With
/// known steps this is exactly determined for N = 3 and overdetermined
/// beyond, making it a ground-truth oracle on noiseless data.
pub fn lsq_demodulate(stack: &FringeStack, steps: &PhaseSteps) -> Result<LsqResult> {
    if steps.len() != stack.len() {
        return Err(Error::invalid(format!(
            "{} steps but {} frames",
            steps.len(),
            stack.len()
        )));
    }

    let theta = steps.values();
    let n = theta.len() as f64;
    let sum_c: f64 = theta.iter().map(|t| t.cos()).sum();
    let sum_s: f64 = theta.iter().map(|t| t.sin()).sum();
    let sum_cc: f64 = theta.iter().map(|t| t.cos() * t.cos()).sum();
    let sum_ss: f64 = theta.iter().map(|t| t.sin() * t.sin()).sum();
    let sum_cs: f64 = theta.iter().map(|t| t.cos() * t.sin()).sum();

    // Normal matrix shared by every pixel.
    let g = [[n, sum_c, sum_s], [sum_c, sum_cc, sum_cs], [sum_s, sum_cs, sum_ss]];
    let (g_inv, condition) = invert_3x3(&g)?;

    let w = stack.width();
    let h = stack.height();
    let frames: Vec<&[f64]> = stack.frames().iter().map(|f| f.as_slice()).collect();
    let cos_t: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let sin_t: Vec<f64> = theta.iter().map(|t| t.sin()).collect();

    let mut a_hat = Image::zeros(w, h);
    let mut b_hat = Image::zeros(w, h);
    let mut phi_hat = Image::zeros(w, h);

    let rows: Vec<(usize, Vec<(f64, f64, f64)>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w);
            for x in 0..w {
                let idx = y * w + x;
                let mut r0 = 0.0;
                let mut r1 = 0.0;
                let mut r2 = 0.0;
                for (f, (&c, &s)) in frames.iter().zip(cos_t.iter().zip(&sin_t)) {
                    let v = f[idx];
                    r0 += v;
                    r1 += v * c;
                    r2 += v * s;
                }
                let a = g_inv[0][0] * r0 + g_inv[0][1] * r1 + g_inv[0][2] * r2;
                let p = g_inv[1][0] * r0 + g_inv[1][1] * r1 + g_inv[1][2] * r2;
                let q = g_inv[2][0] * r0 + g_inv[2][1] * r1 + g_inv[2][2] * r2;
                let b = p.hypot(q);
                let mut phi = (-q).atan2(p);
                if phi <= -std::f64::consts::PI {
                    phi = std::f64::consts::PI;
                }
                row.push((a, b, phi));
            }
            (y, row)
        })
        .collect();
    for (y, row) in rows {
        for (x, (a, b, phi)) in row.into_iter().enumerate() {
            a_hat.set(x, y, a);
            b_hat.set(x, y, b);
            phi_hat.set(x, y, phi);
        }
    }

    Ok(LsqResult { a_hat, b_hat, phi_hat, condition })
}

/// Closed-form 3x3 inverse with an infinity-norm condition estimate.
fn invert_3x3(g: &[[f64; 3]; 3]) -> Result<([[f64; 3]; 3], f64)> {
    let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
        - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    let scale = g
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    if det.abs() <= f64::EPSILON * scale.powi(3) || !det.is_finite() {
        return Err(Error::SingularNormalMatrix { cond: f64::INFINITY });
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let i1 = (i + 1) % 3;
            let i2 = (i + 2) % 3;
            let j1 = (j + 1) % 3;
            let j2 = (j + 2) % 3;
            // adjugate transpose handles the cofactor signs
            inv[j][i] = (g[i1][j1] * g[i2][j2] - g[i1][j2] * g[i2][j1]) / det;
        }
    }
    let inv_norm = inv
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let cond = scale * inv_norm;
    if cond > CONDITION_LIMIT {
        return Err(Error::SingularNormalMatrix { cond });
    }
    Ok((inv, cond))
}

/// Monte-Carlo measurement of the SNR gain of a filter.
///
/// For each trial a fresh AWGN realization of the scene is synthesized and
/// demodulated. The quadrature signal power comes from projecting the
/// noiseless field onto the true fringe rotor, and the filtered noise power
/// from the across-trial variance of the field. The ratio of analytic-signal
/// SNR to raw-frame SNR is returned; it should match the closed-form gain
/// `|H(1)|^2 / sum|c|^2`.
///
/// The normalization assumes spatially uniform modulation, which every
/// canonical tilt scene satisfies.
pub fn empirical_snr_gain(
    scene: &Scene,
    steps: &PhaseSteps,
    taps: &[Complex64],
    eta: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 50 {
        return Err(Error::invalid("need at least 50 trials"));
    }
    if !(eta > 0.0) {
        return Err(Error::invalid("noise variance must be > 0"));
    }

    let clean = sample_fringes(scene, steps, &HarmonicSpec::none(), &NoiseSpec::noiseless())?;
    let clean_field = demodulate_taps(&clean, taps)?;
    let phi = scene.phase();

    // |mean(A e^{+i phi})| picks out the +1 passband response, its mirror
    // the -1 response; the larger is the quadrature signal amplitude.
    let project = |sign: f64| -> f64 {
        let re: Vec<f64> = clean_field
            .as_slice()
            .iter()
            .zip(phi.as_slice())
            .map(|(z, &p)| (z * Complex64::from_polar(1.0, sign * p)).re)
            .collect();
        let im: Vec<f64> = clean_field
            .as_slice()
            .iter()
            .zip(phi.as_slice())
            .map(|(z, &p)| (z * Complex64::from_polar(1.0, sign * p)).im)
            .collect();
        let n = re.len() as f64;
        Complex64::new(pairwise_sum(&re) / n, pairwise_sum(&im) / n).norm()
    };
    let amplitude = project(1.0).max(project(-1.0));

    let pixels = clean_field.len();
    let mut sum_field = vec![Complex64::new(0.0, 0.0); pixels];
    let mut sum_sq = vec![0.0f64; pixels];
    for t in 0..trials {
        let noise = NoiseSpec { eta, seed: splitmix64(seed ^ t as u64) };
        let stack = sample_fringes(scene, steps, &HarmonicSpec::none(), &noise)?;
        let field = demodulate_taps(&stack, taps)?;
        for (i, z) in field.as_slice().iter().enumerate() {
            sum_field[i] += z;
            sum_sq[i] += z.norm_sqr();
        }
    }
    let t = trials as f64;
    let per_pixel_var: Vec<f64> = sum_sq
        .iter()
        .zip(&sum_field)
        .map(|(&sq, s)| (sq / t - (s / t).norm_sqr()) * t / (t - 1.0))
        .collect();
    let var_total = pairwise_sum(&per_pixel_var) / pixels as f64;

    // Analytic-signal SNR over raw-frame SNR.
    let b_sq = scene.modulation().as_slice().iter().map(|b| b * b).sum::<f64>()
        / scene.modulation().len() as f64;
    let snr_field = amplitude * amplitude / (var_total / 2.0);
    let snr_input = b_sq / 2.0 / eta;
    Ok(snr_field / snr_input)
}

/// Step estimate read off corrected coefficients, wrapped to [0, 2pi).
#[derive(Debug, Clone)]
pub struct StepEstimate {
    pub theta: Vec<f64>,
    /// Always true: this estimator is a diagnostic surrogate, reliable only
    /// near uniformly spaced steps, and is never used inside the
    /// demodulation path.
    pub surrogate: bool,
}

/// Estimates steps as `theta_n = arg(c_n) - arg(c_0)`.
///
/// Exact when the taps are proportional to `e^{i theta_n}` (which holds for
/// uniformly spaced steps); increasingly biased as the step set departs from
/// uniform. Fails if any tap magnitude is negligible.
pub fn estimate_steps(coeffs: &DemodCoefficients) -> Result<StepEstimate> {
    let taps = coeffs.taps();
    if taps.is_empty() {
        return Err(Error::invalid("no coefficients"));
    }
    let max = taps.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if max == 0.0 || taps.iter().any(|c| c.norm() < 1e-12 * max) {
        return Err(Error::invalid("near-zero coefficient, step angles undefined"));
    }
    let base = taps[0].arg();
    let theta = taps
        .iter()
        .map(|c| {
            let d = wrap_angle(c.arg() - base);
            if d < 0.0 {
                d + 2.0 * std::f64::consts::PI
            } else {
                d
            }
        })
        .collect();
    Ok(StepEstimate { theta, surrogate: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_scene, SceneSpec};
    use std::f64::consts::PI;

    #[test]
    fn lsq_is_exact_on_noiseless_data() {
        let scene = make_scene(&SceneSpec::tilt8(64)).unwrap();
        let steps = PhaseSteps::paper3();
        let stack =
            sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless())
                .unwrap();
        let fit = lsq_demodulate(&stack, &steps).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let want = wrap_angle(scene.phase().get(x, y));
                assert!(wrap_angle(fit.phi_hat.get(x, y) - want).abs() < 1e-10);
                assert!((fit.a_hat.get(x, y) - 1.0).abs() < 1e-10);
                assert!((fit.b_hat.get(x, y) - 1.0).abs() < 1e-10);
            }
        }
        assert!(fit.condition < 100.0);
        assert!(fit.b_hat.min() >= 0.0);
    }

    #[test]
    fn lsq_rejects_repeated_steps() {
        // all steps in one spot: the constructor refuses them, and even
        // sneaking past it the normal matrix must report singularity
        let g = [[3.0, 3.0, 0.0], [3.0, 3.0, 0.0], [0.0, 0.0, 0.0]];
        assert!(matches!(
            invert_3x3(&g),
            Err(Error::SingularNormalMatrix { .. })
        ));
    }

    #[test]
    fn lsq_mean_is_unbiased_under_noise() {
        // flat-phase scene, 200 noisy trials: the mean phase estimate at a
        // probe pixel stays within three standard errors of the truth
        let scene = make_scene(&SceneSpec::new(crate::synth::SceneKind::Tilt, 8, 8, 0.0)).unwrap();
        let steps = PhaseSteps::uniform(3).unwrap();
        let eta = 0.01;
        let trials = 200;
        let mut estimates = Vec::with_capacity(trials);
        for t in 0..trials {
            let stack = sample_fringes(
                &scene,
                &steps,
                &HarmonicSpec::none(),
                &NoiseSpec { eta, seed: 1000 + t as u64 },
            )
            .unwrap();
            let fit = lsq_demodulate(&stack, &steps).unwrap();
            estimates.push(fit.phi_hat.get(3, 3));
        }
        let mean = estimates.iter().sum::<f64>() / trials as f64;
        let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
            / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        // truth phase is 0 at every pixel
        assert!(
            mean.abs() < 3.0 * se + 1e-6,
            "mean = {mean}, se = {se}"
        );
    }

    #[test]
    fn step_estimate_is_exact_for_rotor_taps() {
        let steps = PhaseSteps::new(vec![0.0, 1.1, 2.9, 4.0]).unwrap();
        let taps: Vec<Complex64> = steps
            .values()
            .iter()
            .map(|&t| Complex64::from_polar(0.7, t + 0.4))
            .collect();
        // wrap the taps in a coefficients object via the plain constructor
        // path is unnecessary; estimate_steps reads DemodCoefficients, so
        // build one through corrected_coefficients on a synthetic basis.
        let coeffs = test_coeffs(taps);
        let est = estimate_steps(&coeffs).unwrap();
        assert!(est.surrogate);
        for (e, &t) in est.theta.iter().zip(steps.values()) {
            assert!(wrap_angle(e - t).abs() < 1e-12);
        }
    }

    #[test]
    fn step_estimate_rejects_vanishing_taps() {
        let coeffs = test_coeffs(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.3, 0.3),
        ]);
        assert!(estimate_steps(&coeffs).is_err());
    }

    // Builds a DemodCoefficients carrying arbitrary taps, using the public
    // plain-coefficients path on an identity-like basis.
    fn test_coeffs(taps: Vec<Complex64>) -> DemodCoefficients {
        use crate::matrix::SquareMatrix;
        use crate::pca::PcaBasis;
        let n = taps.len();
        let mut vectors = SquareMatrix::zeros(n);
        for (i, t) in taps.iter().enumerate() {
            vectors.set(i, 0, t.re);
            vectors.set(i, 1, t.im);
        }
        let mut eigenvalues = vec![0.0; n];
        eigenvalues[0] = 2.0;
        eigenvalues[1] = 1.0;
        let basis = PcaBasis {
            background: Image::zeros(2, 2),
            covariance: SquareMatrix::zeros(n),
            eigenvalues,
            eigenvectors: vectors,
        };
        crate::demod::plain_coefficients(&basis).unwrap()
    }

    #[test]
    fn empirical_gain_validates_inputs() {
        let scene = make_scene(&SceneSpec::tilt8(16)).unwrap();
        let steps = PhaseSteps::uniform(3).unwrap();
        let taps: Vec<Complex64> = (0..3)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * n as f64 / 3.0))
            .collect();
        assert!(empirical_snr_gain(&scene, &steps, &taps, 0.0, 100, 1).is_err());
        assert!(empirical_snr_gain(&scene, &steps, &taps, 0.01, 10, 1).is_err());
    }

    #[test]
    fn empirical_gain_matches_uniform_filter() {
        let scene = make_scene(&SceneSpec::tilt8(32)).unwrap();
        let steps = PhaseSteps::uniform(3).unwrap();
        let taps: Vec<Complex64> = (0..3)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * n as f64 / 3.0))
            .collect();
        let gain = empirical_snr_gain(&scene, &steps, &taps, 0.02, 120, 99).unwrap();
        assert!((gain - 3.0).abs() / 3.0 < 0.05, "gain = {gain}");
    }

    #[test]
    fn empirical_gain_is_invariant_to_tap_scale() {
        let scene = make_scene(&SceneSpec::tilt8(24)).unwrap();
        let steps = PhaseSteps::uniform(3).unwrap();
        let taps: Vec<Complex64> = (0..3)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * n as f64 / 3.0))
            .collect();
        let doubled: Vec<Complex64> = taps.iter().map(|c| c * 2.0).collect();
        let g1 = empirical_snr_gain(&scene, &steps, &taps, 0.02, 60, 5).unwrap();
        let g2 = empirical_snr_gain(&scene, &steps, &doubled, 0.02, 60, 5).unwrap();
        assert!((g1 - g2).abs() < 1e-9);
    }
}
