//! Helpers shared by the integration and acceptance suites.
//!
//! Each test binary compiles this module independently and uses a different
//! subset of it, hence the dead-code allowance.
#![allow(dead_code)]

use npsa_core::image::{Image, PhaseMap};
use npsa_core::numeric::wrap_angle;
use npsa_core::synth::{
    make_scene, sample_fringes, FringeStack, HarmonicSpec, NoiseSpec, PhaseSteps, Scene, SceneSpec,
};
use npsa_core::ErrorStats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The three canonical scenes at a given square size.
pub fn canonical_scenes(size: usize) -> Vec<Scene> {
    vec![
        make_scene(&SceneSpec::tilt8(size)).unwrap(),
        make_scene(&SceneSpec::sphere4(size)).unwrap(),
        make_scene(&SceneSpec::peaks(size)).unwrap(),
    ]
}

pub fn noiseless_stack(scene: &Scene, steps: &PhaseSteps) -> FringeStack {
    sample_fringes(scene, steps, &HarmonicSpec::none(), &NoiseSpec::noiseless()).unwrap()
}

/// Deterministic random step sets: 3..=8 steps drawn from [0, 2pi), total
/// span above pi, pairwise separation mod 2pi of at least 0.15.
pub fn random_step_sets(count: usize, seed: u64) -> Vec<PhaseSteps> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::with_capacity(count);
    while sets.len() < count {
        let n = rng.random_range(3..=8usize);
        let theta: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0.0..2.0 * std::f64::consts::PI))
            .collect();
        let span = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - theta.iter().cloned().fold(f64::INFINITY, f64::min);
        if span <= std::f64::consts::PI {
            continue;
        }
        let mut separated = true;
        for i in 0..n {
            for j in (i + 1)..n {
                if wrap_angle(theta[i] - theta[j]).abs() < 0.15 {
                    separated = false;
                }
            }
        }
        if !separated {
            continue;
        }
        sets.push(PhaseSteps::new(theta).unwrap());
    }
    sets
}

/// RMS difference between the measured plain-PCA error field and a
/// prediction, over valid pixels. The measured field is rebuilt from the
/// sign and piston that `phase_error` resolved.
pub fn prediction_mismatch_rms(
    est: &PhaseMap,
    truth: &Image,
    stats: &ErrorStats,
    prediction: &Image,
) -> f64 {
    let sign = if stats.conjugated { -1.0 } else { 1.0 };
    let mut sq = 0.0;
    let mut count = 0usize;
    for y in 0..truth.height() {
        for x in 0..truth.width() {
            if !est.is_valid(x, y) {
                continue;
            }
            let measured = wrap_angle(sign * est.values().get(x, y) - truth.get(x, y) - stats.piston);
            let d = wrap_angle(measured - prediction.get(x, y));
            sq += d * d;
            count += 1;
        }
    }
    (sq / count as f64).sqrt()
}

/// Smallest max deviation between estimated and true steps over a common
/// sign flip and a common offset.
pub fn step_alignment_max_dev(est: &[f64], truth: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for sign in [1.0, -1.0] {
        let diffs: Vec<f64> = est
            .iter()
            .zip(truth)
            .map(|(&e, &t)| wrap_angle(sign * e - t))
            .collect();
        let s: f64 = diffs.iter().map(|d| d.sin()).sum();
        let c: f64 = diffs.iter().map(|d| d.cos()).sum();
        let piston = s.atan2(c);
        let dev = diffs
            .iter()
            .map(|d| wrap_angle(d - piston).abs())
            .fold(0.0f64, f64::max);
        best = best.min(dev);
    }
    best
}

/// Least-squares axis-aligned ellipse fit `alpha x^2 + beta y^2 = 1`;
/// returns the y-over-x semi-axis ratio. Independent check of the measured
/// correction ratio.
pub fn ellipse_axis_ratio(points: &[(f64, f64)]) -> f64 {
    let (mut s40, mut s22, mut s04, mut s20, mut s02) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let x2 = x * x;
        let y2 = y * y;
        s40 += x2 * x2;
        s22 += x2 * y2;
        s04 += y2 * y2;
        s20 += x2;
        s02 += y2;
    }
    let det = s40 * s04 - s22 * s22;
    let alpha = (s20 * s04 - s02 * s22) / det;
    let beta = (s02 * s40 - s20 * s22) / det;
    (alpha / beta).sqrt()
}
