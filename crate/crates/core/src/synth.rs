//! Ground-truth scene generation and nonuniform phase-shifted sampling.
//!
//! A scene is a background image `a`, a modulation image `b`, and an
//! unwrapped phase image `phi`. Sampling evaluates
//!
//! ```text
//! I_n = a + b cos(phi + theta_n) + sum_k b b_k cos(k phi + k theta_n) + AWGN
//! ```
//!
//! at a list of phase steps `theta_n`. The noise stream is derived per
//! (seed, frame, pixel), so parallel and serial synthesis are bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numeric::{sample_seed, wrap_angle};

/// Analytic shape of the ground-truth phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Linear ramp along x: `phi = 2 pi f x / width`. Constant modulation.
    Tilt,
    /// Quadratic bowl around the image center, normalized on the grid so the
    /// phase spans exactly `2 pi f`, and modulated by a circular pupil
    /// (b = 0 outside the inscribed circle).
    Sphere,
    /// Tilt carrier of `f` fringes plus a smooth multi-lobed bump of fixed
    /// amplitude (two fringes), normalized from a sum of Gaussian lobes.
    Peaks,
}

impl SceneKind {
    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::Tilt => "tilt",
            SceneKind::Sphere => "sphere",
            SceneKind::Peaks => "peaks",
        }
    }
}

/// Extra fringes contributed by the bump of a [`SceneKind::Peaks`] scene.
pub const PEAKS_DEVIATION_CYCLES: f64 = 2.0;

/// Parameters accepted by [`make_scene`].
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    /// Number of spatial fringes across the field.
    pub fringes: f64,
    /// Constant background level.
    pub background: f64,
    /// Constant modulation level (apodized by the pupil for `Sphere`).
    pub modulation: f64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, width: usize, height: usize, fringes: f64) -> Self {
        Self { kind, width, height, fringes, background: 1.0, modulation: 1.0 }
    }

    /// Canonical tilt scene: 8 fringes, unit background and modulation.
    pub fn tilt8(size: usize) -> Self {
        Self::new(SceneKind::Tilt, size, size, 8.0)
    }

    /// Canonical sphere scene: 4 fringes center-to-corner, circular pupil.
    pub fn sphere4(size: usize) -> Self {
        Self::new(SceneKind::Sphere, size, size, 4.0)
    }

    /// Canonical peaks scene: 8 carrier fringes plus the two-fringe bump.
    pub fn peaks(size: usize) -> Self {
        Self::new(SceneKind::Peaks, size, size, 8.0)
    }

    /// Short descriptor recorded as provenance, e.g. `tilt-8@256x256`.
    pub fn descriptor(&self) -> String {
        format!("{}-{}@{}x{}", self.kind.name(), self.fringes, self.width, self.height)
    }
}

/// Ground truth: background, modulation, and unwrapped phase rasters.
#[derive(Debug, Clone)]
pub struct Scene {
    a: Image,
    b: Image,
    phi: Image,
    descriptor: String,
}

impl Scene {
    /// Builds a scene from explicit rasters. All three must share dimensions
    /// and the modulation must be non-negative everywhere.
    pub fn from_parts(a: Image, b: Image, phi: Image, descriptor: impl Into<String>) -> Result<Self> {
        if !a.same_dims(&b) || !a.same_dims(&phi) {
            return Err(Error::invalid("scene rasters must share dimensions"));
        }
        if b.as_slice().iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("modulation must be finite and non-negative"));
        }
        Ok(Self { a, b, phi, descriptor: descriptor.into() })
    }

    pub fn background(&self) -> &Image {
        &self.a
    }

    pub fn modulation(&self) -> &Image {
        &self.b
    }

    pub fn phase(&self) -> &Image {
        &self.phi
    }

    pub fn width(&self) -> usize {
        self.phi.width()
    }

    pub fn height(&self) -> usize {
        self.phi.height()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }
}

/// Ordered list of phase steps, at least three of which are distinct mod 2pi.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSteps(Vec<f64>);

impl PhaseSteps {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 3 {
            return Err(Error::invalid(format!("need >= 3 steps, got {}", theta.len())));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("steps must be finite"));
        }
        // Count equivalence classes mod 2pi; a per-pixel three-parameter fit
        // is underdetermined with fewer than three distinct steps.
        let mut reps: Vec<f64> = Vec::new();
        for &t in &theta {
            if !reps.iter().any(|&r| wrap_angle(t - r).abs() <= 1e-12) {
                reps.push(t);
            }
        }
        if reps.len() < 3 {
            return Err(Error::invalid(format!(
                "need >= 3 pairwise-distinct steps mod 2pi, got {} distinct",
                reps.len()
            )));
        }
        Ok(Self(theta))
    }

    /// Bundled 3-step preset: {0, 1.49, 5.13} radians.
    pub fn paper3() -> Self {
        Self(vec![0.0, 1.49, 5.13])
    }

    /// Bundled 9-step preset:
    /// {0, 1.13, 2.49, 1.52, 3.55, 3.78, 6.2, 6.42, 8.74} radians.
    pub fn paper9() -> Self {
        Self(vec![0.0, 1.13, 2.49, 1.52, 3.55, 3.78, 6.2, 6.42, 8.74])
    }

    /// Uniformly spaced steps `2 pi n / count`.
    pub fn uniform(count: usize) -> Result<Self> {
        Self::new((0..count).map(|n| 2.0 * PI * n as f64 / count as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One distortion term: `b b_k cos(k phi + k theta_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub order: u32,
    /// Amplitude as a fraction of the fundamental modulation.
    pub amplitude: f64,
}

/// Set of harmonic distortion terms. Empty means a pure sinusoid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HarmonicSpec(Vec<Harmonic>);

impl HarmonicSpec {
    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn new(terms: Vec<Harmonic>) -> Result<Self> {
        for (i, h) in terms.iter().enumerate() {
            if h.order < 2 {
                return Err(Error::invalid("harmonic order must be >= 2"));
            }
            if !h.amplitude.is_finite() {
                return Err(Error::invalid("harmonic amplitude must be finite"));
            }
            if terms[..i].iter().any(|o| o.order == h.order) {
                return Err(Error::invalid(format!("duplicate harmonic order {}", h.order)));
            }
        }
        Ok(Self(terms))
    }

    pub fn single(order: u32, amplitude: f64) -> Result<Self> {
        Self::new(vec![Harmonic { order, amplitude }])
    }

    pub fn terms(&self) -> &[Harmonic] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Additive white Gaussian noise settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Noise variance per pixel per frame; 0 disables noise.
    pub eta: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self { eta: 0.0, seed: 0 }
    }

    pub fn new(eta: f64, seed: u64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid("noise variance must be finite and >= 0"));
        }
        Ok(Self { eta, seed })
    }
}

/// Where a stack came from; stored next to the frames, not in the binary
/// stack format itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub scene: Option<String>,
    pub noise_seed: Option<u64>,
}

/// N co-registered intensity frames plus, when known, the steps that
/// produced them.
#[derive(Debug, Clone)]
pub struct FringeStack {
    frames: Vec<Image>,
    steps: Option<PhaseSteps>,
    provenance: Provenance,
}

impl FringeStack {
    pub fn new(frames: Vec<Image>, steps: Option<PhaseSteps>, provenance: Provenance) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("stack must contain at least one frame"));
        }
        if frames.iter().any(|f| !f.same_dims(&frames[0])) {
            return Err(Error::invalid("all frames must share dimensions"));
        }
        if let Some(s) = &steps {
            if s.len() != frames.len() {
                return Err(Error::invalid(format!(
                    "stack holds {} frames but {} steps",
                    frames.len(),
                    s.len()
                )));
            }
        }
        Ok(Self { frames, steps, provenance })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> &Image {
        &self.frames[n]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn pixels(&self) -> usize {
        self.frames[0].len()
    }

    pub fn steps(&self) -> Option<&PhaseSteps> {
        self.steps.as_ref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// Builds the ground-truth scene described by `spec`.
pub fn make_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.width < 2 || spec.height < 2 {
        return Err(Error::invalid("scene dimensions must be at least 2x2"));
    }
    if !(spec.fringes >= 0.0) || !spec.fringes.is_finite() {
        return Err(Error::invalid("fringe count must be finite and >= 0"));
    }
    if spec.modulation < 0.0 {
        return Err(Error::invalid("modulation must be >= 0"));
    }
    if !spec.background.is_finite() || !spec.modulation.is_finite() {
        return Err(Error::invalid("background and modulation must be finite"));
    }

    let (w, h) = (spec.width, spec.height);
    let a = Image::from_fn(w, h, |_, _| spec.background);

    let (b, phi) = match spec.kind {
        SceneKind::Tilt => {
            let b = Image::from_fn(w, h, |_, _| spec.modulation);
            let phi = Image::from_fn(w, h, |x, _| 2.0 * PI * spec.fringes * x as f64 / w as f64);
            (b, phi)
        }
        SceneKind::Sphere => {
            let cx = (w as f64 - 1.0) / 2.0;
            let cy = (h as f64 - 1.0) / 2.0;
            let r2 = Image::from_fn(w, h, |x, y| {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                dx * dx + dy * dy
            });
            let (lo, hi) = (r2.min(), r2.max());
            let span = hi - lo;
            let phi = if span > 0.0 {
                Image::from_fn(w, h, |x, y| 2.0 * PI * spec.fringes * (r2.get(x, y) - lo) / span)
            } else {
                Image::zeros(w, h)
            };
            let pupil2 = cx.min(cy).powi(2);
            let b = Image::from_fn(w, h, |x, y| if r2.get(x, y) <= pupil2 { spec.modulation } else { 0.0 });
            (b, phi)
        }
        SceneKind::Peaks => {
            let bump = Image::from_fn(w, h, |x, y| {
                let u = 6.0 * x as f64 / (w as f64 - 1.0) - 3.0;
                let v = 6.0 * y as f64 / (h as f64 - 1.0) - 3.0;
                peaks_fn(u, v)
            });
            let (lo, hi) = (bump.min(), bump.max());
            let span = hi - lo;
            let phi = Image::from_fn(w, h, |x, y| {
                let carrier = 2.0 * PI * spec.fringes * x as f64 / w as f64;
                let dev = if span > 0.0 {
                    2.0 * PI * PEAKS_DEVIATION_CYCLES * (bump.get(x, y) - lo) / span
                } else {
                    0.0
                };
                carrier + dev
            });
            let b = Image::from_fn(w, h, |_, _| spec.modulation);
            (b, phi)
        }
    };

    Scene::from_parts(a, b, phi, spec.descriptor())
}

/// Classic three-lobe test surface built from Gaussian bumps.
fn peaks_fn(x: f64, y: f64) -> f64 {
    3.0 * (1.0 - x).powi(2) * (-x * x - (y + 1.0) * (y + 1.0)).exp()
        - 10.0 * (x / 5.0 - x.powi(3) - y.powi(5)) * (-x * x - y * y).exp()
        - (-(x + 1.0) * (x + 1.0) - y * y).exp() / 3.0
}

/// Samples `scene` at the given steps with optional harmonic distortion and
/// additive white Gaussian noise.
pub fn sample_fringes(
    scene: &Scene,
    steps: &PhaseSteps,
    harmonics: &HarmonicSpec,
    noise: &NoiseSpec,
) -> Result<FringeStack> {
    if !(noise.eta >= 0.0) || !noise.eta.is_finite() {
        return Err(Error::invalid("noise variance must be finite and >= 0"));
    }
    let w = scene.width();
    let h = scene.height();
    let sigma = noise.eta.sqrt();

    let frames: Vec<Image> = steps
        .values()
        .iter()
        .enumerate()
        .map(|(n, &theta)| {
            let mut frame = Image::zeros(w, h);
            let a = scene.background().as_slice();
            let b = scene.modulation().as_slice();
            let phi = scene.phase().as_slice();
            frame
                .as_mut_slice()
                .par_chunks_mut(w)
                .enumerate()
                .for_each(|(y, row)| {
                    for (x, out) in row.iter_mut().enumerate() {
                        let idx = y * w + x;
                        let mut v = a[idx] + b[idx] * (phi[idx] + theta).cos();
                        for term in harmonics.terms() {
                            let k = term.order as f64;
                            v += b[idx] * term.amplitude * (k * phi[idx] + k * theta).cos();
                        }
                        if sigma > 0.0 {
                            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(
                                noise.seed, n as u64, idx as u64,
                            ));
                            let g: f64 = StandardNormal.sample(&mut rng);
                            v += sigma * g;
                        }
                        *out = v;
                    }
                });
            frame
        })
        .collect();

    FringeStack::new(
        frames,
        Some(steps.clone()),
        Provenance {
            scene: Some(scene.descriptor().to_string()),
            noise_seed: if noise.eta > 0.0 { Some(noise.seed) } else { None },
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tilt_phase_matches_formula() {
        let scene = make_scene(&SceneSpec::new(SceneKind::Tilt, 256, 256, 8.0)).unwrap();
        for &(x, y) in &[(0usize, 0usize), (17, 200), (255, 5)] {
            let want = 2.0 * PI * 8.0 * x as f64 / 256.0;
            assert!((scene.phase().get(x, y) - want).abs() < 1e-12);
            assert_eq!(scene.background().get(x, y), 1.0);
            assert_eq!(scene.modulation().get(x, y), 1.0);
        }
    }

    #[test]
    fn zero_fringes_tilt_is_flat() {
        let scene = make_scene(&SceneSpec::new(SceneKind::Tilt, 16, 16, 0.0)).unwrap();
        assert!(scene.phase().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sphere_spans_exactly_requested_cycles() {
        let scene = make_scene(&SceneSpec::new(SceneKind::Sphere, 128, 128, 4.0)).unwrap();
        let span = scene.phase().max() - scene.phase().min();
        assert!((span - 2.0 * PI * 4.0).abs() < 1e-9, "span = {span}");
    }

    #[test]
    fn sphere_pupil_masks_corners() {
        let scene = make_scene(&SceneSpec::sphere4(64)).unwrap();
        assert_eq!(scene.modulation().get(0, 0), 0.0);
        assert_eq!(scene.modulation().get(32, 32), 1.0);
    }

    #[test]
    fn rejects_bad_scene_requests() {
        assert!(make_scene(&SceneSpec::new(SceneKind::Tilt, 1, 8, 4.0)).is_err());
        let mut spec = SceneSpec::new(SceneKind::Tilt, 8, 8, 4.0);
        spec.modulation = -0.5;
        assert!(make_scene(&spec).is_err());
    }

    #[test]
    fn sampling_matches_hand_values() {
        // a=1, b=1, phi=0 at x=0: theta=0 -> 2, theta=pi -> 0.
        let scene = make_scene(&SceneSpec::new(SceneKind::Tilt, 4, 4, 0.0)).unwrap();
        let steps = PhaseSteps::new(vec![0.0, PI, 1.0]).unwrap();
        let stack =
            sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless()).unwrap();
        assert!((stack.frame(0).get(0, 0) - 2.0).abs() < 1e-15);
        assert!(stack.frame(1).get(0, 0).abs() < 1e-15);
    }

    #[test]
    fn harmonic_term_adds_at_zero_argument() {
        let scene = make_scene(&SceneSpec::new(SceneKind::Tilt, 4, 4, 0.0)).unwrap();
        let steps = PhaseSteps::new(vec![0.0, 1.0, 2.0]).unwrap();
        let harm = HarmonicSpec::single(2, 0.5).unwrap();
        let stack = sample_fringes(&scene, &steps, &harm, &NoiseSpec::noiseless()).unwrap();
        // 1 + cos(0) + 0.5 cos(0) = 2.5
        assert!((stack.frame(0).get(0, 0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn noiseless_sampling_is_deterministic() {
        let scene = make_scene(&SceneSpec::tilt8(32)).unwrap();
        let steps = PhaseSteps::paper3();
        let s1 = sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless()).unwrap();
        let s2 = sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless()).unwrap();
        for (f1, f2) in s1.frames().iter().zip(s2.frames()) {
            assert_eq!(f1.as_slice(), f2.as_slice());
        }
    }

    #[test]
    fn seeded_noise_reproduces_and_seed_changes_frames() {
        let scene = make_scene(&SceneSpec::tilt8(32)).unwrap();
        let steps = PhaseSteps::paper3();
        let n1 = NoiseSpec::new(0.05, 7).unwrap();
        let s1 = sample_fringes(&scene, &steps, &HarmonicSpec::none(), &n1).unwrap();
        let s2 = sample_fringes(&scene, &steps, &HarmonicSpec::none(), &n1).unwrap();
        let s3 = sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::new(0.05, 8).unwrap()).unwrap();
        for (f1, f2) in s1.frames().iter().zip(s2.frames()) {
            assert_eq!(f1.as_slice(), f2.as_slice());
        }
        assert_ne!(s1.frame(0).as_slice(), s3.frame(0).as_slice());
        assert_eq!(s1.provenance().noise_seed, Some(7));
    }

    #[test]
    fn uniform_step_mean_recovers_background() {
        // sum_n cos(phi + 2 pi n / N) = 0, so the frame mean is exactly a.
        let scene = make_scene(&SceneSpec::tilt8(32)).unwrap();
        let steps = PhaseSteps::uniform(3).unwrap();
        let stack =
            sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless()).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let mean: f64 =
                    stack.frames().iter().map(|f| f.get(x, y)).sum::<f64>() / 3.0;
                assert!((mean - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn intensity_stays_within_model_bounds() {
        let scene = make_scene(&SceneSpec::tilt8(16)).unwrap();
        let harm = HarmonicSpec::single(3, 0.25).unwrap();
        let bound = 1.0 + 1.0 * (1.0 + 0.25);
        for theta in (0..200).map(|i| i as f64 * 0.05) {
            let steps = PhaseSteps::new(vec![theta, theta + 1.0, theta + 2.0]).unwrap();
            let stack = sample_fringes(&scene, &steps, &harm, &NoiseSpec::noiseless()).unwrap();
            let f = stack.frame(0);
            assert!(f.min() >= 1.0 - bound - 1e-12);
            assert!(f.max() <= 1.0 + bound + 1e-12);
        }
    }

    #[test]
    fn step_validation() {
        assert!(PhaseSteps::new(vec![0.0]).is_err());
        assert!(PhaseSteps::new(vec![0.0, 1.0]).is_err());
        // three values but only two classes mod 2pi
        assert!(PhaseSteps::new(vec![0.0, 1.0, 2.0 * PI]).is_err());
        assert!(PhaseSteps::new(vec![0.0, 1.0, 2.0]).is_ok());
        assert_eq!(PhaseSteps::paper3().values(), &[0.0, 1.49, 5.13]);
        assert_eq!(PhaseSteps::paper9().len(), 9);
    }

    #[test]
    fn harmonic_validation() {
        assert!(HarmonicSpec::single(1, 0.1).is_err());
        assert!(HarmonicSpec::new(vec![
            Harmonic { order: 2, amplitude: 0.1 },
            Harmonic { order: 2, amplitude: 0.2 },
        ])
        .is_err());
        assert!(HarmonicSpec::none().is_empty());
    }
}
