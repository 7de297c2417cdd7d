//! Benchmark fixtures: canonical stacks sized for repeatable timing runs.

use npsa_core::synth::{
    make_scene, sample_fringes, FringeStack, HarmonicSpec, NoiseSpec, PhaseSteps, SceneSpec,
};

/// Noiseless canonical tilt stack at the given size and step preset.
pub fn tilt_stack(size: usize, nine_steps: bool) -> FringeStack {
    let scene = make_scene(&SceneSpec::tilt8(size)).expect("canonical scene");
    let steps = if nine_steps { PhaseSteps::paper9() } else { PhaseSteps::paper3() };
    sample_fringes(&scene, &steps, &HarmonicSpec::none(), &NoiseSpec::noiseless())
        .expect("synthesis")
}
