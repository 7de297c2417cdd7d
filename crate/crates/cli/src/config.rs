//! Plain-text `key=value` configuration for the synth command.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys are hard
//! errors so typos never silently fall back to defaults. Command-line flags
//! override file values.

use npsa_core::error::{Error, Result};
use npsa_core::synth::{Harmonic, HarmonicSpec, PhaseSteps, SceneKind};

/// Synth parameters accumulated from a config file and/or flags; unset
/// fields fall back to defaults at build time.
#[derive(Debug, Clone, Default)]
pub struct SynthConfig {
    pub scene: Option<SceneKind>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub fringes: Option<f64>,
    pub background: Option<f64>,
    pub modulation: Option<f64>,
    pub steps: Option<Vec<f64>>,
    pub preset: Option<String>,
    pub harmonics: Option<Vec<(u32, f64)>>,
    pub eta: Option<f64>,
    pub seed: Option<u64>,
    pub quantize_bits: Option<u8>,
}

impl SynthConfig {
    /// Parses the documented key set, rejecting anything else.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SynthConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let at = |e: String| Error::invalid(format!("config line {}: {e}", lineno + 1));
            match key {
                "scene" => cfg.scene = Some(parse_scene_kind(value).map_err(|e| at(e.to_string()))?),
                "size" => {
                    let v = parse_num::<usize>(key, value)?;
                    cfg.width = Some(v);
                    cfg.height = Some(v);
                }
                "width" => cfg.width = Some(parse_num(key, value)?),
                "height" => cfg.height = Some(parse_num(key, value)?),
                "fringes" => cfg.fringes = Some(parse_num(key, value)?),
                "background" => cfg.background = Some(parse_num(key, value)?),
                "modulation" => cfg.modulation = Some(parse_num(key, value)?),
                "steps" => cfg.steps = Some(parse_step_list(value)?),
                "preset" => cfg.preset = Some(value.to_string()),
                "harmonics" => cfg.harmonics = Some(parse_harmonics(value)?),
                "eta" => cfg.eta = Some(parse_num(key, value)?),
                "seed" => cfg.seed = Some(parse_num(key, value)?),
                "quantize-bits" => cfg.quantize_bits = Some(parse_num(key, value)?),
                other => {
                    return Err(at(format!("unknown config key '{other}'")));
                }
            }
        }
        Ok(cfg)
    }

    /// File values lose to explicitly supplied flag values.
    pub fn overridden_by(mut self, flags: SynthConfig) -> Self {
        macro_rules! take {
            ($field:ident) => {
                if flags.$field.is_some() {
                    self.$field = flags.$field;
                }
            };
        }
        take!(scene);
        take!(width);
        take!(height);
        take!(fringes);
        take!(background);
        take!(modulation);
        take!(steps);
        take!(preset);
        take!(harmonics);
        take!(eta);
        take!(seed);
        take!(quantize_bits);
        self
    }

    /// Resolves the step list: explicit steps win over a preset; one of the
    /// two must be present.
    pub fn resolve_steps(&self) -> Result<PhaseSteps> {
        if let Some(steps) = &self.steps {
            return PhaseSteps::new(steps.clone());
        }
        match self.preset.as_deref() {
            Some("paper3") => Ok(PhaseSteps::paper3()),
            Some("paper9") => Ok(PhaseSteps::paper9()),
            Some(other) => Err(Error::invalid(format!(
                "unknown preset '{other}' (expected paper3 or paper9)"
            ))),
            None => Err(Error::invalid("no steps given: use --steps or --preset")),
        }
    }

    pub fn resolve_harmonics(&self) -> Result<HarmonicSpec> {
        match &self.harmonics {
            None => Ok(HarmonicSpec::none()),
            Some(terms) => HarmonicSpec::new(
                terms
                    .iter()
                    .map(|&(order, amplitude)| Harmonic { order, amplitude })
                    .collect(),
            ),
        }
    }
}

pub fn parse_scene_kind(name: &str) -> Result<SceneKind> {
    match name {
        "tilt" => Ok(SceneKind::Tilt),
        "sphere" => Ok(SceneKind::Sphere),
        "peaks" => Ok(SceneKind::Peaks),
        other => Err(Error::invalid(format!(
            "unknown scene '{other}' (expected tilt, sphere, or peaks; \
             canonical forms tilt-8 and sphere-4 carry a fringe count)"
        ))),
    }
}

/// Accepts `tilt`, `sphere`, `peaks`, or `kind-N` with a fringe count.
pub fn parse_scene_name(name: &str) -> Result<(SceneKind, Option<f64>)> {
    if let Some((kind, count)) = name.split_once('-') {
        let fringes: f64 = count
            .parse()
            .map_err(|_| Error::invalid(format!("bad fringe count in scene '{name}'")))?;
        return Ok((parse_scene_kind(kind)?, Some(fringes)));
    }
    Ok((parse_scene_kind(name)?, None))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value '{value}' for {key}")))
}

pub fn parse_step_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad step value '{}'", s.trim())))
        })
        .collect()
}

/// `"2:0.5,3:0.1"` -> [(2, 0.5), (3, 0.1)].
pub fn parse_harmonics(text: &str) -> Result<Vec<(u32, f64)>> {
    text.split(',')
        .map(|term| {
            let (k, amp) = term
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad harmonic term '{term}', expected k:amplitude")))?;
            let order: u32 = k
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad harmonic order '{}'", k.trim())))?;
            let amplitude: f64 = amp
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad harmonic amplitude '{}'", amp.trim())))?;
            Ok((order, amplitude))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let cfg = SynthConfig::parse(
            "# demo\nscene = sphere\nsize = 128\nfringes = 4\npreset = paper3\n\
             harmonics = 2:0.5, 3:0.1\neta = 0.01\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.scene, Some(SceneKind::Sphere));
        assert_eq!(cfg.width, Some(128));
        assert_eq!(cfg.height, Some(128));
        assert_eq!(cfg.fringes, Some(4.0));
        assert_eq!(cfg.harmonics.as_deref(), Some(&[(2, 0.5), (3, 0.1)][..]));
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.resolve_steps().unwrap().values(), &[0.0, 1.49, 5.13]);
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let err = SynthConfig::parse("scnee = tilt\n").unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
    }

    #[test]
    fn explicit_steps_beat_preset() {
        let mut cfg = SynthConfig::parse("preset = paper9\n").unwrap();
        cfg.steps = Some(vec![0.0, 1.0, 2.0]);
        assert_eq!(cfg.resolve_steps().unwrap().len(), 3);
    }

    #[test]
    fn flags_override_file_values() {
        let file = SynthConfig::parse("size = 64\nfringes = 2\n").unwrap();
        let flags = SynthConfig { fringes: Some(9.0), ..Default::default() };
        let merged = file.overridden_by(flags);
        assert_eq!(merged.width, Some(64));
        assert_eq!(merged.fringes, Some(9.0));
    }

    #[test]
    fn scene_names_with_fringe_counts() {
        assert_eq!(
            parse_scene_name("tilt-8").unwrap(),
            (SceneKind::Tilt, Some(8.0))
        );
        assert_eq!(parse_scene_name("peaks").unwrap(), (SceneKind::Peaks, None));
        assert!(parse_scene_name("swirl").is_err());
    }
}
