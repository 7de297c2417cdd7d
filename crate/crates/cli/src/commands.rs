//! Implementations of the four subcommands.

use std::path::{Path, PathBuf};

use npsa_core::demod::{lissajous, phase, phase_error};
use npsa_core::error::{Error, Result};
use npsa_core::image::Image;
use npsa_core::io::{
    self, FilterReport, FtfScalars, InputDigest, OracleReport, PhaseErrorReport, RunReport,
    StackMeta, REPORT_SCHEMA_VERSION,
};
use npsa_core::oracle::lsq_demodulate;
use npsa_core::pipeline::analyze_stack;
use npsa_core::spectral::{ftf, FtfGrid, FtfReport};
use npsa_core::synth::{
    make_scene, sample_fringes, FringeStack, NoiseSpec, PhaseSteps, SceneKind, SceneSpec,
};

use crate::config::SynthConfig;
use crate::{AnalyzeArgs, CompareArgs, DemodArgs, Mode, ReportFormat, SynthArgs};

fn default_fringes(kind: SceneKind) -> f64 {
    match kind {
        SceneKind::Tilt => 8.0,
        SceneKind::Sphere => 4.0,
        SceneKind::Peaks => 8.0,
    }
}

pub fn meta_path(stack: &Path) -> PathBuf {
    let mut name = stack.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    stack.with_file_name(name)
}

pub fn truth_path(stack: &Path) -> PathBuf {
    let mut name = stack.file_name().unwrap_or_default().to_os_string();
    name.push(".truth.f64");
    stack.with_file_name(name)
}

/// Quantizes every frame onto `2^bits` evenly spaced levels spanning the
/// stack-wide intensity range. Isolates quantization as a distortion source;
/// storage stays f64.
fn quantize_stack(stack: &FringeStack, bits: u8) -> Result<FringeStack> {
    if bits == 0 || bits > 16 {
        return Err(Error::invalid("quantize bits must be in 1..=16"));
    }
    let lo = stack.frames().iter().map(|f| f.min()).fold(f64::INFINITY, f64::min);
    let hi = stack.frames().iter().map(|f| f.max()).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(stack.clone());
    }
    let levels = ((1u32 << bits) - 1) as f64;
    let frames = stack
        .frames()
        .iter()
        .map(|f| {
            Image::from_fn(f.width(), f.height(), |x, y| {
                let t = (f.get(x, y) - lo) / (hi - lo);
                lo + (t * levels).round() / levels * (hi - lo)
            })
        })
        .collect();
    FringeStack::new(frames, stack.steps().cloned(), stack.provenance().clone())
}

pub fn cmd_synth(args: &SynthArgs, out_dir: &Path, seed: u64) -> Result<()> {
    let mut cfg = SynthConfig::default();
    if let Some(path) = &args.config {
        cfg = SynthConfig::parse(&std::fs::read_to_string(path)?)?;
    }
    let mut flags = SynthConfig {
        width: args.width,
        height: args.height,
        fringes: args.fringes,
        background: args.background,
        modulation: args.modulation,
        eta: args.eta,
        quantize_bits: args.quantize,
        ..Default::default()
    };
    if let Some(size) = args.size {
        flags.width = Some(size);
        flags.height = Some(size);
    }
    if let Some(name) = &args.scene {
        let (kind, fringes) = crate::config::parse_scene_name(name)?;
        flags.scene = Some(kind);
        if flags.fringes.is_none() {
            flags.fringes = fringes;
        }
    }
    if let Some(steps) = &args.steps {
        flags.steps = Some(crate::config::parse_step_list(steps)?);
    }
    if let Some(preset) = &args.preset {
        flags.preset = Some(preset.clone());
    }
    if let Some(harm) = &args.harmonics {
        flags.harmonics = Some(crate::config::parse_harmonics(harm)?);
    }
    let cfg = cfg.overridden_by(flags);

    let kind = cfg.scene.unwrap_or(SceneKind::Tilt);
    let spec = SceneSpec {
        kind,
        width: cfg.width.unwrap_or(256),
        height: cfg.height.unwrap_or(256),
        fringes: cfg.fringes.unwrap_or_else(|| default_fringes(kind)),
        background: cfg.background.unwrap_or(1.0),
        modulation: cfg.modulation.unwrap_or(1.0),
    };
    let scene = make_scene(&spec)?;
    let steps = cfg.resolve_steps()?;
    let harmonics = cfg.resolve_harmonics()?;
    let eta = cfg.eta.unwrap_or(0.0);
    let noise = NoiseSpec::new(eta, cfg.seed.unwrap_or(seed))?;

    let mut stack = sample_fringes(&scene, &steps, &harmonics, &noise)?;
    if let Some(bits) = cfg.quantize_bits {
        stack = quantize_stack(&stack, bits)?;
    }

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| out_dir.join("stack.npsa"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    io::write_stack(&out, &stack)?;

    if !args.no_truth {
        let truth = truth_path(&out);
        io::write_f64_image(&truth, scene.phase())?;
        let meta = StackMeta {
            schema_version: REPORT_SCHEMA_VERSION,
            scene: scene.descriptor().to_string(),
            width: scene.width(),
            height: scene.height(),
            steps: steps.values().to_vec(),
            noise_seed: if eta > 0.0 { Some(noise.seed) } else { None },
            noise_eta: eta,
            harmonics: harmonics.terms().iter().map(|h| (h.order, h.amplitude)).collect(),
            quantize_bits: cfg.quantize_bits,
            truth_path: truth
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            stack_sha256: io::file_digest(&out)?,
            truth_sha256: io::file_digest(&truth)?,
        };
        io::write_json(&meta_path(&out), &meta)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn input_digest(path: &Path, stack: &FringeStack) -> Result<InputDigest> {
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: io::file_digest(path)?,
        frames: stack.len(),
        width: stack.width(),
        height: stack.height(),
    })
}

/// Loads the ground-truth phase for a stack. An explicit `--truth` path wins
/// unconditionally. Otherwise the metadata sidecar written by synth is
/// consulted: its recorded digests must match the stack and truth files on
/// disk, so a stale or swapped stack cannot be compared against the wrong
/// reference. Without any sidecar there is no truth.
fn load_truth(stack_path: &Path, explicit: Option<&Path>, stack: &FringeStack) -> Result<Option<Image>> {
    if let Some(p) = explicit {
        return Ok(Some(io::read_f64_image(p, stack.width(), stack.height())?));
    }
    let meta_file = meta_path(stack_path);
    if !meta_file.exists() {
        let sidecar = truth_path(stack_path);
        if !sidecar.exists() {
            return Ok(None);
        }
        return Ok(Some(io::read_f64_image(&sidecar, stack.width(), stack.height())?));
    }
    let meta: StackMeta = io::read_json(&meta_file)?;
    let stack_digest = io::file_digest(stack_path)?;
    if stack_digest != meta.stack_sha256 {
        return Err(Error::format(format!(
            "stack digest {} does not match metadata {} (stale sidecar?)",
            &stack_digest[..12],
            &meta.stack_sha256[..12.min(meta.stack_sha256.len())]
        )));
    }
    let truth_file = stack_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&meta.truth_path);
    let truth_digest = io::file_digest(&truth_file)?;
    if truth_digest != meta.truth_sha256 {
        return Err(Error::format("ground-truth digest does not match metadata"));
    }
    Ok(Some(io::read_f64_image(&truth_file, stack.width(), stack.height())?))
}

fn filter_report(
    report: &FtfReport,
    field: &npsa_core::AnalyticField,
    truth: Option<&Image>,
) -> Result<FilterReport> {
    let phase_err = match truth {
        None => None,
        Some(t) => {
            let est = phase(field)?;
            let stats = phase_error(&est, t)?;
            Some(PhaseErrorReport {
                reference: "truth".into(),
                rms: stats.rms,
                max_abs: stats.max_abs,
                piston: stats.piston,
                conjugated: stats.conjugated,
            })
        }
    };
    Ok(FilterReport {
        detuning_ratio: report.detuning_ratio,
        g_snr: report.g_snr,
        r_h: report.r_h,
        phase_error: phase_err,
    })
}

fn write_report(out_dir: &Path, name: &str, format: ReportFormat, report: &RunReport) -> Result<PathBuf> {
    report.validate()?;
    let path = match format {
        ReportFormat::Json => {
            let p = out_dir.join(format!("{name}.json"));
            io::write_json(&p, report)?;
            p
        }
        ReportFormat::Csv => {
            let p = out_dir.join(format!("{name}.csv"));
            io::write_report_csv(&p, report)?;
            p
        }
    };
    Ok(path)
}

pub fn cmd_demod(args: &DemodArgs, out_dir: &Path, format: ReportFormat) -> Result<()> {
    let stack = io::read_stack(&args.stack)?;
    let run = analyze_stack(&stack)?;
    std::fs::create_dir_all(out_dir)?;

    let (coeffs, field) = match args.mode {
        Mode::Plain => (&run.plain, &run.plain_field),
        Mode::Corrected => (&run.corrected, &run.corrected_field),
    };

    let map = phase(field)?;
    io::write_f64_image(&out_dir.join("phase.f64"), map.values())?;
    io::write_phase_pgm(&out_dir.join("phase.pgm"), &map)?;
    io::write_lissajous_csv(&out_dir.join("lissajous.csv"), &lissajous(field, args.max_lissajous))?;
    io::write_covariance_csv(&out_dir.join("covariance.csv"), &run.basis.covariance)?;
    io::write_eigen_csv(
        &out_dir.join("eigen.csv"),
        &run.basis.eigenvalues,
        &run.basis.eigenvectors,
    )?;
    io::write_json(
        &out_dir.join("pca.json"),
        &io::PcaExport::new(&run.basis.covariance, &run.basis.eigenvalues, &run.basis.eigenvectors),
    )?;

    let truth = load_truth(&args.stack, args.truth.as_deref(), &stack)?;
    let mut report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: match args.mode {
            Mode::Plain => "plain".into(),
            Mode::Corrected => "corrected".into(),
        },
        input: input_digest(&args.stack, &stack)?,
        steps: stack.steps().map(|s| s.values().to_vec()),
        eigenvalues: run.basis.eigenvalues.clone(),
        rho: Some(run.rho),
        plain: None,
        corrected: None,
        oracle: None,
    };
    if let Some(steps) = stack.steps() {
        let spectral = ftf(coeffs.taps(), steps, &FtfGrid::default(), npsa_core::DEFAULT_K_MAX)?;
        let row = filter_report(&spectral, field, truth.as_ref())?;
        match args.mode {
            Mode::Plain => report.plain = Some(row),
            Mode::Corrected => report.corrected = Some(row),
        }
    }
    let path = write_report(out_dir, "report", format, &report)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Steps for analysis: the stack's own, unless the caller supplied a list.
fn resolve_analysis_steps(stack: &FringeStack, flag: Option<&str>) -> Result<PhaseSteps> {
    if let Some(text) = flag {
        return PhaseSteps::new(crate::config::parse_step_list(text)?);
    }
    stack
        .steps()
        .cloned()
        .ok_or_else(|| Error::invalid("steps required for FTF analysis: stack has none, pass --steps"))
}

pub fn cmd_analyze(args: &AnalyzeArgs, out_dir: &Path, format: ReportFormat) -> Result<()> {
    let stack = io::read_stack(&args.stack)?;
    let steps = resolve_analysis_steps(&stack, args.steps.as_deref())?;
    if steps.len() != stack.len() {
        return Err(Error::invalid(format!(
            "{} steps supplied for {} frames",
            steps.len(),
            stack.len()
        )));
    }
    let run = analyze_stack(&stack)?;
    std::fs::create_dir_all(out_dir)?;

    let coeffs = match args.mode {
        Mode::Plain => &run.plain,
        Mode::Corrected => &run.corrected,
    };
    let grid = FtfGrid::new(args.omega_max, args.omega_step)?;
    let report = ftf(coeffs.taps(), &steps, &grid, args.k_max)?;
    io::write_spectrum_csv(&out_dir.join("spectrum.csv"), &report)?;

    let scalars = FtfScalars::from_report(
        &report,
        match args.mode {
            Mode::Plain => "plain",
            Mode::Corrected => "corrected",
        },
        steps.len(),
        Some(run.rho),
    );
    let path = match format {
        ReportFormat::Json => {
            let p = out_dir.join("ftf.json");
            io::write_json(&p, &scalars)?;
            p
        }
        ReportFormat::Csv => {
            let p = out_dir.join("ftf.csv");
            io::write_report_csv(&p, &scalars)?;
            p
        }
    };
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs, out_dir: &Path, format: ReportFormat) -> Result<()> {
    let stack = io::read_stack(&args.stack)?;
    let steps = stack
        .steps()
        .cloned()
        .ok_or_else(|| Error::invalid("compare requires a stack with embedded steps"))?;
    let truth = load_truth(&args.stack, args.truth.as_deref(), &stack)?
        .ok_or_else(|| {
            Error::invalid(
                "compare requires a ground-truth phase: synth writes <stack>.truth.f64, or pass --truth",
            )
        })?;
    let run = analyze_stack(&stack)?;
    std::fs::create_dir_all(out_dir)?;

    let grid = FtfGrid::default();
    let plain_ftf = ftf(run.plain.taps(), &steps, &grid, npsa_core::DEFAULT_K_MAX)?;
    let corrected_ftf = ftf(run.corrected.taps(), &steps, &grid, npsa_core::DEFAULT_K_MAX)?;
    let plain_row = filter_report(&plain_ftf, &run.plain_field, Some(&truth))?;
    let corrected_row = filter_report(&corrected_ftf, &run.corrected_field, Some(&truth))?;

    // correcting the Lissajous figure always costs SNR on the same basis
    if plain_row.g_snr < corrected_row.g_snr {
        return Err(Error::invalid(format!(
            "internal consistency violated: plain G_SNR {} below corrected {}",
            plain_row.g_snr, corrected_row.g_snr
        )));
    }

    let fit = lsq_demodulate(&stack, &steps)?;
    let oracle_map = npsa_core::image::PhaseMap::fully_valid(fit.phi_hat.clone());
    io::write_f64_image(&out_dir.join("oracle_phase.f64"), &fit.phi_hat)?;
    io::write_phase_pgm(&out_dir.join("oracle_phase.pgm"), &oracle_map)?;
    let oracle_stats = phase_error(&oracle_map, &truth)?;

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: "compare".into(),
        input: input_digest(&args.stack, &stack)?,
        steps: Some(steps.values().to_vec()),
        eigenvalues: run.basis.eigenvalues.clone(),
        rho: Some(run.rho),
        plain: Some(plain_row),
        corrected: Some(corrected_row),
        oracle: Some(OracleReport {
            condition: fit.condition,
            phase_error: Some(PhaseErrorReport {
                reference: "truth".into(),
                rms: oracle_stats.rms,
                max_abs: oracle_stats.max_abs,
                piston: oracle_stats.piston,
                conjugated: oracle_stats.conjugated,
            }),
        }),
    };
    let path = write_report(out_dir, "report", format, &report)?;
    println!("wrote {}", path.display());
    Ok(())
}
